#include "medsurv/simulation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>

#include "medsurv/errors.hpp"
#include "medsurv/estimator.hpp"
#include "medsurv/parallel.hpp"
#include "medsurv/permutation.hpp"
#include "medsurv/wald.hpp"
#include "resampling.hpp"

namespace medsurv {

std::string TestMethod::name() const {
  return std::string(permutation ? "perm-" : "asy-") +
         (sigma == SigmaMethod::one_sided ? "one" : "two");
}

TestMethod parse_test_method(std::string_view text) {
  for (const auto& m : all_test_methods())
    if (m.name() == text) return m;
  throw DataError("unknown test method '" + std::string(text) +
                  "' (expected perm-one, perm-two, asy-one or asy-two)");
}

std::vector<TestMethod> all_test_methods() {
  return {{true, SigmaMethod::one_sided},
          {true, SigmaMethod::two_sided},
          {false, SigmaMethod::one_sided},
          {false, SigmaMethod::two_sided}};
}

void Scenario::validate() const {
  const auto k = layout.cells();
  const auto where = "scenario '" + name + "': ";
  if (distributions.size() != k)
    throw DataError(where + "needs " + std::to_string(k) + " distributions, found " +
                    std::to_string(distributions.size()));
  if (censoring_rates.size() != k)
    throw DataError(where + "needs " + std::to_string(k) + " censoring rates, found " +
                    std::to_string(censoring_rates.size()));
  if (sizes.size() != k)
    throw DataError(where + "needs " + std::to_string(k) + " sample sizes, found " +
                    std::to_string(sizes.size()));
  for (const double cr : censoring_rates)
    if (!(cr >= 0.0 && cr < 1.0)) throw DataError(where + "censoring rates must lie in [0, 1)");
  for (const auto n : sizes)
    if (n < 2) throw DataError(where + "every group needs at least 2 observations");
  if (methods.empty()) throw DataError(where + "no test methods selected");
  if (!(gamma > 0.0 && gamma < 1.0)) throw DataError(where + "gamma must lie in (0, 1)");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw DataError(where + "alpha must lie in [0, 1)");
  if (replications == 0) throw DataError(where + "replications must be positive");
  if (permutations == 0) throw DataError(where + "permutations must be positive");
  for (const auto g : shift_groups)
    if (g >= k) throw DataError(where + "shift group " + std::to_string(g + 1) + " does not exist");
  for (const double d : deltas)
    if (!(d >= 0.0 && std::isfinite(d))) throw DataError(where + "shifts must be non-negative");
  if (rank(projection(hypothesis_matrix(hypothesis, layout))) == 0)
    throw DataError(where + "hypothesis matrix has rank 0");
}

FactorialDataset simulate_dataset(const Scenario& scenario, std::span<const double> censoring_upper,
                                  double delta, CounterRng& rng) {
  const auto k = scenario.layout.cells();
  if (censoring_upper.size() != k) throw DataError("one censoring endpoint per group is required");
  std::vector<SurvivalSample> groups;
  groups.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const bool shifted = delta != 0.0 && std::find(scenario.shift_groups.begin(),
                                                   scenario.shift_groups.end(),
                                                   i) != scenario.shift_groups.end();
    const double offset = shifted ? delta : 0.0;
    const auto& law = scenario.distributions[i];
    const double u = censoring_upper[i];
    std::vector<Observation> obs(scenario.sizes[i]);
    for (auto& o : obs) {
      const double t = law.sample(rng) + offset;
      const double c = std::isfinite(u) ? offset + u * rng.uniform()
                                        : std::numeric_limits<double>::infinity();
      o.time = std::min(t, c);
      o.status = t <= c ? Status::event : Status::censored;
    }
    groups.emplace_back(std::move(obs), scenario.layout.cell_name(i));
  }
  return FactorialDataset(std::move(groups), scenario.layout);
}

std::vector<double> calibrate_scenario(const Scenario& scenario) {
  std::vector<double> upper;
  upper.reserve(scenario.censoring_rates.size());
  for (std::size_t i = 0; i < scenario.censoring_rates.size(); ++i) {
    const double cr = scenario.censoring_rates[i];
    upper.push_back(cr == 0.0 ? std::numeric_limits<double>::infinity()
                              : calibrate_censoring(scenario.distributions.at(i), cr));
  }
  return upper;
}

// ---------------------------------------------------------------------------

namespace {

enum class Outcome : std::uint8_t { retain, reject, failure };

struct Replication {
  bool excluded = false;
  std::vector<Outcome> outcomes;
};

bool medians_exist(const FactorialDataset& data) {
  StepFunction curve;
  for (const auto& g : data.groups()) {
    const auto sorted = sort_sample(g);
    curve.assign_kaplan_meier(sorted.times, sorted.events);
    if (!curve.inverse(0.5)) return false;
  }
  return true;
}

StudyResult run_study(const Scenario& scenario, std::span<const double> upper, double delta,
                      const WaldForm& form, double chi_critical, const ProgressCallback& progress,
                      std::size_t progress_offset, std::size_t progress_total) {
  const std::size_t reps = scenario.replications;
  std::vector<Replication> results(reps);
  std::mutex progress_mutex;
  std::size_t done = 0;

  parallel_for(reps, scenario.threads, [&](std::size_t r) {
    CounterRng rng(scenario.seed, r);
    const auto data = simulate_dataset(scenario, upper, delta, rng);
    auto& out = results[r];
    if (!medians_exist(data)) {
      out.excluded = true;
    } else {
      const detail::ResamplingEngine engine(data, form);
      thread_local detail::ResamplingEngine::Scratch scratch;
      out.outcomes.resize(scenario.methods.size(), Outcome::failure);
      for (std::size_t j = 0; j < scenario.methods.size(); ++j) {
        const auto& method = scenario.methods[j];
        const auto observed = engine.observed(method.sigma, scenario.gamma, scratch);
        if (!observed) continue;
        if (!method.permutation) {
          out.outcomes[j] = *observed > chi_critical ? Outcome::reject : Outcome::retain;
          continue;
        }
        if (scenario.alpha == 0.0) {
          out.outcomes[j] = Outcome::retain;
          continue;
        }
        PermutationPlan plan;
        plan.draws = scenario.permutations;
        plan.seed = mix64(mix64(scenario.seed ^ 0x5bd1e995ULL) + r) + j;
        plan.threads = 1;
        try {
          const auto dist = engine.distribution(method.sigma, scenario.gamma, plan);
          const double critical = permutation_quantile(dist, scenario.alpha);
          out.outcomes[j] = *observed > critical ? Outcome::reject : Outcome::retain;
        } catch (const EstimationError&) {
          // discard overflow: counted as a failure of this method only
        }
      }
    }
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(progress_offset + ++done, progress_total);
    }
  });

  StudyResult study;
  study.scenario = scenario.name;
  study.delta = delta;
  study.replications = reps;
  for (const auto& m : scenario.methods) study.rates.push_back({m});
  for (const auto& rep : results) {
    if (rep.excluded) {
      ++study.excluded;
      continue;
    }
    for (std::size_t j = 0; j < rep.outcomes.size(); ++j) {
      auto& rate = study.rates[j];
      switch (rep.outcomes[j]) {
        case Outcome::failure: ++rate.failures; break;
        case Outcome::reject: ++rate.rejections; [[fallthrough]];
        case Outcome::retain: ++rate.evaluated; break;
      }
    }
  }
  if (2 * study.excluded > reps)
    throw InfeasibleScenario("scenario '" + scenario.name + "': " + std::to_string(study.excluded) +
                             " of " + std::to_string(reps) +
                             " replications had a group without a median");
  for (auto& rate : study.rates) {
    if (rate.evaluated == 0) {
      rate.rate = rate.standard_error = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const auto n = static_cast<double>(rate.evaluated);
    rate.rate = static_cast<double>(rate.rejections) / n;
    rate.standard_error = std::sqrt(rate.rate * (1.0 - rate.rate) / n);
  }
  return study;
}

std::vector<StudyResult> run_grid(const Scenario& scenario, std::span<const double> deltas,
                                  const ProgressCallback& progress) {
  scenario.validate();
  const auto upper = calibrate_scenario(scenario);
  const Eigen::MatrixXd t = projection(hypothesis_matrix(scenario.hypothesis, scenario.layout));
  const WaldForm form(t);
  const double chi_critical = chi_square_quantile(scenario.alpha, static_cast<int>(rank(t)));
  std::vector<StudyResult> out;
  const std::size_t total = deltas.size() * scenario.replications;
  for (std::size_t i = 0; i < deltas.size(); ++i)
    out.push_back(run_study(scenario, upper, deltas[i], form, chi_critical, progress,
                            i * scenario.replications, total));
  return out;
}

}  // namespace

StudyResult run_type1_study(const Scenario& scenario, const ProgressCallback& progress) {
  const double zero = 0.0;
  return run_grid(scenario, std::span(&zero, 1), progress).front();
}

std::vector<StudyResult> run_power_study(const Scenario& scenario, std::span<const double> deltas,
                                         const ProgressCallback& progress) {
  if (deltas.empty()) deltas = scenario.deltas;
  if (deltas.empty()) throw DataError("scenario '" + scenario.name + "': the shift grid is empty");
  return run_grid(scenario, deltas, progress);
}

void write_study_csv(std::ostream& out, std::span<const StudyResult> results) {
  const auto precision = out.precision(10);
  out << "scenario,method,delta,replications,excluded,evaluated,rejections,failures,rate,se\n";
  for (const auto& s : results)
    for (const auto& r : s.rates)
      out << s.scenario << ',' << r.method.name() << ',' << s.delta << ',' << s.replications << ','
          << s.excluded << ',' << r.evaluated << ',' << r.rejections << ',' << r.failures << ','
          << r.rate << ',' << r.standard_error << '\n';
  out.precision(precision);
}

nlohmann::json to_json(const StudyResult& result) {
  using nlohmann::json;
  const auto number = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  json methods = json::array();
  for (const auto& r : result.rates)
    methods.push_back({{"method", r.method.name()},
                       {"evaluated", r.evaluated},
                       {"rejections", r.rejections},
                       {"failures", r.failures},
                       {"rate", number(r.rate)},
                       {"se", number(r.standard_error)}});
  return {{"scenario", result.scenario},
          {"delta", result.delta},
          {"replications", result.replications},
          {"excluded", result.excluded},
          {"methods", std::move(methods)}};
}

// ---------------------------------------------------------------------------

std::optional<std::vector<std::size_t>> named_sizes(std::string_view name) {
  std::size_t factor = 1;
  if (name.starts_with("2")) {
    factor = 2;
    name.remove_prefix(1);
  }
  std::vector<std::size_t> sizes;
  if (name == "n1") sizes = {12, 12, 12, 12};
  else if (name == "n2") sizes = {16, 11, 7, 14};
  else if (name == "n3") sizes = {10, 10, 10, 10, 10, 10};
  else if (name == "n4") sizes = {8, 10, 12, 8, 10, 12};
  else return std::nullopt;
  for (auto& n : sizes) n *= factor;
  return sizes;
}

std::optional<std::vector<double>> named_censoring(std::string_view name) {
  if (name == "cr1") return std::vector{0.07, 0.12, 0.12, 0.07};
  if (name == "cr2") return std::vector{0.29, 0.38, 0.25, 0.35};
  if (name == "cr3") return std::vector{0.12, 0.38, 0.07, 0.29};
  if (name == "cr4") return std::vector{0.15, 0.2, 0.25, 0.15, 0.2, 0.25};
  if (name == "cr5") return std::vector{0.3, 0.25, 0.2, 0.3, 0.25, 0.2};
  if (name == "cr6") return std::vector{0.05, 0.1, 0.15, 0.2, 0.15, 0.1};
  return std::nullopt;
}

namespace {

struct Entry {
  std::string value;
  std::size_t line = 0;
};

using Section = std::map<std::string, Entry, std::less<>>;

std::string trimmed(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Whitespace-separated tokens; whitespace inside parentheses is kept.
std::vector<std::string> tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  int depth = 0;
  for (const char c : text) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if ((c == ' ' || c == '\t') && depth == 0) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current += c;
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

// Numbers separated by whitespace and/or commas.
std::vector<std::string> number_tokens(std::string_view text) {
  std::string spaced(text);
  std::replace(spaced.begin(), spaced.end(), ',', ' ');
  return tokens(spaced);
}

class SectionReader {
 public:
  SectionReader(const Section& section, std::string name)
      : section_(section), name_(std::move(name)) {}

  const Entry* find(std::string_view key) const {
    const auto it = section_.find(key);
    return it == section_.end() ? nullptr : &it->second;
  }

  [[noreturn]] void fail(const Entry& e, const std::string& message) const {
    throw DataError("scenario '" + name_ + "', line " + std::to_string(e.line) + ": " + message);
  }

  template <class T>
  T number(const Entry& e, std::string_view text) const {
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
      fail(e, "'" + std::string(text) + "' is not a valid number");
    return value;
  }

  template <class T>
  std::vector<T> numbers(const Entry& e) const {
    std::vector<T> out;
    for (const auto& t : number_tokens(e.value)) out.push_back(number<T>(e, t));
    if (out.empty()) fail(e, "expected at least one number");
    return out;
  }

 private:
  const Section& section_;
  std::string name_;
};

FactorialLayout parse_layout(const SectionReader& reader, const Entry& e) {
  std::string text = e.value;
  const auto times = text.find("×");
  if (times != std::string::npos) text.replace(times, std::string("×").size(), "x");
  const auto x = text.find('x');
  if (x == std::string::npos) {
    const auto k = reader.number<std::size_t>(e, text);
    if (k < 2) reader.fail(e, "a one-way layout needs at least 2 groups");
    return FactorialLayout::one_way(k);
  }
  const auto a = reader.number<std::size_t>(e, trimmed(std::string_view(text).substr(0, x)));
  const auto b = reader.number<std::size_t>(e, trimmed(std::string_view(text).substr(x + 1)));
  if (a < 2 || b < 2) reader.fail(e, "each factor needs at least 2 levels");
  return FactorialLayout::two_way(a, b);
}

std::vector<SurvivalDistribution> mix_setting(std::size_t cells) {
  const auto e = SurvivalDistribution::standard_exponential();
  const auto w = SurvivalDistribution::standard_weibull();
  const auto l = SurvivalDistribution::standard_lognormal();
  using D = SurvivalDistribution;
  if (cells == 4) return {e, w, l, D::mixture({e, w, l})};
  if (cells == 6) return {e, w, l, D::mixture({e, l}), D::mixture({e, w}), D::mixture({w, l})};
  throw DataError("the 'mix' setting is defined for 2x2 and 2x3 layouts only");
}

Scenario build_scenario(const std::string& name, const Section& section,
                        std::vector<std::string>* warnings) {
  static const std::vector<std::string> known = {
      "layout",  "distributions", "censoring",    "sizes", "hypothesis", "methods",
      "gamma",   "alpha",         "permutations", "replications", "seed", "shift_groups",
      "deltas",  "threads"};
  const SectionReader reader(section, name);
  for (const auto& [key, entry] : section)
    if (std::find(known.begin(), known.end(), key) == known.end())
      reader.fail(entry, "unknown key '" + key + "'");

  Scenario s;
  s.name = name;
  if (const auto* e = reader.find("layout")) s.layout = parse_layout(reader, *e);
  const auto k = s.layout.cells();

  const auto* dists = reader.find("distributions");
  if (!dists) throw DataError("scenario '" + name + "': missing key 'distributions'");
  try {
    const auto list = tokens(dists->value);
    if (list.size() == 1 && list[0] == "mix") {
      s.distributions = mix_setting(k);
    } else if (list.size() == 1) {
      s.distributions.assign(k, parse_distribution(list[0]));
    } else {
      for (const auto& t : list) s.distributions.push_back(parse_distribution(t));
    }
  } catch (const DataError& err) {
    reader.fail(*dists, err.what());
  }

  if (const auto* e = reader.find("censoring")) {
    const auto v = trimmed(e->value);
    if (v == "none") s.censoring_rates.assign(k, 0.0);
    else if (auto named = named_censoring(v)) s.censoring_rates = *named;
    else {
      s.censoring_rates = reader.numbers<double>(*e);
      if (s.censoring_rates.size() == 1) s.censoring_rates.assign(k, s.censoring_rates[0]);
    }
  } else {
    s.censoring_rates.assign(k, 0.0);
  }

  const auto* sizes = reader.find("sizes");
  if (!sizes) throw DataError("scenario '" + name + "': missing key 'sizes'");
  if (auto named = named_sizes(trimmed(sizes->value))) s.sizes = *named;
  else {
    s.sizes = reader.numbers<std::size_t>(*sizes);
    if (s.sizes.size() == 1) s.sizes.assign(k, s.sizes[0]);
  }

  if (const auto* e = reader.find("hypothesis")) {
    try {
      s.hypothesis = parse_hypothesis(trimmed(e->value));
    } catch (const DataError& err) {
      reader.fail(*e, err.what());
    }
  }
  if (const auto* e = reader.find("methods")) {
    const auto list = tokens(e->value);
    if (!(list.size() == 1 && list[0] == "all")) {
      s.methods.clear();
      try {
        for (const auto& t : list) s.methods.push_back(parse_test_method(t));
      } catch (const DataError& err) {
        reader.fail(*e, err.what());
      }
    }
  }
  if (const auto* e = reader.find("gamma")) s.gamma = reader.number<double>(*e, trimmed(e->value));
  if (const auto* e = reader.find("alpha")) s.alpha = reader.number<double>(*e, trimmed(e->value));
  if (const auto* e = reader.find("permutations"))
    s.permutations = reader.number<std::size_t>(*e, trimmed(e->value));
  if (const auto* e = reader.find("replications"))
    s.replications = reader.number<std::size_t>(*e, trimmed(e->value));
  if (const auto* e = reader.find("threads"))
    s.threads = reader.number<unsigned>(*e, trimmed(e->value));
  if (const auto* e = reader.find("seed")) {
    s.seed = reader.number<std::uint64_t>(*e, trimmed(e->value));
  } else if (warnings) {
    warnings->push_back("scenario '" + name + "': no seed given, using 0");
  }
  if (const auto* e = reader.find("shift_groups")) {
    s.shift_groups.clear();
    for (const auto g : reader.numbers<std::size_t>(*e)) {
      if (g == 0) reader.fail(*e, "shift groups are numbered from 1");
      s.shift_groups.push_back(g - 1);
    }
  }
  if (const auto* e = reader.find("deltas")) s.deltas = reader.numbers<double>(*e);

  s.validate();
  return s;
}

}  // namespace

std::vector<Scenario> parse_scenarios(std::istream& in, std::vector<std::string>* warnings) {
  Section defaults;
  std::vector<std::pair<std::string, Section>> sections;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto text = trimmed(line);
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']' || text.size() < 3)
        throw DataError("line " + std::to_string(number) + ": malformed section header");
      sections.emplace_back(trimmed(std::string_view(text).substr(1, text.size() - 2)), defaults);
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw DataError("line " + std::to_string(number) + ": expected 'key = value'");
    const auto key = trimmed(std::string_view(text).substr(0, eq));
    const auto value = trimmed(std::string_view(text).substr(eq + 1));
    if (key.empty()) throw DataError("line " + std::to_string(number) + ": empty key");
    auto& target = sections.empty() ? defaults : sections.back().second;
    target[key] = Entry{value, number};
  }
  if (sections.empty()) {
    if (defaults.empty()) throw DataError("scenario file is empty");
    sections.emplace_back("default", defaults);
  }
  std::vector<Scenario> out;
  for (const auto& [name, section] : sections) out.push_back(build_scenario(name, section, warnings));
  return out;
}

}  // namespace medsurv
