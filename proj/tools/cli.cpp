#include "cli.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "medsurv/contrasts.hpp"
#include "medsurv/distribution.hpp"
#include "medsurv/errors.hpp"
#include "medsurv/permutation.hpp"
#include "medsurv/simulation.hpp"
#include "medsurv/survdata.hpp"
#include "medsurv/wald.hpp"

namespace medsurv::cli {

namespace {

struct TestOptions {
  std::string input;
  std::string time_column = "time";
  std::string status_column = "status";
  std::string factors;
  std::string hypothesis = "equality";
  double gamma = default_gamma;
  std::string sigma_method = "one-sided";
  double alpha = 0.05;
  std::size_t permutations = 1999;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string format = "text";
  bool no_permutation = false;
  std::string dump_matrices;
  std::string dump_permutation;
  std::optional<double> jitter;
};

struct SimulateOptions {
  std::string scenario_file;
  std::string output;
  std::string json;
  std::optional<std::size_t> replications;
  std::optional<std::size_t> permutations;
  std::optional<unsigned> threads;
  bool quiet = false;
};

struct CalibrateOptions {
  std::string distribution;
  double rate = 0.0;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  const char* env = std::getenv("MEDSURV_SEED");
  if (!env || !*env) return 0;
  const std::string_view text(env);
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw DataError("MEDSURV_SEED='" + std::string(text) + "' is not an unsigned integer");
  return value;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

std::string format_value(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::setprecision(10) << x;
  return s.str();
}

// setw counts bytes; labels such as "a1×b1" are UTF-8.
std::string pad(const std::string& text, std::size_t width) {
  std::size_t chars = 0;
  for (const unsigned char c : text)
    if ((c & 0xC0) != 0x80) ++chars;
  return chars >= width ? text + " " : text + std::string(width - chars, ' ');
}

void print_text(std::ostream& out, const TestResult& r) {
  out << "hypothesis: " << r.hypothesis << '\n';
  out << std::left << std::setw(12) << "group" << std::setw(8) << "n" << std::setw(18) << "median"
      << std::setw(18) << "sigma" << std::setw(20) << "sigma_method"
      << "gamma_used\n";
  for (const auto& g : r.groups)
    out << pad(g.label, 12) << std::setw(8) << g.n << std::setw(18) << format_value(g.median)
        << std::setw(18) << format_value(g.sigma) << std::setw(20) << to_string(g.sigma_method)
        << format_value(g.gamma_used) << '\n';
  out << std::right;
  out << "statistic: " << format_value(r.statistic) << '\n';
  out << "df: " << r.df << '\n';
  out << "p_asymptotic: " << format_value(r.p_asymptotic) << '\n';
  if (r.p_permutation) out << "p_permutation: " << format_value(*r.p_permutation) << '\n';
  if (r.permutation) {
    const auto& p = *r.permutation;
    out << "permutations: " << p.permutations << " (effective " << p.effective << ", discarded "
        << p.discarded << ", seed " << p.seed << ")\n";
  }
  out << "alpha: " << format_value(r.alpha) << '\n';
  out << "critical_value: " << format_value(r.critical_value)
      << (r.permutation ? " (permutation)" : " (chi-square)") << '\n';
  out << "decision: " << to_string(r.decision) << '\n';
}

int cmd_test(const TestOptions& o, std::ostream& out) {
  if (!(o.gamma > 0.0 && o.gamma < 1.0)) throw DataError("--gamma must lie in (0, 1)");
  if (!(o.alpha >= 0.0 && o.alpha < 1.0)) throw DataError("--alpha must lie in [0, 1)");
  if (o.permutations == 0) throw DataError("--B must be positive");

  std::ifstream in(o.input);
  if (!in) throw DataError("cannot open input '" + o.input + "'");
  CsvConfig config{o.time_column, o.status_column, split_list(o.factors)};
  auto data = parse_csv(in, config);
  const auto seed = resolve_seed(o.seed);
  if (o.jitter) data = jitter_ties(data, *o.jitter, seed);

  const auto spec = parse_hypothesis(o.hypothesis);
  const auto method = parse_sigma_method(o.sigma_method);
  const Eigen::MatrixXd h = hypothesis_matrix(spec, data.layout());
  const Eigen::MatrixXd t = projection(h);
  if (!o.dump_matrices.empty()) {
    auto hf = open_output(o.dump_matrices + "H.csv");
    write_matrix_csv(hf, h);
    auto tf = open_output(o.dump_matrices + "T.csv");
    write_matrix_csv(tf, t);
  }

  TestResult result;
  if (o.no_permutation) {
    result = asymptotic_test(data, t, o.gamma, method, o.alpha);
  } else {
    PermutationPlan plan;
    plan.draws = o.permutations;
    plan.seed = seed;
    plan.threads = o.threads;
    PermutationDistribution dist;
    result = permutation_test(data, t, o.gamma, method, o.alpha, plan, &dist);
    if (!o.dump_permutation.empty()) {
      auto pf = open_output(o.dump_permutation);
      write_permutation_csv(pf, dist);
    }
  }
  result.hypothesis = spec.describe();

  if (o.format == "json") out << to_json(result).dump(2) << '\n';
  else print_text(out, result);
  return exit_ok;
}

int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err) {
  std::ifstream in(o.scenario_file);
  if (!in) throw DataError("cannot open scenario file '" + o.scenario_file + "'");
  std::vector<std::string> warnings;
  auto scenarios = parse_scenarios(in, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << '\n';

  std::vector<StudyResult> results;
  for (auto& s : scenarios) {
    if (o.replications) s.replications = *o.replications;
    if (o.permutations) s.permutations = *o.permutations;
    if (o.threads) s.threads = *o.threads;
    s.validate();
    std::size_t last_percent = 101;
    ProgressCallback progress;
    if (!o.quiet)
      progress = [&, name = s.name](std::size_t done, std::size_t total) {
        const std::size_t percent = 100 * done / total;
        if (percent != last_percent && (percent % 10 == 0 || done == total)) {
          err << "[" << name << "] " << done << "/" << total << " replications\n";
          last_percent = percent;
        }
      };
    if (s.deltas.empty()) {
      results.push_back(run_type1_study(s, progress));
    } else {
      auto grid = run_power_study(s, {}, progress);
      results.insert(results.end(), grid.begin(), grid.end());
    }
  }

  if (o.output.empty()) {
    write_study_csv(out, results);
  } else {
    auto f = open_output(o.output);
    write_study_csv(f, results);
  }
  if (!o.json.empty()) {
    nlohmann::json summary = nlohmann::json::array();
    for (const auto& r : results) summary.push_back(to_json(r));
    auto f = open_output(o.json);
    f << summary.dump(2) << '\n';
  }
  return exit_ok;
}

int cmd_calibrate(const CalibrateOptions& o, std::ostream& out) {
  const auto dist = parse_distribution(o.distribution);
  const double u = calibrate_censoring(dist, o.rate);
  out << std::setprecision(6) << u << '\n';
  return exit_ok;
}

}  // namespace

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Wald-type and permutation tests for median survival in factorial designs", "medsurv"};
  app.require_subcommand(1);

  TestOptions test;
  auto* t = app.add_subcommand("test", "Test a hypothesis about group medians in a CSV file");
  t->add_option("--input", test.input, "CSV file with time, status and factor columns")->required();
  t->add_option("--time-col", test.time_column, "Name of the time column")->capture_default_str();
  t->add_option("--status-col", test.status_column, "Name of the status column (1 = event)")
      ->capture_default_str();
  t->add_option("--factors", test.factors, "Comma-separated factor columns");
  t->add_option("--hypothesis", test.hypothesis,
                "equality | interaction | main-effect:<factor> | custom:<matrix.csv>")
      ->capture_default_str();
  t->add_option("--gamma", test.gamma, "Level of the quantile interval behind sigma")
      ->capture_default_str();
  t->add_option("--sigma-method", test.sigma_method, "one-sided | two-sided")->capture_default_str();
  t->add_option("--alpha", test.alpha, "Significance level")->capture_default_str();
  t->add_option("--B", test.permutations, "Number of permutation draws")->capture_default_str();
  t->add_option("--seed", test.seed, "Seed (default: MEDSURV_SEED, else 0)");
  t->add_option("--threads", test.threads, "Worker threads, 0 = one per core")->capture_default_str();
  t->add_option("--format", test.format, "Output format")
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();
  t->add_flag("--no-permutation", test.no_permutation, "Asymptotic test only");
  t->add_option("--dump-matrices", test.dump_matrices, "Write <prefix>H.csv and <prefix>T.csv");
  t->add_option("--dump-permutation", test.dump_permutation, "Write the permutation statistics");
  t->add_option("--jitter", test.jitter, "Break tied times with Uniform(-eps, eps) noise");

  SimulateOptions sim;
  auto* s = app.add_subcommand("simulate", "Run type-1 error or power studies from a scenario file");
  s->add_option("scenario", sim.scenario_file, "Scenario file")->required();
  s->add_option("--output", sim.output, "CSV output file (default: standard output)");
  s->add_option("--json", sim.json, "JSON summary file");
  s->add_option("--replications", sim.replications, "Override the replication count");
  s->add_option("--B", sim.permutations, "Override the number of permutation draws");
  s->add_option("--threads", sim.threads, "Override the worker threads, 0 = one per core");
  s->add_flag("--quiet", sim.quiet, "No progress output");

  CalibrateOptions cal;
  auto* c = app.add_subcommand("calibrate", "Find the Unif[0, U] censoring endpoint for a target rate");
  c->add_option("distribution", cal.distribution, "Survival law, e.g. exp:1 or weib:2,0.85")->required();
  c->add_option("--cr", cal.rate, "Target censoring rate in (0, 1)")->required();

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return exit_input;
  }

  try {
    if (t->parsed()) return cmd_test(test, out);
    if (s->parsed()) return cmd_simulate(sim, out, err);
    if (c->parsed()) return cmd_calibrate(cal, out);
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return exit_input;
  } catch (const EstimationError& e) {
    err << "estimation error: " << e.what() << '\n';
    return exit_estimation;
  } catch (const InfeasibleScenario& e) {
    err << "infeasible scenario: " << e.what() << '\n';
    return exit_infeasible;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_failure;
  }
  return exit_failure;
}

}  // namespace medsurv::cli
