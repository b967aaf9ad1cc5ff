#include "medsurv/permutation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "medsurv/errors.hpp"
#include "medsurv/parallel.hpp"
#include "resampling.hpp"

namespace medsurv {

namespace detail {

void draw_permutation(std::vector<std::size_t>& permutation, std::size_t n, CounterRng& rng) {
  permutation.resize(n);
  std::iota(permutation.begin(), permutation.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(permutation[i - 1], permutation[j]);
  }
}

ResamplingEngine::ResamplingEngine(const FactorialDataset& data, const WaldForm& form)
    : form_(form), sizes_(data.group_sizes()) {
  if (static_cast<Eigen::Index>(data.group_count()) != form.groups())
    throw DataError("projection matrix does not match the number of groups");
  struct Entry {
    double time;
    std::uint8_t event;
    std::size_t pooled;
  };
  std::vector<Entry> entries;
  entries.reserve(data.total_size());
  for (std::size_t g = 0; g < data.group_count(); ++g)
    for (const auto& o : data.group(g).observations()) {
      block_.push_back(static_cast<std::uint32_t>(g));
      entries.push_back({o.time, static_cast<std::uint8_t>(o.is_event() ? 1 : 0), entries.size()});
    }
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.time != b.time) return a.time < b.time;
    return a.event > b.event;
  });
  for (const auto& e : entries) {
    times_.push_back(e.time);
    events_.push_back(e.event);
    source_.push_back(e.pooled);
  }
}

std::optional<double> ResamplingEngine::evaluate(SigmaMethod method, double gamma,
                                                 Scratch& s) const {
  const std::size_t k = sizes_.size();
  s.medians.resize(k);
  s.sigmas.resize(k);
  for (std::size_t g = 0; g < k; ++g) {
    const auto fit = fit_group(s.times[g], s.events[g], method, gamma, s.curve);
    if (!fit.ok()) return std::nullopt;
    s.medians[g] = fit.median;
    s.sigmas[g] = fit.sigma.sigma;
  }
  const double w = form_(s.medians, s.sigmas, sizes_);
  if (!std::isfinite(w)) return std::nullopt;
  return w;
}

namespace {

void reset_groups(ResamplingEngine::Scratch& s, std::size_t k) {
  s.times.resize(k);
  s.events.resize(k);
  for (std::size_t g = 0; g < k; ++g) {
    s.times[g].clear();
    s.events[g].clear();
  }
}

}  // namespace

std::optional<double> ResamplingEngine::observed(SigmaMethod method, double gamma,
                                                 Scratch& s) const {
  reset_groups(s, sizes_.size());
  for (std::size_t i = 0; i < times_.size(); ++i) {
    const auto g = block_[source_[i]];
    s.times[g].push_back(times_[i]);
    s.events[g].push_back(events_[i]);
  }
  return evaluate(method, gamma, s);
}

std::optional<double> ResamplingEngine::draw(CounterRng& rng, SigmaMethod method, double gamma,
                                             Scratch& s) const {
  const std::size_t n = times_.size();
  draw_permutation(s.permutation, n, rng);
  // Position j of the permuted pool belongs to block_[j]; it holds the pooled
  // observation permutation[j].
  s.label.resize(n);
  for (std::size_t j = 0; j < n; ++j) s.label[s.permutation[j]] = block_[j];
  reset_groups(s, sizes_.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = s.label[source_[i]];
    s.times[g].push_back(times_[i]);
    s.events[g].push_back(events_[i]);
  }
  return evaluate(method, gamma, s);
}

PermutationDistribution ResamplingEngine::distribution(SigmaMethod method, double gamma,
                                                       const PermutationPlan& plan) const {
  if (plan.draws == 0) throw DataError("permutation plan needs at least one draw");
  if (!(plan.max_discard_fraction >= 0.0 && plan.max_discard_fraction < 1.0))
    throw DataError("max_discard_fraction must lie in [0, 1)");

  const std::size_t b_total = plan.draws;
  std::vector<double> raw(b_total, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::size_t> failures(b_total, 0);
  const std::size_t attempts = plan.policy == DiscardPolicy::redraw ? max_redraw_attempts : 1;

  parallel_for(b_total, plan.threads, [&](std::size_t b) {
    thread_local Scratch scratch;
    for (std::size_t a = 0; a < attempts; ++a) {
      CounterRng rng(plan.seed, b, a);
      if (const auto w = draw(rng, method, gamma, scratch)) {
        raw[b] = *w;
        return;
      }
      ++failures[b];
    }
  });

  PermutationDistribution dist;
  dist.values.reserve(b_total);
  for (std::size_t b = 0; b < b_total; ++b) {
    dist.discarded += failures[b];
    if (!std::isnan(raw[b])) dist.values.push_back(raw[b]);
  }
  const std::size_t tried = dist.discarded + dist.values.size();
  if ((plan.policy == DiscardPolicy::redraw && dist.values.size() < b_total) ||
      static_cast<double>(dist.discarded) > plan.max_discard_fraction * static_cast<double>(tried))
    throw EstimationError({}, "permutation: " + std::to_string(dist.discarded) + " of " +
                                  std::to_string(tried) +
                                  " draws had a group without median or with degenerate sigma "
                                  "(limit " + std::to_string(plan.max_discard_fraction) + ")");
  return dist;
}

}  // namespace detail

// ---------------------------------------------------------------------------

FactorialDataset permute_groups(const FactorialDataset& data, CounterRng& rng) {
  std::vector<Observation> pooled;
  pooled.reserve(data.total_size());
  for (const auto& g : data.groups())
    pooled.insert(pooled.end(), g.observations().begin(), g.observations().end());
  std::vector<std::size_t> permutation;
  detail::draw_permutation(permutation, pooled.size(), rng);

  std::vector<SurvivalSample> groups;
  std::size_t offset = 0;
  for (const auto& g : data.groups()) {
    std::vector<Observation> obs;
    obs.reserve(g.size());
    for (std::size_t j = offset; j < offset + g.size(); ++j) obs.push_back(pooled[permutation[j]]);
    offset += g.size();
    groups.emplace_back(std::move(obs), g.label());
  }
  return FactorialDataset(std::move(groups), data.layout());
}

PermutationDistribution permutation_distribution(const FactorialDataset& data,
                                                 const Eigen::MatrixXd& projection, double gamma,
                                                 SigmaMethod method, const PermutationPlan& plan) {
  const WaldForm form(projection);
  const detail::ResamplingEngine engine(data, form);
  return engine.distribution(method, gamma, plan);
}

PermutationDistribution permutation_distribution(const FactorialDataset& data,
                                                 const HypothesisSpec& spec, double gamma,
                                                 SigmaMethod method, const PermutationPlan& plan) {
  return permutation_distribution(data, projection(hypothesis_matrix(spec, data.layout())), gamma,
                                  method, plan);
}

double permutation_quantile(const PermutationDistribution& dist, double alpha) {
  if (dist.values.empty()) throw DataError("permutation distribution is empty");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw DataError("alpha must lie in [0, 1)");
  const auto b = dist.values.size();
  auto index = static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(b) - 1e-9));
  index = std::clamp<std::size_t>(index, 1, b);
  std::vector<double> sorted = dist.values;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(index - 1),
                   sorted.end());
  return sorted[index - 1];
}

TestResult permutation_test(const FactorialDataset& data, const Eigen::MatrixXd& projection,
                            double gamma, SigmaMethod method, double alpha,
                            const PermutationPlan& plan, PermutationDistribution* distribution_out) {
  TestResult result = asymptotic_test(data, projection, gamma, method, alpha);

  const WaldForm form(projection);
  const detail::ResamplingEngine engine(data, form);
  detail::ResamplingEngine::Scratch scratch;
  // Compare draws against the observed statistic evaluated by the same route.
  const auto observed = engine.observed(method, gamma, scratch);
  if (!observed) throw EstimationError({}, "observed statistic could not be computed");

  auto dist = engine.distribution(method, gamma, plan);
  const auto exceed = static_cast<std::size_t>(
      std::count_if(dist.values.begin(), dist.values.end(),
                    [&](double w) { return w >= *observed; }));
  // Level 0 never rejects; the Monte Carlo maximum is not an upper bound.
  const double critical = alpha == 0.0 ? std::numeric_limits<double>::infinity()
                                        : permutation_quantile(dist, alpha);

  result.p_permutation = static_cast<double>(1 + exceed) / static_cast<double>(dist.effective() + 1);
  result.critical_value = critical;
  result.decision = *observed > critical ? Decision::reject : Decision::retain;
  result.permutation = PermutationSummary{plan.seed, plan.draws, dist.effective(), dist.discarded,
                                          critical};
  if (distribution_out) *distribution_out = std::move(dist);
  return result;
}

TestResult permutation_test(const FactorialDataset& data, const HypothesisSpec& spec, double gamma,
                            SigmaMethod method, double alpha, const PermutationPlan& plan,
                            PermutationDistribution* distribution_out) {
  auto result = permutation_test(data, projection(hypothesis_matrix(spec, data.layout())), gamma,
                                 method, alpha, plan, distribution_out);
  result.hypothesis = spec.describe();
  return result;
}

void write_permutation_csv(std::ostream& out, const PermutationDistribution& dist) {
  const auto precision = out.precision(17);
  for (const double w : dist.values) out << w << '\n';
  out.precision(precision);
}

}  // namespace medsurv
