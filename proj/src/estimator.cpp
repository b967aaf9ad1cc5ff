#include "medsurv/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace medsurv {

namespace {

// Kaplan-Meier values are products of ratios; a level such as 1/2 that the
// curve hits exactly in rational arithmetic must not be missed by rounding.
constexpr double level_slack = 1e-12;

}  // namespace

StepFunction::StepFunction(std::vector<double> jump_times, std::vector<double> values)
    : times_(std::move(jump_times)), values_(std::move(values)) {
  if (times_.size() != values_.size())
    throw std::invalid_argument("step function: times and values differ in length");
  double prev_t = 0.0, prev_v = 1.0;
  for (std::size_t i = 0; i < times_.size(); ++i) {
    if (!(times_[i] > prev_t) || !std::isfinite(times_[i]))
      throw std::invalid_argument("step function: jump times must be positive and increasing");
    if (!(values_[i] >= 0.0) || values_[i] > prev_v)
      throw std::invalid_argument("step function: values must be non-increasing in [0, 1]");
    prev_t = times_[i];
    prev_v = values_[i];
  }
}

double StepFunction::operator()(double t) const noexcept {
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return 1.0;
  return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

std::optional<double> StepFunction::inverse(double level) const noexcept {
  if (level >= 1.0) return 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (values_[i] <= level + level_slack) return times_[i];
  return std::nullopt;
}

void StepFunction::write_csv(std::ostream& out) const {
  const auto precision = out.precision(17);
  out << "time,value\n0,1\n";
  for (std::size_t i = 0; i < times_.size(); ++i) out << times_[i] << ',' << values_[i] << '\n';
  out.precision(precision);
}

void StepFunction::assign_kaplan_meier(std::span<const double> times,
                                       std::span<const std::uint8_t> events) {
  times_.clear();
  values_.clear();
  const std::size_t n = times.size();
  // Between censorings the product of (Y - d) / Y telescopes, so the curve is
  // base * Y_now / Y_segment_start. Without censoring this is exactly
  // (n - events so far) / n.
  std::size_t at_risk = n;
  std::size_t segment_risk = n;
  double base = 1.0;
  double current = 1.0;
  std::size_t i = 0;
  while (i < n) {
    const double t = times[i];
    std::size_t deaths = 0, censored = 0;
    while (i < n && times[i] == t) {
      if (events[i]) ++deaths;
      else ++censored;
      ++i;
    }
    if (deaths > 0) {
      at_risk -= deaths;
      current = at_risk == 0 ? 0.0
                             : base * (static_cast<double>(at_risk) /
                                       static_cast<double>(segment_risk));
      times_.push_back(t);
      values_.push_back(current);
    }
    if (censored > 0) {
      at_risk -= censored;
      base = current;
      segment_risk = at_risk;
    }
  }
}

// ---------------------------------------------------------------------------

SortedSample sort_sample(std::span<const Observation> observations) {
  std::vector<Observation> obs(observations.begin(), observations.end());
  std::sort(obs.begin(), obs.end(), [](const Observation& a, const Observation& b) {
    if (a.time != b.time) return a.time < b.time;
    return a.is_event() && !b.is_event();
  });
  SortedSample s;
  s.times.reserve(obs.size());
  s.events.reserve(obs.size());
  for (const auto& o : obs) {
    s.times.push_back(o.time);
    s.events.push_back(o.is_event() ? 1 : 0);
  }
  return s;
}

SortedSample sort_sample(const SurvivalSample& sample) {
  return sort_sample(std::span<const Observation>(sample.observations()));
}

StepFunction km_estimate(std::span<const double> times, std::span<const std::uint8_t> events) {
  StepFunction curve;
  curve.assign_kaplan_meier(times, events);
  return curve;
}

StepFunction km_estimate(const SurvivalSample& sample) {
  const auto sorted = sort_sample(sample);
  return km_estimate(sorted.times, sorted.events);
}

QuantileResult km_quantile(const StepFunction& curve, double q) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("quantile level must lie in (0, 1)");
  return {curve.inverse(q), q};
}

double nelson_aalen_variance(std::span<const double> times, std::span<const std::uint8_t> events,
                             double t) {
  const std::size_t n = times.size();
  double sum = 0.0;
  std::size_t i = 0;
  while (i < n && times[i] <= t) {
    const double s = times[i];
    const auto at_risk = static_cast<double>(n - i);
    std::size_t deaths = 0;
    while (i < n && times[i] == s) {
      deaths += events[i];
      ++i;
    }
    sum += static_cast<double>(deaths) / (at_risk * at_risk);
  }
  return static_cast<double>(n) * sum;
}

double nelson_aalen_variance(const SurvivalSample& sample, double t) {
  const auto sorted = sort_sample(sample);
  return nelson_aalen_variance(sorted.times, sorted.events, t);
}

QuantileResult pooled_km_median(const FactorialDataset& data) {
  std::vector<Observation> pooled;
  pooled.reserve(data.total_size());
  for (const auto& g : data.groups())
    pooled.insert(pooled.end(), g.observations().begin(), g.observations().end());
  const auto sorted = sort_sample(std::span<const Observation>(pooled));
  return km_quantile(km_estimate(sorted.times, sorted.events), 0.5);
}

}  // namespace medsurv
