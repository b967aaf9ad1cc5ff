#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "medsurv/survdata.hpp"

namespace medsurv {

/// Right-continuous non-increasing step function starting at 1. Only times
/// at which the value drops are stored.
class StepFunction {
 public:
  StepFunction() = default;
  StepFunction(std::vector<double> jump_times, std::vector<double> values);

  double operator()(double t) const noexcept;

  std::span<const double> jump_times() const noexcept { return times_; }
  std::span<const double> values() const noexcept { return values_; }
  bool empty() const noexcept { return times_.empty(); }

  /// Smallest value attained; 1 for the constant function.
  double min_value() const noexcept { return times_.empty() ? 1.0 : values_.back(); }

  /// inf{t >= 0 : S(t) <= level} for level in [0, 1]. Level 1 maps to the
  /// time origin. Empty when the curve never gets down to the level.
  std::optional<double> inverse(double level) const noexcept;

  /// One "time,value" row per jump, preceded by the 0,1 origin.
  void write_csv(std::ostream& out) const;

  /// Rebuilds in place from observations sorted by (time, events first);
  /// reuses the existing storage.
  void assign_kaplan_meier(std::span<const double> times, std::span<const std::uint8_t> events);

 private:
  std::vector<double> times_;
  std::vector<double> values_;
};

struct QuantileResult {
  std::optional<double> value;
  double level;

  bool exists() const noexcept { return value.has_value(); }
};

/// Observations of one sample split into parallel arrays and sorted by time,
/// with events placed before censorings at equal times.
struct SortedSample {
  std::vector<double> times;
  std::vector<std::uint8_t> events;

  std::size_t size() const noexcept { return times.size(); }
};

SortedSample sort_sample(const SurvivalSample& sample);
SortedSample sort_sample(std::span<const Observation> observations);

/// Kaplan-Meier product-limit estimate. At a time with d events and Y
/// subjects at risk the curve is multiplied by (1 - d/Y).
StepFunction km_estimate(const SurvivalSample& sample);
StepFunction km_estimate(std::span<const double> times, std::span<const std::uint8_t> events);

/// inf{t : S(t) <= q}; throws std::invalid_argument unless 0 < q < 1.
QuantileResult km_quantile(const StepFunction& curve, double q);

/// n * sum over event times s <= t of d(s) / Y(s)^2: the variance of the
/// normalised Nelson-Aalen estimator at t.
double nelson_aalen_variance(const SurvivalSample& sample, double t);
double nelson_aalen_variance(std::span<const double> times, std::span<const std::uint8_t> events,
                             double t);

/// Kaplan-Meier median of all groups pooled together.
QuantileResult pooled_km_median(const FactorialDataset& data);

}  // namespace medsurv
