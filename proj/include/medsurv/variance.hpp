#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "medsurv/estimator.hpp"
#include "medsurv/survdata.hpp"

namespace medsurv {

double normal_cdf(double x) noexcept;
/// 1 - Phi(x), accurate in the far upper tail.
double normal_sf(double x) noexcept;
/// Phi^{-1}(p); throws std::invalid_argument unless 0 < p < 1.
double normal_quantile(double p);
/// z_alpha = Phi^{-1}(1 - alpha), evaluated without forming 1 - alpha.
double normal_upper_quantile(double alpha);

/// Interval strategy used to estimate the standard deviation of the median.
enum class SigmaMethod { one_sided, two_sided };

/// What was actually computed; two_sided falls back to two_sided_adjusted
/// when the curve never reaches the lower level.
enum class SigmaKind { two_sided, two_sided_adjusted, one_sided };

std::string_view to_string(SigmaMethod method) noexcept;
std::string_view to_string(SigmaKind kind) noexcept;
SigmaMethod parse_sigma_method(std::string_view text);

inline constexpr double default_gamma = 0.10;

struct IntervalLevels {
  double lower;
  double upper;
  double nelson_aalen;  ///< V evaluated at the estimated median
};

struct SigmaEstimate {
  double sigma;
  SigmaKind method;
  double gamma_used;
  double lower;
  double upper;
};

/// Levels 0.5 (1 -/+ z_{gamma/2} sqrt(V/n)) clipped to [0, 1].
IntervalLevels interval_levels(const SurvivalSample& sample, double gamma);

/// Solves the lower-level definition for gamma given the level actually
/// reached: 2 (1 - Phi((1 - 2 l) / sqrt(V/n))).
double adaptive_gamma(double l_tilde, double nelson_aalen, std::size_t n);

SigmaEstimate sigma_two_sided(const SurvivalSample& sample, double gamma);
SigmaEstimate sigma_one_sided(const SurvivalSample& sample, double gamma);
SigmaEstimate estimate_sigma(const SurvivalSample& sample, SigmaMethod method, double gamma);

/// Median and interval-based sigma of one group. Status is reported instead of
/// thrown so resampling loops can skip failed draws cheaply.
struct GroupFit {
  enum class Status { ok, median_absent, degenerate };

  Status status = Status::ok;
  double median = 0.0;
  SigmaEstimate sigma{};

  bool ok() const noexcept { return status == Status::ok; }
};

/// Fits a group given observations sorted by sort_sample's order. `curve` is
/// scratch storage reused between calls.
GroupFit fit_group(std::span<const double> times, std::span<const std::uint8_t> events,
                   SigmaMethod method, double gamma, StepFunction& curve);

/// Throwing wrapper; EstimationError names the sample's label.
GroupFit fit_group(const SurvivalSample& sample, SigmaMethod method, double gamma);

}  // namespace medsurv
