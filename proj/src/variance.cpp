#include "medsurv/variance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "medsurv/errors.hpp"

namespace medsurv {

double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_sf(double x) noexcept { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

namespace {

double normal_pdf(double x) noexcept {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

// Lower-tail quantile for 0 < p <= 0.5. Starts from the Abramowitz-Stegun
// rational approximation (|error| < 4.5e-4) and polishes with Halley steps on
// erfc, which is accurate to a few ulps in the lower tail.
double lower_tail_quantile(double p) noexcept {
  const double t = std::sqrt(-2.0 * std::log(p));
  double x = -(t - (2.515517 + t * (0.802853 + t * 0.010328)) /
                       (1.0 + t * (1.432788 + t * (0.189269 + t * 0.001308))));
  for (int iter = 0; iter < 10; ++iter) {
    const double err = normal_cdf(x) - p;
    const double u = err / normal_pdf(x);
    const double step = u / (1.0 + 0.5 * x * u);
    x -= step;
    if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal quantile needs 0 < p < 1");
  if (p == 0.5) return 0.0;
  return p < 0.5 ? lower_tail_quantile(p) : -lower_tail_quantile(1.0 - p);
}

double normal_upper_quantile(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("normal quantile needs 0 < alpha < 1");
  if (alpha == 0.5) return 0.0;
  return alpha < 0.5 ? -lower_tail_quantile(alpha) : lower_tail_quantile(1.0 - alpha);
}

std::string_view to_string(SigmaMethod method) noexcept {
  return method == SigmaMethod::one_sided ? "one_sided" : "two_sided";
}

std::string_view to_string(SigmaKind kind) noexcept {
  switch (kind) {
    case SigmaKind::two_sided: return "two_sided";
    case SigmaKind::two_sided_adjusted: return "two_sided_adjusted";
    case SigmaKind::one_sided: return "one_sided";
  }
  return "unknown";
}

SigmaMethod parse_sigma_method(std::string_view text) {
  if (text == "one-sided" || text == "one_sided" || text == "one") return SigmaMethod::one_sided;
  if (text == "two-sided" || text == "two_sided" || text == "two") return SigmaMethod::two_sided;
  throw DataError("unknown sigma method '" + std::string(text) + "' (expected one-sided or two-sided)");
}

double adaptive_gamma(double l_tilde, double nelson_aalen, std::size_t n) {
  if (!(nelson_aalen > 0.0)) throw std::invalid_argument("adaptive gamma needs V > 0");
  if (n == 0) throw std::invalid_argument("adaptive gamma needs n >= 1");
  const double z = (1.0 - 2.0 * l_tilde) / std::sqrt(nelson_aalen / static_cast<double>(n));
  return 2.0 * normal_sf(z);
}

namespace {

double cached_upper_quantile(double alpha) {
  thread_local double last_alpha = std::numeric_limits<double>::quiet_NaN();
  thread_local double last_z = 0.0;
  if (alpha != last_alpha) {
    last_z = normal_upper_quantile(alpha);
    last_alpha = alpha;
  }
  return last_z;
}

void check_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw DataError("gamma must lie in (0, 1)");
}

}  // namespace

GroupFit fit_group(std::span<const double> times, std::span<const std::uint8_t> events,
                   SigmaMethod method, double gamma, StepFunction& curve) {
  GroupFit fit;
  curve.assign_kaplan_meier(times, events);
  const auto median = curve.inverse(0.5);
  if (!median) {
    fit.status = GroupFit::Status::median_absent;
    return fit;
  }
  fit.median = *median;

  const std::size_t n = times.size();
  const double root_n = std::sqrt(static_cast<double>(n));
  const double v = nelson_aalen_variance(times, events, fit.median);
  const double spread = std::sqrt(v / static_cast<double>(n));
  const double z = cached_upper_quantile(gamma / 2.0);
  const double lower = std::max(0.0, 0.5 * (1.0 - z * spread));
  const double upper = std::min(1.0, 0.5 * (1.0 + z * spread));
  // upper >= 1/2 and the median exists, so this inverse always exists.
  const double upper_time = *curve.inverse(upper);

  SigmaEstimate& est = fit.sigma;
  if (method == SigmaMethod::one_sided) {
    est = {(fit.median - upper_time) * root_n / z, SigmaKind::one_sided, gamma, lower, upper};
  } else if (const auto lower_time = curve.inverse(lower)) {
    est = {0.5 * (*lower_time - upper_time) * root_n / z, SigmaKind::two_sided, gamma, lower,
           upper};
  } else {
    // The curve stops above the lower level: use the level it does reach and
    // the gamma that would have produced it.
    const double l_tilde = curve.min_value();
    const double gamma_tilde = adaptive_gamma(l_tilde, v, n);
    const double z_tilde =
        gamma_tilde > 0.0 ? normal_upper_quantile(gamma_tilde / 2.0) : (1.0 - 2.0 * l_tilde) / spread;
    const double u_tilde = std::min(1.0, 0.5 * (1.0 + z_tilde * spread));
    const double l_time = *curve.inverse(l_tilde);
    const double u_time = *curve.inverse(u_tilde);
    est = {0.5 * (l_time - u_time) * root_n / z_tilde, SigmaKind::two_sided_adjusted, gamma_tilde,
           l_tilde, u_tilde};
  }
  if (!(est.sigma > 0.0) || !std::isfinite(est.sigma)) fit.status = GroupFit::Status::degenerate;
  return fit;
}

GroupFit fit_group(const SurvivalSample& sample, SigmaMethod method, double gamma) {
  check_gamma(gamma);
  const auto sorted = sort_sample(sample);
  StepFunction curve;
  auto fit = fit_group(sorted.times, sorted.events, method, gamma, curve);
  switch (fit.status) {
    case GroupFit::Status::ok: break;
    case GroupFit::Status::median_absent:
      throw EstimationError(sample.label(), "Kaplan-Meier curve never reaches 1/2, median does not exist");
    case GroupFit::Status::degenerate:
      throw EstimationError(sample.label(), "zero-width quantile interval, sigma is degenerate");
  }
  return fit;
}

IntervalLevels interval_levels(const SurvivalSample& sample, double gamma) {
  check_gamma(gamma);
  const auto sorted = sort_sample(sample);
  const auto curve = km_estimate(sorted.times, sorted.events);
  const auto median = curve.inverse(0.5);
  if (!median)
    throw EstimationError(sample.label(), "Kaplan-Meier curve never reaches 1/2, median does not exist");
  const double v = nelson_aalen_variance(sorted.times, sorted.events, *median);
  const double spread = std::sqrt(v / static_cast<double>(sample.size()));
  const double z = normal_upper_quantile(gamma / 2.0);
  return {std::max(0.0, 0.5 * (1.0 - z * spread)), std::min(1.0, 0.5 * (1.0 + z * spread)), v};
}

SigmaEstimate estimate_sigma(const SurvivalSample& sample, SigmaMethod method, double gamma) {
  return fit_group(sample, method, gamma).sigma;
}

SigmaEstimate sigma_two_sided(const SurvivalSample& sample, double gamma) {
  return estimate_sigma(sample, SigmaMethod::two_sided, gamma);
}

SigmaEstimate sigma_one_sided(const SurvivalSample& sample, double gamma) {
  return estimate_sigma(sample, SigmaMethod::one_sided, gamma);
}

}  // namespace medsurv
