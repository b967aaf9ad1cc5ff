#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "medsurv/rng.hpp"

namespace medsurv {

class SurvivalDistribution;

struct Exponential {
  double rate = 1.0;
};

struct Weibull {
  double shape = 1.0;
  double scale = 1.0;
};

struct LogNormal {
  double mu = 0.0;
  double sigma = 1.0;
};

struct Mixture {
  std::vector<SurvivalDistribution> components;
  std::vector<double> weights;
};

struct Shifted {
  std::shared_ptr<const SurvivalDistribution> base;
  double delta = 0.0;
};

/// Continuous law of a positive survival time. Immutable; copies share
/// nested components.
class SurvivalDistribution {
 public:
  using Kind = std::variant<Exponential, Weibull, LogNormal, Mixture, Shifted>;

  SurvivalDistribution(Kind kind);  // NOLINT: implicit from the alternatives

  static SurvivalDistribution exponential(double rate = 1.0);
  static SurvivalDistribution weibull(double shape, double scale);
  static SurvivalDistribution lognormal(double mu = 0.0, double sigma = 1.0);
  /// Equal weights when `weights` is empty.
  static SurvivalDistribution mixture(std::vector<SurvivalDistribution> components,
                                      std::vector<double> weights = {});
  static SurvivalDistribution shifted(SurvivalDistribution base, double delta);

  /// Standard exponential, Weibull(2, log(2)^{-1/2}) and standard log-normal:
  /// the simulation study's three base laws.
  static SurvivalDistribution standard_exponential();
  static SurvivalDistribution standard_weibull();
  static SurvivalDistribution standard_lognormal();

  const Kind& kind() const noexcept { return kind_; }

  double survival(double t) const;
  double density(double t) const;
  double cdf(double t) const { return 1.0 - survival(t); }
  /// S^{-1}(level) = inf{t : S(t) <= level}, level in (0, 1).
  double survival_quantile(double level) const;
  double median() const { return survival_quantile(0.5); }
  /// Start of the support: delta for shifted laws, 0 otherwise.
  double lower_bound() const noexcept;

  double sample(CounterRng& rng) const;

  /// Round-trips through parse_distribution.
  std::string to_string() const;

 private:
  Kind kind_;
};

/// Grammar:
///   exp:<rate> | weib:<shape>,<scale> | lnorm:<mu>,<sigma>
///   Exp | Weib | LogN                          (study defaults)
///   mix(<w>*<dist>; <w>*<dist>; ...)           (weights optional, equal if omitted)
///   shift(<dist>; <delta>)
/// Throws DataError.
SurvivalDistribution parse_distribution(std::string_view text);

/// n i.i.d. draws.
std::vector<double> sample_distribution(const SurvivalDistribution& dist, std::size_t n,
                                        CounterRng& rng);

/// P(T > C) for C ~ Unif[lower, lower + U] where lower is the law's support
/// start: (1/U) * integral of S over the censoring window.
double censoring_rate(const SurvivalDistribution& dist, double upper);

/// U such that Unif censoring of width U produces the target rate.
/// Throws DataError unless 0 < target < 1.
double calibrate_censoring(const SurvivalDistribution& dist, double target_rate);

/// sqrt of -1/(4 f(m)^2) * integral_0^m dS / (G S^2), with G the survival
/// function of Unif censoring of width U (no censoring when absent). Throws
/// DataError when f(m) = 0 or U does not exceed the median.
double asymptotic_sigma_oracle(const SurvivalDistribution& dist,
                               std::optional<double> censoring_upper);

}  // namespace medsurv
