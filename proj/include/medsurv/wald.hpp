#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "medsurv/contrasts.hpp"
#include "medsurv/survdata.hpp"
#include "medsurv/variance.hpp"

namespace medsurv {

struct WaldInput {
  Eigen::VectorXd medians;
  Eigen::VectorXd sigmas;
  std::vector<std::size_t> sizes;
  Eigen::MatrixXd projection;
};

/// W = n (T m)' (T S T')^+ (T m) with S = diag(n / n_i * sigma_i^2).
/// Throws DataError on inconsistent input and EstimationError on non-finite
/// intermediate values.
double wald_statistic(const WaldInput& input);

/// The same quadratic form evaluated through an orthonormal basis Q of the
/// range of T: W = (Q'm)' (Q' diag(sigma_i^2 / n_i) Q)^{-1} (Q'm). Built once
/// per projection and reused across resampling draws.
class WaldForm {
 public:
  explicit WaldForm(const Eigen::MatrixXd& projection);

  Eigen::Index groups() const noexcept { return basis_.rows(); }
  Eigen::Index degrees_of_freedom() const noexcept { return basis_.cols(); }

  /// NaN when the reduced covariance is not positive definite.
  double operator()(std::span<const double> medians, std::span<const double> sigmas,
                    std::span<const std::size_t> sizes) const;

 private:
  Eigen::MatrixXd basis_;
};

/// Upper tail P(X > x) of the chi-square distribution with df degrees of
/// freedom (regularized incomplete gamma Q(df/2, x/2)).
double chi_square_sf(double x, int df);

/// (1 - alpha)-quantile of chi-square(df); +inf for alpha = 0.
double chi_square_quantile(double alpha, int df);

enum class Decision { retain, reject };
std::string_view to_string(Decision d) noexcept;

struct GroupDiagnostics {
  std::string label;
  std::size_t n;
  double median;
  double sigma;
  SigmaKind sigma_method;
  double gamma_used;
};

struct PermutationSummary {
  std::uint64_t seed;
  std::size_t permutations;   ///< requested draws B
  std::size_t effective;      ///< draws that produced a statistic
  std::size_t discarded;
  double critical_value;
};

struct TestResult {
  double statistic = 0.0;
  int df = 0;
  double p_asymptotic = 1.0;
  std::optional<double> p_permutation;
  double alpha = 0.05;
  double critical_value = 0.0;  ///< of the test that made the decision
  Decision decision = Decision::retain;
  std::string hypothesis;
  std::vector<GroupDiagnostics> groups;
  std::optional<PermutationSummary> permutation;
};

nlohmann::json to_json(const TestResult& result);

/// Fits every group; EstimationError names the first group whose median or
/// sigma cannot be computed.
std::vector<GroupFit> fit_groups(const FactorialDataset& data, SigmaMethod method, double gamma);

/// Asymptotic chi-square Wald test; rejects iff W > chi2_{rank(T); alpha}.
TestResult asymptotic_test(const FactorialDataset& data, const HypothesisSpec& spec,
                           double gamma, SigmaMethod method, double alpha);
TestResult asymptotic_test(const FactorialDataset& data, const Eigen::MatrixXd& projection,
                           double gamma, SigmaMethod method, double alpha);

}  // namespace medsurv
