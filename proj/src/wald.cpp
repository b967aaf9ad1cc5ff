#include "medsurv/wald.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "medsurv/errors.hpp"

namespace medsurv {

double wald_statistic(const WaldInput& input) {
  const auto k = input.projection.cols();
  if (input.projection.rows() != k || input.medians.size() != k || input.sigmas.size() != k ||
      static_cast<Eigen::Index>(input.sizes.size()) != k)
    throw DataError("Wald input: medians, sigmas, sizes and T must share dimension k");
  double n = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!(input.sigmas(i) > 0.0)) throw DataError("Wald input: every sigma must be positive");
    if (input.sizes[static_cast<std::size_t>(i)] == 0) throw DataError("Wald input: empty group");
    n += static_cast<double>(input.sizes[static_cast<std::size_t>(i)]);
  }

  Eigen::VectorXd cov(k);
  for (Eigen::Index i = 0; i < k; ++i)
    cov(i) = n / static_cast<double>(input.sizes[static_cast<std::size_t>(i)]) *
             input.sigmas(i) * input.sigmas(i);
  const Eigen::MatrixXd& t = input.projection;
  const Eigen::VectorXd tm = t * input.medians;
  const Eigen::MatrixXd middle = t * cov.asDiagonal() * t.transpose();
  const double w = n * tm.dot(moore_penrose(middle) * tm);
  if (!std::isfinite(w)) throw EstimationError({}, "Wald statistic is not finite");
  return std::max(0.0, w);
}

WaldForm::WaldForm(const Eigen::MatrixXd& projection) {
  if (projection.rows() != projection.cols())
    throw DataError("projection matrix must be square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(projection);
  const auto& values = eig.eigenvalues();
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (values(i) > 0.5) ++r;
  basis_.resize(projection.rows(), r);
  Eigen::Index c = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (values(i) > 0.5) basis_.col(c++) = eig.eigenvectors().col(i);
}

double WaldForm::operator()(std::span<const double> medians, std::span<const double> sigmas,
                            std::span<const std::size_t> sizes) const {
  const Eigen::Index k = basis_.rows(), r = basis_.cols();
  if (r == 0) return 0.0;
  const Eigen::Map<const Eigen::VectorXd> m(medians.data(), k);
  Eigen::VectorXd scale(k);
  for (Eigen::Index i = 0; i < k; ++i)
    scale(i) = sigmas[static_cast<std::size_t>(i)] * sigmas[static_cast<std::size_t>(i)] /
               static_cast<double>(sizes[static_cast<std::size_t>(i)]);
  const Eigen::VectorXd y = basis_.transpose() * m;
  const Eigen::MatrixXd reduced = basis_.transpose() * scale.asDiagonal() * basis_;
  Eigen::LLT<Eigen::MatrixXd> llt(reduced);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
  return std::max(0.0, y.dot(llt.solve(y)));
}

// ---------------------------------------------------------------------------

namespace {

// Regularized upper incomplete gamma Q(a, x): power series for P when
// x < a + 1, Lentz's continued fraction for Q otherwise.
double upper_incomplete_gamma(double a, double x) {
  if (x <= 0.0) return 1.0;
  const double log_prefix = a * std::log(x) - x - std::lgamma(a);
  constexpr double eps = 1e-16;
  if (x < a + 1.0) {
    double term = 1.0 / a, sum = term;
    for (int n = 1; n < 10000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * eps) break;
    }
    return std::max(0.0, 1.0 - sum * std::exp(log_prefix));
  }
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) break;
  }
  return std::exp(log_prefix) * h;
}

}  // namespace

double chi_square_sf(double x, int df) {
  if (df < 1) throw std::invalid_argument("chi-square needs df >= 1");
  if (std::isnan(x)) throw std::invalid_argument("chi-square argument is NaN");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return upper_incomplete_gamma(0.5 * df, 0.5 * x);
}

double chi_square_quantile(double alpha, int df) {
  if (df < 1) throw std::invalid_argument("chi-square needs df >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (alpha == 0.0) return std::numeric_limits<double>::infinity();
  if (alpha == 1.0) return 0.0;
  double lo = 0.0, hi = std::max(1.0, static_cast<double>(df));
  while (chi_square_sf(hi, df) > alpha) {
    lo = hi;
    hi *= 2.0;
  }
  for (int i = 0; i < 200 && hi - lo > 1e-13 * std::max(1.0, hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    (chi_square_sf(mid, df) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::string_view to_string(Decision d) noexcept { return d == Decision::reject ? "reject" : "retain"; }

nlohmann::json to_json(const TestResult& result) {
  using nlohmann::json;
  json groups = json::array();
  for (const auto& g : result.groups)
    groups.push_back({{"label", g.label},
                      {"n", g.n},
                      {"median", g.median},
                      {"sigma", g.sigma},
                      {"sigma_method", to_string(g.sigma_method)},
                      {"gamma_used", g.gamma_used}});
  json out = {{"hypothesis", result.hypothesis},
              {"statistic", result.statistic},
              {"df", result.df},
              {"p_asymptotic", result.p_asymptotic},
              {"p_permutation", result.p_permutation ? json(*result.p_permutation) : json(nullptr)},
              {"alpha", result.alpha},
              {"critical_value", std::isfinite(result.critical_value) ? json(result.critical_value)
                                                                     : json(nullptr)},
              {"decision", to_string(result.decision)},
              {"groups", std::move(groups)}};
  if (result.permutation) {
    const auto& p = *result.permutation;
    out["seed"] = p.seed;
    out["permutations"] = p.permutations;
    out["effective"] = p.effective;
    out["discarded"] = p.discarded;
  } else {
    out["seed"] = nullptr;
    out["permutations"] = 0;
    out["effective"] = 0;
    out["discarded"] = 0;
  }
  return out;
}

std::vector<GroupFit> fit_groups(const FactorialDataset& data, SigmaMethod method, double gamma) {
  std::vector<GroupFit> fits;
  fits.reserve(data.group_count());
  for (const auto& g : data.groups()) fits.push_back(fit_group(g, method, gamma));
  return fits;
}

namespace {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw DataError("alpha must lie in [0, 1)");
}

}  // namespace

TestResult asymptotic_test(const FactorialDataset& data, const Eigen::MatrixXd& projection,
                           double gamma, SigmaMethod method, double alpha) {
  check_alpha(alpha);
  const auto k = static_cast<Eigen::Index>(data.group_count());
  if (projection.rows() != k || projection.cols() != k)
    throw DataError("projection matrix does not match the number of groups");
  const auto df = static_cast<int>(rank(projection));
  if (df == 0) throw DataError("hypothesis matrix has rank 0");

  const auto fits = fit_groups(data, method, gamma);
  WaldInput input{Eigen::VectorXd(k), Eigen::VectorXd(k), data.group_sizes(), projection};
  TestResult result;
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& fit = fits[static_cast<std::size_t>(i)];
    input.medians(i) = fit.median;
    input.sigmas(i) = fit.sigma.sigma;
    const auto& g = data.group(static_cast<std::size_t>(i));
    result.groups.push_back(
        {g.label(), g.size(), fit.median, fit.sigma.sigma, fit.sigma.method, fit.sigma.gamma_used});
  }
  result.statistic = wald_statistic(input);
  result.df = df;
  result.p_asymptotic = chi_square_sf(result.statistic, df);
  result.alpha = alpha;
  result.critical_value = chi_square_quantile(alpha, df);
  result.decision = result.statistic > result.critical_value ? Decision::reject : Decision::retain;
  return result;
}

TestResult asymptotic_test(const FactorialDataset& data, const HypothesisSpec& spec, double gamma,
                           SigmaMethod method, double alpha) {
  auto result = asymptotic_test(data, projection(hypothesis_matrix(spec, data.layout())), gamma,
                                method, alpha);
  result.hypothesis = spec.describe();
  return result;
}

}  // namespace medsurv
