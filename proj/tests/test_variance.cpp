#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "generators.hpp"
#include "medsurv/errors.hpp"
#include "medsurv/estimator.hpp"
#include "medsurv/variance.hpp"

using namespace medsurv;
using doctest::Approx;

namespace {

double boost_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

SurvivalSample make(std::vector<double> times, std::vector<int> events) {
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < times.size(); ++i)
    obs.push_back({times[i], events[i] ? Status::event : Status::censored});
  return SurvivalSample(std::move(obs));
}

// Independent route: quantiles and V from the sorted data by direct counting.
struct Oracle {
  std::vector<double> times;  // distinct event times
  std::vector<double> surv;   // KM value at each
  std::vector<double> na;     // cumulative sum d / Y^2 at each

  explicit Oracle(const SurvivalSample& s) {
    std::vector<double> ev;
    for (const auto& o : s.observations())
      if (o.is_event()) ev.push_back(o.time);
    std::sort(ev.begin(), ev.end());
    ev.erase(std::unique(ev.begin(), ev.end()), ev.end());
    double value = 1.0, sum = 0.0;
    for (const double u : ev) {
      double d = 0, y = 0;
      for (const auto& o : s.observations()) {
        if (o.time >= u) ++y;
        if (o.time == u && o.is_event()) ++d;
      }
      value *= 1.0 - d / y;
      sum += d / (y * y);
      times.push_back(u);
      surv.push_back(value);
      na.push_back(sum);
    }
  }

  std::optional<double> inverse(double level) const {
    if (level >= 1.0) return 0.0;
    for (std::size_t i = 0; i < times.size(); ++i)
      if (surv[i] <= level + 1e-12) return times[i];
    return std::nullopt;
  }

  double variance(double t, std::size_t n) const {
    double v = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i)
      if (times[i] <= t) v = na[i];
    return static_cast<double>(n) * v;
  }
};

}  // namespace

TEST_CASE("normal quantile against Boost.Math") {
  CHECK(normal_quantile(0.5) == 0.0);
  CHECK(normal_quantile(0.975) == Approx(1.959963984540054).epsilon(1e-14));
  CHECK(normal_quantile(0.95) == Approx(1.644853626951472).epsilon(1e-14));
  for (double p = 1e-12; p < 1.0; p = p < 0.01 ? p * 3.7 : p + 0.00731) {
    CHECK(std::abs(normal_quantile(p) - boost_quantile(p)) <= 1e-12);
    CHECK(std::abs(normal_upper_quantile(p) -
                   boost::math::quantile(boost::math::complement(boost::math::normal(), p))) <= 1e-12);
  }
  for (const double p : {1e-300, 1e-100, 1e-20, 1.0 - 1e-12, 1.0 - 1e-15})
    CHECK(normal_quantile(p) == Approx(boost_quantile(p)).epsilon(1e-13));
  CHECK(normal_upper_quantile(1e-20) == Approx(-boost_quantile(1e-20)).epsilon(1e-13));
  CHECK_THROWS(normal_quantile(0.0));
  CHECK_THROWS(normal_quantile(1.0));
}

TEST_CASE("interval levels match the definition") {
  const auto s = make({1, 2, 3}, {1, 1, 1});
  const auto lv = interval_levels(s, 0.1);
  const double z = boost_quantile(0.95);
  const double half = 0.5 * z * std::sqrt((13.0 / 12.0) / 3.0);
  CHECK(lv.nelson_aalen == Approx(13.0 / 12.0).epsilon(1e-15));
  CHECK(lv.lower == Approx(0.5 - half).epsilon(1e-12));
  CHECK(lv.upper == Approx(0.5 + half).epsilon(1e-12));
  // one event: V = 1, spread 1, so both levels clip
  const auto clipped = interval_levels(make({1}, {1}), 0.1);
  CHECK(clipped.lower == 0.0);
  CHECK(clipped.upper == 1.0);
  CHECK_THROWS_AS(interval_levels(make({1, 2}, {0, 0}), 0.1), EstimationError);
}

TEST_CASE("clipped levels: inverse at 1 is the time origin") {
  const auto s = make({1}, {1});
  const double z = boost_quantile(0.95);
  const auto two = sigma_two_sided(s, 0.1);
  CHECK(two.method == SigmaKind::two_sided);
  CHECK(two.sigma == Approx(0.5 * (1.0 - 0.0) / z).epsilon(1e-14));
  const auto one = sigma_one_sided(s, 0.1);
  CHECK(one.sigma == Approx(1.0 / z).epsilon(1e-14));
}

TEST_CASE("adaptive fallback when the curve stops above the lower level") {
  // events at 1..6, censorings at 7..10: the curve ends at 0.4
  const auto s = make({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, {1, 1, 1, 1, 1, 1, 0, 0, 0, 0});
  const auto est = sigma_two_sided(s, 0.1);
  CHECK(est.method == SigmaKind::two_sided_adjusted);
  CHECK(est.lower == Approx(0.4).epsilon(1e-14));
  // Widening is impossible, so the level that fits is larger than requested.
  CHECK(est.gamma_used > 0.1);
  const double v = 10.0 * (1 / 100.0 + 1 / 81.0 + 1 / 64.0 + 1 / 49.0 + 1 / 36.0);
  const double spread = std::sqrt(v / 10.0);
  const double gamma_tilde = 2.0 * (1.0 - boost::math::cdf(boost::math::normal(), 0.2 / spread));
  CHECK(est.gamma_used == Approx(gamma_tilde).epsilon(1e-12));
  const double z_tilde = boost_quantile(1.0 - gamma_tilde / 2.0);
  CHECK(0.5 * (1.0 - z_tilde * spread) == Approx(0.4).epsilon(1e-10));
  const double u_tilde = 0.5 * (1.0 + z_tilde * spread);
  CHECK(est.upper == Approx(u_tilde).epsilon(1e-10));
  // Ŝ⁻¹(0.4) = 6 and Ŝ⁻¹(ũ = 0.6) = 4
  CHECK(est.sigma == Approx(0.5 * (6.0 - 4.0) * std::sqrt(10.0) / z_tilde).epsilon(1e-10));
}

TEST_CASE("adaptive gamma") {
  CHECK(adaptive_gamma(0.5, 1.0, 10) == Approx(1.0));
  const double z = boost_quantile(0.95);
  // V/n chosen so that (1 - 0) / sqrt(V/n) = z
  CHECK(adaptive_gamma(0.0, 1.0 / (z * z), 1) == Approx(0.1).epsilon(1e-12));
  CHECK(adaptive_gamma(0.0, 1e-6, 1) < 1e-100);
  CHECK_THROWS(adaptive_gamma(0.2, 0.0, 5));
}

TEST_CASE("degenerate intervals are errors") {
  std::vector<double> t(100);
  std::fill(t.begin(), t.begin() + 40, 1.0);
  std::fill(t.begin() + 40, t.begin() + 60, 2.0);
  std::fill(t.begin() + 60, t.end(), 3.0);
  const auto s = make(t, std::vector<int>(100, 1));
  CHECK_THROWS_AS(sigma_one_sided(s, 0.1), EstimationError);
  CHECK_THROWS_AS(sigma_two_sided(s, 0.1), EstimationError);
  CHECK_THROWS_AS(sigma_two_sided(make({1, 2}, {0, 0}), 0.1), EstimationError);
}

TEST_CASE("sigma parsing and names") {
  CHECK(parse_sigma_method("one-sided") == SigmaMethod::one_sided);
  CHECK(parse_sigma_method("two_sided") == SigmaMethod::two_sided);
  CHECK_THROWS_AS(parse_sigma_method("both"), DataError);
  CHECK(to_string(SigmaKind::two_sided_adjusted) == "two_sided_adjusted");
}

TEST_CASE("property: estimators agree with the counting oracle") {
  gen::Engine e(21);
  const double z = boost_quantile(0.95);
  int compared = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto s = gen::sample(e, {5, 60, 0.3, 0.1, trial % 4 == 0});
    const Oracle o(s);
    const auto m = o.inverse(0.5);
    if (!m) continue;
    const double v = o.variance(*m, s.size());
    const double spread = std::sqrt(v / static_cast<double>(s.size()));
    const double l = std::max(0.0, 0.5 * (1 - z * spread));
    const double u = std::min(1.0, 0.5 * (1 + z * spread));
    const auto lo = o.inverse(l), up = o.inverse(u);
    const double root_n = std::sqrt(static_cast<double>(s.size()));
    REQUIRE(up);
    const double one = (*m - *up) * root_n / z;
    if (one > 0.0) {
      const auto est = sigma_one_sided(s, 0.1);
      CHECK(est.sigma == Approx(one).epsilon(1e-12));
    }
    if (lo && *lo > *up) {
      const auto est = sigma_two_sided(s, 0.1);
      CHECK(est.method == SigmaKind::two_sided);
      CHECK(est.sigma == Approx(0.5 * (*lo - *up) * root_n / z).epsilon(1e-12));
      CHECK(*lo >= *m);
      ++compared;
    }
  }
  CHECK(compared > 100);
}

TEST_CASE("property: relabeling invariance and scale equivariance") {
  gen::Engine e(22);
  for (int trial = 0; trial < 300; ++trial) {
    const auto s = gen::sample(e, {5, 50, 0.3, 0.1});
    for (const auto method : {SigmaMethod::one_sided, SigmaMethod::two_sided}) {
      GroupFit base;
      try {
        base = fit_group(s, method, 0.1);
      } catch (const EstimationError&) {
        continue;
      }
      auto obs = s.observations();
      std::shuffle(obs.begin(), obs.end(), e);
      CHECK(fit_group(SurvivalSample(obs), method, 0.1).sigma.sigma == base.sigma.sigma);

      for (auto& o : obs) o.time *= 4.0;
      const auto scaled = fit_group(SurvivalSample(obs), method, 0.1);
      CHECK(scaled.sigma.sigma == 4.0 * base.sigma.sigma);
      CHECK(scaled.median == 4.0 * base.median);

      for (auto& o : obs) o.time *= 0.75;  // total factor 3
      CHECK(fit_group(SurvivalSample(obs), method, 0.1).sigma.sigma ==
            Approx(3.0 * base.sigma.sigma).epsilon(1e-12));
    }
  }
}

TEST_CASE("property: adaptive gamma reproduces the lower level") {
  gen::Engine e(23);
  int adjusted = 0;
  for (int trial = 0; trial < 2000 && adjusted < 50; ++trial) {
    const auto s = gen::sample(e, {4, 30, 0.6, 0.0});
    SigmaEstimate est;
    try {
      est = sigma_two_sided(s, 0.1);
    } catch (const EstimationError&) {
      continue;
    }
    if (est.method != SigmaKind::two_sided_adjusted || est.gamma_used >= 1.0) continue;
    ++adjusted;
    const auto lv = interval_levels(s, est.gamma_used);
    CHECK(lv.lower == Approx(km_estimate(s).min_value()).epsilon(1e-10));
    CHECK(est.gamma_used > 0.1);
  }
  CHECK(adjusted == 50);
}

TEST_CASE("large uncensored Exp(1) sample: both estimators near sigma = 1") {
  gen::Engine e(24);
  const auto s = gen::uncensored(e, 1'000'000, [](double u) { return -std::log(u); });
  CHECK(sigma_one_sided(s, 0.1).sigma == Approx(1.0).epsilon(0.05));
  CHECK(sigma_two_sided(s, 0.1).sigma == Approx(1.0).epsilon(0.05));
}
