#include "medsurv/distribution.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "medsurv/errors.hpp"
#include "medsurv/variance.hpp"

namespace medsurv {

namespace {

template <class... F>
struct overloaded : F... {
  using F::operator()...;
};
template <class... F>
overloaded(F...) -> overloaded<F...>;

void require(bool ok, const std::string& message) {
  if (!ok) throw DataError(message);
}

std::string format_number(double x) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), end);
}

}  // namespace

SurvivalDistribution::SurvivalDistribution(Kind kind) : kind_(std::move(kind)) {
  std::visit(overloaded{
                 [](const Exponential& e) {
                   require(e.rate > 0.0 && std::isfinite(e.rate), "exponential rate must be positive");
                 },
                 [](const Weibull& w) {
                   require(w.shape > 0.0 && w.scale > 0.0 && std::isfinite(w.shape) &&
                               std::isfinite(w.scale),
                           "Weibull shape and scale must be positive");
                 },
                 [](const LogNormal& l) {
                   require(std::isfinite(l.mu) && l.sigma > 0.0 && std::isfinite(l.sigma),
                           "log-normal sigma must be positive");
                 },
                 [](Mixture& m) {
                   require(!m.components.empty(), "mixture needs at least one component");
                   if (m.weights.empty())
                     m.weights.assign(m.components.size(), 1.0 / static_cast<double>(m.components.size()));
                   require(m.weights.size() == m.components.size(),
                           "mixture needs one weight per component");
                   double total = 0.0;
                   for (const double w : m.weights) {
                     require(w >= 0.0 && std::isfinite(w), "mixture weights must be non-negative");
                     total += w;
                   }
                   require(std::abs(total - 1.0) <= 1e-9, "mixture weights must sum to 1");
                 },
                 [](const Shifted& s) {
                   require(s.base != nullptr, "shifted law needs a base");
                   require(s.delta >= 0.0 && std::isfinite(s.delta), "shift must be non-negative");
                 },
             },
             kind_);
}

SurvivalDistribution SurvivalDistribution::exponential(double rate) {
  return SurvivalDistribution(Exponential{rate});
}

SurvivalDistribution SurvivalDistribution::weibull(double shape, double scale) {
  return SurvivalDistribution(Weibull{shape, scale});
}

SurvivalDistribution SurvivalDistribution::lognormal(double mu, double sigma) {
  return SurvivalDistribution(LogNormal{mu, sigma});
}

SurvivalDistribution SurvivalDistribution::mixture(std::vector<SurvivalDistribution> components,
                                                   std::vector<double> weights) {
  return SurvivalDistribution(Mixture{std::move(components), std::move(weights)});
}

SurvivalDistribution SurvivalDistribution::shifted(SurvivalDistribution base, double delta) {
  return SurvivalDistribution(
      Shifted{std::make_shared<const SurvivalDistribution>(std::move(base)), delta});
}

SurvivalDistribution SurvivalDistribution::standard_exponential() { return exponential(1.0); }

SurvivalDistribution SurvivalDistribution::standard_weibull() {
  return weibull(2.0, 1.0 / std::sqrt(std::numbers::ln2));
}

SurvivalDistribution SurvivalDistribution::standard_lognormal() { return lognormal(0.0, 1.0); }

double SurvivalDistribution::survival(double t) const {
  if (t <= lower_bound()) return 1.0;
  return std::visit(overloaded{
                        [&](const Exponential& e) { return std::exp(-e.rate * t); },
                        [&](const Weibull& w) { return std::exp(-std::pow(t / w.scale, w.shape)); },
                        [&](const LogNormal& l) { return normal_sf((std::log(t) - l.mu) / l.sigma); },
                        [&](const Mixture& m) {
                          double s = 0.0;
                          for (std::size_t i = 0; i < m.components.size(); ++i)
                            s += m.weights[i] * m.components[i].survival(t);
                          return s;
                        },
                        [&](const Shifted& s) { return s.base->survival(t - s.delta); },
                    },
                    kind_);
}

double SurvivalDistribution::density(double t) const {
  // Right limit at the support start.
  if (t < lower_bound()) return 0.0;
  return std::visit(
      overloaded{
          [&](const Exponential& e) { return e.rate * std::exp(-e.rate * t); },
          [&](const Weibull& w) {
            const double z = t / w.scale;
            return w.shape / w.scale * std::pow(z, w.shape - 1.0) * std::exp(-std::pow(z, w.shape));
          },
          [&](const LogNormal& l) {
            if (t <= 0.0) return 0.0;
            const double z = (std::log(t) - l.mu) / l.sigma;
            return std::exp(-0.5 * z * z) / (t * l.sigma * std::sqrt(2.0 * std::numbers::pi));
          },
          [&](const Mixture& m) {
            double f = 0.0;
            for (std::size_t i = 0; i < m.components.size(); ++i)
              f += m.weights[i] * m.components[i].density(t);
            return f;
          },
          [&](const Shifted& s) { return s.base->density(t - s.delta); },
      },
      kind_);
}

double SurvivalDistribution::survival_quantile(double level) const {
  if (!(level > 0.0 && level < 1.0)) throw DataError("survival quantile level must lie in (0, 1)");
  return std::visit(
      overloaded{
          [&](const Exponential& e) { return -std::log(level) / e.rate; },
          [&](const Weibull& w) { return w.scale * std::pow(-std::log(level), 1.0 / w.shape); },
          [&](const LogNormal& l) { return std::exp(l.mu + l.sigma * normal_upper_quantile(level)); },
          [&](const Mixture& m) {
            double lo = lower_bound(), hi = 0.0;
            for (const auto& c : m.components) hi = std::max(hi, c.survival_quantile(level));
            for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++i) {
              const double mid = 0.5 * (lo + hi);
              (survival(mid) > level ? lo : hi) = mid;
            }
            return hi;
          },
          [&](const Shifted& s) { return s.base->survival_quantile(level) + s.delta; },
      },
      kind_);
}

double SurvivalDistribution::lower_bound() const noexcept {
  return std::visit(overloaded{
                        [](const Mixture& m) {
                          double lo = std::numeric_limits<double>::infinity();
                          for (const auto& c : m.components) lo = std::min(lo, c.lower_bound());
                          return lo;
                        },
                        [](const Shifted& s) { return s.base->lower_bound() + s.delta; },
                        [](const auto&) { return 0.0; },
                    },
                    kind_);
}

double SurvivalDistribution::sample(CounterRng& rng) const {
  return std::visit(
      overloaded{
          [&](const Exponential& e) { return -std::log(rng.uniform()) / e.rate; },
          [&](const Weibull& w) { return w.scale * std::pow(-std::log(rng.uniform()), 1.0 / w.shape); },
          [&](const LogNormal& l) { return std::exp(l.mu + l.sigma * normal_quantile(rng.uniform())); },
          [&](const Mixture& m) {
            const double u = rng.uniform();
            double acc = 0.0;
            std::size_t pick = m.components.size() - 1;
            for (std::size_t i = 0; i < m.components.size(); ++i) {
              acc += m.weights[i];
              if (u < acc) {
                pick = i;
                break;
              }
            }
            return m.components[pick].sample(rng);
          },
          [&](const Shifted& s) { return s.base->sample(rng) + s.delta; },
      },
      kind_);
}

std::string SurvivalDistribution::to_string() const {
  return std::visit(overloaded{
                        [](const Exponential& e) { return "exp:" + format_number(e.rate); },
                        [](const Weibull& w) {
                          return "weib:" + format_number(w.shape) + "," + format_number(w.scale);
                        },
                        [](const LogNormal& l) {
                          return "lnorm:" + format_number(l.mu) + "," + format_number(l.sigma);
                        },
                        [](const Mixture& m) {
                          std::string out = "mix(";
                          for (std::size_t i = 0; i < m.components.size(); ++i) {
                            if (i) out += "; ";
                            out += format_number(m.weights[i]) + "*" + m.components[i].to_string();
                          }
                          return out + ")";
                        },
                        [](const Shifted& s) {
                          return "shift(" + s.base->to_string() + "; " + format_number(s.delta) + ")";
                        },
                    },
                    kind_);
}

// ---------------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_number(std::string_view text, std::string_view context) {
  text = trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw DataError("'" + std::string(text) + "' is not a number in " + std::string(context));
  return value;
}

std::vector<double> parse_numbers(std::string_view text, std::string_view context) {
  std::vector<double> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = text.find(',', start);
    out.push_back(parse_number(text.substr(start, comma - start), context));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// Splits on `sep` at bracket depth 0.
std::vector<std::string_view> split_top(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '(') ++depth;
    else if (text[i] == ')') --depth;
    else if (text[i] == sep && depth == 0) {
      parts.push_back(trim(text.substr(start, i - start)));
      start = i + 1;
    }
  }
  parts.push_back(trim(text.substr(start)));
  return parts;
}

// "name(body)" -> body, or nullopt.
std::optional<std::string_view> call_body(std::string_view text, std::string_view name) {
  if (!text.starts_with(name)) return std::nullopt;
  auto rest = trim(text.substr(name.size()));
  if (rest.size() < 2 || rest.front() != '(' || rest.back() != ')') return std::nullopt;
  return rest.substr(1, rest.size() - 2);
}

}  // namespace

SurvivalDistribution parse_distribution(std::string_view text) {
  const std::string_view t = trim(text);
  const std::string context = "distribution '" + std::string(t) + "'";
  if (t == "Exp") return SurvivalDistribution::standard_exponential();
  if (t == "Weib") return SurvivalDistribution::standard_weibull();
  if (t == "LogN") return SurvivalDistribution::standard_lognormal();

  if (t.starts_with("exp:")) {
    const auto v = parse_numbers(t.substr(4), context);
    require(v.size() == 1, context + " expects exp:<rate>");
    return SurvivalDistribution::exponential(v[0]);
  }
  if (t.starts_with("weib:")) {
    const auto v = parse_numbers(t.substr(5), context);
    require(v.size() == 2, context + " expects weib:<shape>,<scale>");
    return SurvivalDistribution::weibull(v[0], v[1]);
  }
  if (t.starts_with("lnorm:")) {
    const auto v = parse_numbers(t.substr(6), context);
    require(v.size() == 2, context + " expects lnorm:<mu>,<sigma>");
    return SurvivalDistribution::lognormal(v[0], v[1]);
  }
  if (const auto body = call_body(t, "mix")) {
    std::vector<SurvivalDistribution> components;
    std::vector<double> weights;
    const auto parts = split_top(*body, ';');
    for (const auto part : parts) {
      const auto star = split_top(part, '*');
      if (star.size() == 2) {
        weights.push_back(parse_number(star[0], context));
        components.push_back(parse_distribution(star[1]));
      } else {
        require(star.size() == 1, context + " has a malformed mixture component");
        components.push_back(parse_distribution(part));
      }
    }
    require(weights.empty() || weights.size() == components.size(),
            context + " gives weights for some but not all components");
    return SurvivalDistribution::mixture(std::move(components), std::move(weights));
  }
  if (const auto body = call_body(t, "shift")) {
    const auto parts = split_top(*body, ';');
    require(parts.size() == 2, context + " expects shift(<dist>; <delta>)");
    return SurvivalDistribution::shifted(parse_distribution(parts[0]), parse_number(parts[1], context));
  }
  throw DataError("unknown " + context +
                  " (expected exp:, weib:, lnorm:, Exp, Weib, LogN, mix(...) or shift(...))");
}

std::vector<double> sample_distribution(const SurvivalDistribution& dist, std::size_t n,
                                        CounterRng& rng) {
  std::vector<double> out(n);
  for (auto& x : out) x = dist.sample(rng);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double simpson(const std::function<double(double)>& f, double a, double fa, double m, double fm,
               double b, double fb, double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1) +
         simpson(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  if (!(b > a)) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson(f, a, fa, m, fm, b, fb, whole, tol, 48);
}

// Integral over [a, b] split at survival quantiles of the law, so that wide
// windows do not hide the region where the mass sits.
double integrate_split(const SurvivalDistribution& dist, const std::function<double(double)>& f,
                       double a, double b, double tol) {
  std::vector<double> cuts = {a, b};
  for (const double level : {0.99, 0.9, 0.75, 0.5, 0.25, 0.1, 1e-2, 1e-3, 1e-5, 1e-8, 1e-12}) {
    const double q = dist.survival_quantile(level);
    if (q > a && q < b) cuts.push_back(q);
  }
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) total += integrate(f, cuts[i], cuts[i + 1], tol);
  return total;
}

}  // namespace

double censoring_rate(const SurvivalDistribution& dist, double upper) {
  if (!(upper > 0.0)) throw DataError("censoring endpoint must be positive");
  if (std::isinf(upper)) return 0.0;
  const double lo = dist.lower_bound();
  const auto s = [&](double x) { return dist.survival(x); };
  return std::clamp(integrate_split(dist, s, lo, lo + upper, 1e-13 * upper) / upper, 0.0, 1.0);
}

double calibrate_censoring(const SurvivalDistribution& dist, double target_rate) {
  if (!(target_rate > 0.0 && target_rate < 1.0))
    throw DataError("target censoring rate must lie in (0, 1)");
  // cr(U) decreases from 1 (U -> 0) to 0 (U -> inf); bracket on a log scale.
  double hi = std::max(dist.median() - dist.lower_bound(), 1e-300);
  double lo = hi;
  while (censoring_rate(dist, hi) > target_rate) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) throw DataError("censoring rate target cannot be bracketed");
  }
  while (censoring_rate(dist, lo) < target_rate) {
    hi = lo;
    lo *= 0.5;
    if (lo < 1e-300) throw DataError("censoring rate target cannot be bracketed");
  }
  for (int i = 0; i < 200 && hi - lo > 1e-13 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (censoring_rate(dist, mid) > target_rate ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double asymptotic_sigma_oracle(const SurvivalDistribution& dist,
                               std::optional<double> censoring_upper) {
  const double m = dist.median();
  const double fm = dist.density(m);
  if (!(fm > 0.0)) throw DataError("density vanishes at the median");
  const double lo = dist.lower_bound();
  if (censoring_upper && !(*censoring_upper > m - lo))
    throw DataError("censoring endpoint does not exceed the median");
  const auto g = [&](double x) {
    if (!censoring_upper) return 1.0;
    return std::clamp(1.0 - (x - lo) / *censoring_upper, 0.0, 1.0);
  };
  const auto integrand = [&](double x) {
    const double s = dist.survival(x);
    return dist.density(x) / (g(x) * s * s);
  };
  // -int dS / (G S^2) = int f / (G S^2) dx over the support up to m.
  const double integral = integrate_split(dist, integrand, lo, m, 1e-14);
  return std::sqrt(integral / (4.0 * fm * fm));
}

}  // namespace medsurv
