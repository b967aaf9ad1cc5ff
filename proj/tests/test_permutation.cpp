#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "generators.hpp"
#include "medsurv/errors.hpp"
#include "medsurv/permutation.hpp"

using namespace medsurv;
using doctest::Approx;

namespace {

std::multiset<std::pair<double, int>> pooled(const FactorialDataset& d) {
  std::multiset<std::pair<double, int>> out;
  for (const auto& g : d.groups())
    for (const auto& o : g.observations()) out.insert({o.time, static_cast<int>(o.status)});
  return out;
}

FactorialDataset data_2x2(gen::Engine& e, std::size_t n, double censoring = 0.2) {
  return gen::dataset(e, FactorialLayout::two_way(2, 2), {n, n, censoring});
}

// Straight route: permute_groups, fit each group, pinv Wald statistic.
std::optional<double> brute_statistic(const FactorialDataset& d, const Eigen::MatrixXd& t,
                                      SigmaMethod method) {
  WaldInput in{Eigen::VectorXd(t.rows()), Eigen::VectorXd(t.rows()), d.group_sizes(), t};
  for (std::size_t g = 0; g < d.group_count(); ++g) {
    const auto& obs = d.group(g).observations();
    const auto sorted = sort_sample(std::span<const Observation>(obs));
    StepFunction curve;
    const auto fit = fit_group(sorted.times, sorted.events, method, 0.1, curve);
    if (!fit.ok()) return std::nullopt;
    in.medians(static_cast<Eigen::Index>(g)) = fit.median;
    in.sigmas(static_cast<Eigen::Index>(g)) = fit.sigma.sigma;
  }
  return wald_statistic(in);
}

}  // namespace

TEST_CASE("permute_groups keeps sizes and the pooled sample") {
  gen::Engine e(51);
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = gen::dataset(e, FactorialLayout::two_way(2, 3), {1, 15, 0.3, 0.2});
    CounterRng rng(7, static_cast<std::uint64_t>(trial));
    const auto p = permute_groups(d, rng);
    CHECK(p.group_sizes() == d.group_sizes());
    CHECK(pooled(p) == pooled(d));
    for (std::size_t g = 0; g < d.group_count(); ++g) CHECK(p.group(g).label() == d.group(g).label());
  }
}

TEST_CASE("permute_groups moves each observation to group g with probability n_g / n") {
  // Sizes 2, 3, 5; observation 0 starts in group 0.
  std::vector<SurvivalSample> groups;
  std::size_t next = 1;
  for (const std::size_t size : {2, 3, 5}) {
    std::vector<Observation> obs;
    for (std::size_t i = 0; i < size; ++i) obs.push_back({static_cast<double>(next++), Status::event});
    groups.emplace_back(std::move(obs));
  }
  const FactorialDataset d(groups, FactorialLayout::one_way(3));
  const int draws = 200000;
  std::map<std::size_t, int> where;
  for (int b = 0; b < draws; ++b) {
    CounterRng rng(99, static_cast<std::uint64_t>(b));
    const auto p = permute_groups(d, rng);
    for (std::size_t g = 0; g < 3; ++g)
      for (const auto& o : p.group(g).observations())
        if (o.time == 1.0) ++where[g];
  }
  const double expected[] = {0.2, 0.3, 0.5};
  for (std::size_t g = 0; g < 3; ++g) {
    const double rate = where[g] / static_cast<double>(draws);
    const double se = std::sqrt(expected[g] * (1 - expected[g]) / draws);
    CHECK(std::abs(rate - expected[g]) < 4.5 * se);
  }
}

TEST_CASE("resampling engine matches permute_groups plus a full refit") {
  gen::Engine e(52);
  for (int trial = 0; trial < 10; ++trial) {
    const auto d = data_2x2(e, 25, 0.25);
    const auto t = projection(hypothesis_matrix(HypothesisSpec::interaction(), d.layout()));
    for (const auto method : {SigmaMethod::one_sided, SigmaMethod::two_sided}) {
      PermutationPlan plan;
      plan.draws = 200;
      plan.seed = 1000 + static_cast<std::uint64_t>(trial);
      plan.max_discard_fraction = 0.9;
      const auto dist = permutation_distribution(d, t, 0.1, method, plan);
      std::vector<double> brute;
      std::size_t failed = 0;
      for (std::size_t b = 0; b < plan.draws; ++b) {
        CounterRng rng(plan.seed, b, 0);
        if (const auto w = brute_statistic(permute_groups(d, rng), t, method)) brute.push_back(*w);
        else ++failed;
      }
      REQUIRE(dist.values.size() == brute.size());
      CHECK(dist.discarded == failed);
      for (std::size_t i = 0; i < brute.size(); ++i)
        CHECK(dist.values[i] == Approx(brute[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("permutation quantile") {
  PermutationDistribution d;
  for (int i = 1; i <= 100; ++i) d.values.push_back(101 - i);
  CHECK(permutation_quantile(d, 0.05) == 95.0);
  CHECK(permutation_quantile(d, 0.5) == 50.0);
  CHECK(permutation_quantile(d, 0.0) == 100.0);
  d.values = {3, 1, 2};
  CHECK(permutation_quantile(d, 0.5) == 2.0);
  d.values = {4.5};
  CHECK(permutation_quantile(d, 0.05) == 4.5);
  CHECK(permutation_quantile(d, 0.99) == 4.5);
}

TEST_CASE("results do not depend on the thread count") {
  gen::Engine e(53);
  const auto d = data_2x2(e, 30);
  PermutationPlan plan;
  plan.draws = 499;
  plan.seed = 5;
  PermutationDistribution base;
  const auto r1 = permutation_test(d, HypothesisSpec::main_effect("B"), 0.1, SigmaMethod::one_sided, 0.05,
                                   plan, &base);
  for (const unsigned threads : {2u, 3u, 8u, 0u}) {
    plan.threads = threads;
    PermutationDistribution other;
    const auto r = permutation_test(d, HypothesisSpec::main_effect("B"), 0.1, SigmaMethod::one_sided, 0.05,
                                    plan, &other);
    CHECK(other.values == base.values);
    CHECK(to_json(r).dump() == to_json(r1).dump());
  }
}

TEST_CASE("p-value and decision") {
  gen::Engine e(54);
  const auto d = data_2x2(e, 40);
  PermutationPlan plan;
  plan.draws = 999;
  plan.seed = 3;
  PermutationDistribution dist;
  const auto r = permutation_test(d, HypothesisSpec::equality(), 0.1, SigmaMethod::two_sided, 0.05, plan,
                                  &dist);
  const auto at_least = std::count_if(dist.values.begin(), dist.values.end(),
                                      [&](double w) { return w >= r.statistic * (1 - 1e-9); });
  REQUIRE(r.p_permutation);
  CHECK(*r.p_permutation == Approx((1.0 + at_least) / (dist.effective() + 1.0)).epsilon(0.01));
  CHECK(r.critical_value == permutation_quantile(dist, 0.05));
  CHECK((r.decision == Decision::reject) == (r.statistic > r.critical_value));
  REQUIRE(r.permutation);
  CHECK(r.permutation->effective + r.permutation->discarded >= 999);

  std::ostringstream csv;
  write_permutation_csv(csv, dist);
  const auto text = csv.str();
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == dist.values.size());

  SUBCASE("identical groups: W = 0 and p = 1") {
    const auto g = gen::sample(e, {50, 50, 0.2});
    std::vector<SurvivalSample> groups(4, g);
    const FactorialDataset same(groups, FactorialLayout::two_way(2, 2));
    const auto s = permutation_test(same, HypothesisSpec::equality(), 0.1, SigmaMethod::two_sided, 0.05, plan);
    CHECK(*s.p_permutation == 1.0);
    CHECK(s.decision == Decision::retain);
  }
}

TEST_CASE("discard policies") {
  // Two tiny groups: most permutations leave a group without a usable sigma.
  const SurvivalSample a({{1, Status::event}, {2, Status::censored}, {3, Status::event}});
  const SurvivalSample b({{1.5, Status::censored}, {2.5, Status::event}, {3.5, Status::censored}});
  const FactorialDataset d({a, b}, FactorialLayout::one_way(2));
  const auto t = projection(centering(2));
  PermutationPlan plan;
  plan.draws = 200;
  plan.max_discard_fraction = 0.01;
  CHECK_THROWS_AS(permutation_distribution(d, t, 0.1, SigmaMethod::one_sided, plan), EstimationError);

  gen::Engine e(55);
  const auto big = data_2x2(e, 40, 0.3);
  const auto tb = projection(centering(4));
  plan.policy = DiscardPolicy::redraw;
  plan.max_discard_fraction = 0.5;
  const auto dist = permutation_distribution(big, tb, 0.1, SigmaMethod::one_sided, plan);
  CHECK(dist.values.size() == 200);

  plan.draws = 0;
  CHECK_THROWS_AS(permutation_distribution(big, tb, 0.1, SigmaMethod::one_sided, plan), DataError);
  plan.draws = 10;
  plan.max_discard_fraction = 1.0;
  CHECK_THROWS_AS(permutation_distribution(big, tb, 0.1, SigmaMethod::one_sided, plan), DataError);
}
