#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "medsurv/contrasts.hpp"
#include "medsurv/distribution.hpp"
#include "medsurv/survdata.hpp"
#include "medsurv/variance.hpp"

namespace medsurv {

/// One of the four Wald-type tests: asymptotic or permutation critical value
/// combined with the one- or two-sided sigma strategy.
struct TestMethod {
  bool permutation = true;
  SigmaMethod sigma = SigmaMethod::one_sided;

  std::string name() const;  ///< "perm-one", "asy-two", ...
  friend bool operator==(const TestMethod&, const TestMethod&) = default;
};

TestMethod parse_test_method(std::string_view text);
std::vector<TestMethod> all_test_methods();

struct Scenario {
  std::string name = "scenario";
  FactorialLayout layout = FactorialLayout::two_way(2, 2);
  std::vector<SurvivalDistribution> distributions;  ///< one per group
  std::vector<double> censoring_rates;              ///< 0 = uncensored
  std::vector<std::size_t> sizes;
  HypothesisSpec hypothesis = HypothesisSpec::main_effect("A");
  std::vector<TestMethod> methods = all_test_methods();
  double gamma = default_gamma;
  double alpha = 0.05;
  std::size_t permutations = 1999;
  std::size_t replications = 5000;
  std::uint64_t seed = 0;
  /// Groups (0-based) whose survival and censoring laws are moved right by delta.
  std::vector<std::size_t> shift_groups = {0};
  /// Power grid; empty for a plain type-1 study.
  std::vector<double> deltas;
  unsigned threads = 1;

  /// Throws DataError when the vectors do not conform to the layout.
  void validate() const;
};

/// Simulated data for one replication: survival from the group law (shifted by
/// delta for shift groups), censoring Unif[delta, delta + U_i] with U_i
/// calibrated from the unshifted law.
FactorialDataset simulate_dataset(const Scenario& scenario, std::span<const double> censoring_upper,
                                  double delta, CounterRng& rng);

/// Calibrated U_i for every group (+inf for uncensored groups).
std::vector<double> calibrate_scenario(const Scenario& scenario);

struct MethodRate {
  TestMethod method;
  std::size_t evaluated = 0;   ///< replications the method could be computed on
  std::size_t rejections = 0;
  std::size_t failures = 0;    ///< degenerate sigma or permutation discard overflow
  double rate = 0.0;
  double standard_error = 0.0;
};

struct StudyResult {
  std::string scenario;
  double delta = 0.0;
  std::size_t replications = 0;
  std::size_t excluded = 0;  ///< replications with an absent group median
  std::vector<MethodRate> rates;
};

using ProgressCallback = std::function<void(std::size_t done, std::size_t total)>;

/// Null-hypothesis study (delta = 0). Replication r draws its data from
/// CounterRng(seed, r) and its permutations from a seed derived from (seed, r,
/// method). Throws InfeasibleScenario when more than half of the replications
/// are excluded.
StudyResult run_type1_study(const Scenario& scenario, const ProgressCallback& progress = {});

/// One study per delta in the grid (scenario.deltas unless given).
std::vector<StudyResult> run_power_study(const Scenario& scenario,
                                         std::span<const double> deltas = {},
                                         const ProgressCallback& progress = {});

/// Tidy rows: scenario,method,delta,replications,excluded,evaluated,rejections,failures,rate,se
void write_study_csv(std::ostream& out, std::span<const StudyResult> results);
nlohmann::json to_json(const StudyResult& result);

/// Declarative scenario files: "key = value" lines, "[name]" opens a scenario,
/// keys before the first section are defaults for all scenarios, '#' starts a
/// comment. Warnings (e.g. missing seed) are appended to `warnings`.
std::vector<Scenario> parse_scenarios(std::istream& in, std::vector<std::string>* warnings = nullptr);

/// Sample-size and censoring vectors of the simulation study by name:
/// n1, n2, n3, n4 (optionally prefixed "2" to double) and cr1 .. cr6.
std::optional<std::vector<std::size_t>> named_sizes(std::string_view name);
std::optional<std::vector<double>> named_censoring(std::string_view name);

}  // namespace medsurv
