#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "medsurv/contrasts.hpp"
#include "medsurv/rng.hpp"
#include "medsurv/survdata.hpp"
#include "medsurv/variance.hpp"
#include "medsurv/wald.hpp"

namespace medsurv {

/// What to do with a draw in which some permuted group has no median or a
/// degenerate sigma.
enum class DiscardPolicy { redraw, count_and_skip };

struct PermutationPlan {
  std::size_t draws = 1999;
  std::uint64_t seed = 0;
  DiscardPolicy policy = DiscardPolicy::count_and_skip;
  double max_discard_fraction = 0.10;
  unsigned threads = 1;  ///< 0 = one per hardware thread
};

/// Redraw attempts per draw index before giving up under DiscardPolicy::redraw.
inline constexpr std::size_t max_redraw_attempts = 1000;

struct PermutationDistribution {
  std::vector<double> values;  ///< in draw-index order
  std::size_t discarded = 0;

  std::size_t effective() const noexcept { return values.size(); }
};

/// Pools the (time, status) pairs in group order, applies a uniform random
/// permutation and cuts the result into blocks of the original group sizes.
FactorialDataset permute_groups(const FactorialDataset& data, CounterRng& rng);

/// Draws W under B permutations. Draw b uses CounterRng(seed, b, attempt), so
/// the output does not depend on the number of threads. Throws
/// EstimationError when more than max_discard_fraction of the draws fail.
PermutationDistribution permutation_distribution(const FactorialDataset& data,
                                                 const Eigen::MatrixXd& projection, double gamma,
                                                 SigmaMethod method, const PermutationPlan& plan);
PermutationDistribution permutation_distribution(const FactorialDataset& data,
                                                 const HypothesisSpec& spec, double gamma,
                                                 SigmaMethod method, const PermutationPlan& plan);

/// Order statistic ceil((1 - alpha) B) (1-based) of the permutation values.
double permutation_quantile(const PermutationDistribution& dist, double alpha);

/// Studentized permutation test. Rejects iff W > c_alpha; the p-value is
/// (1 + #{W_pi >= W}) / (B_effective + 1). Carries the asymptotic p-value too.
TestResult permutation_test(const FactorialDataset& data, const HypothesisSpec& spec,
                            double gamma, SigmaMethod method, double alpha,
                            const PermutationPlan& plan,
                            PermutationDistribution* distribution_out = nullptr);
TestResult permutation_test(const FactorialDataset& data, const Eigen::MatrixXd& projection,
                            double gamma, SigmaMethod method, double alpha,
                            const PermutationPlan& plan,
                            PermutationDistribution* distribution_out = nullptr);

/// One value per line, full precision.
void write_permutation_csv(std::ostream& out, const PermutationDistribution& dist);

}  // namespace medsurv
