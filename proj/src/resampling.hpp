#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "medsurv/estimator.hpp"
#include "medsurv/permutation.hpp"
#include "medsurv/rng.hpp"
#include "medsurv/survdata.hpp"
#include "medsurv/variance.hpp"
#include "medsurv/wald.hpp"

namespace medsurv::detail {

/// Pooled, pre-sorted view of a dataset for fast permutation draws. Group
/// samples of a draw are read off the pooled sort order, so no per-draw
/// sorting is needed.
class ResamplingEngine {
 public:
  ResamplingEngine(const FactorialDataset& data, const WaldForm& form);

  struct Scratch {
    std::vector<std::size_t> permutation;
    std::vector<std::uint32_t> label;
    std::vector<std::vector<double>> times;
    std::vector<std::vector<std::uint8_t>> events;
    std::vector<double> medians;
    std::vector<double> sigmas;
    StepFunction curve;
  };

  /// Statistic of the unpermuted groups; nullopt when a group fit fails.
  std::optional<double> observed(SigmaMethod method, double gamma, Scratch& scratch) const;

  /// One permutation draw; nullopt when a permuted group fit fails.
  std::optional<double> draw(CounterRng& rng, SigmaMethod method, double gamma,
                             Scratch& scratch) const;

  PermutationDistribution distribution(SigmaMethod method, double gamma,
                                       const PermutationPlan& plan) const;

  std::size_t total() const noexcept { return times_.size(); }

 private:
  std::optional<double> evaluate(SigmaMethod method, double gamma, Scratch& scratch) const;

  const WaldForm& form_;
  std::vector<std::size_t> sizes_;
  std::vector<std::uint32_t> block_;        // pooled position -> original group
  std::vector<double> times_;               // pooled, sorted
  std::vector<std::uint8_t> events_;        // pooled, sorted
  std::vector<std::size_t> source_;         // sorted position -> pooled position
};

/// Fisher-Yates permutation of 0..n-1; shared by permute_groups and the engine
/// so both produce the same groups from the same generator state.
void draw_permutation(std::vector<std::size_t>& permutation, std::size_t n, CounterRng& rng);

}  // namespace medsurv::detail
