#pragma once

// Hand-rolled generators for property tests. They use std::mt19937_64 rather
// than the library's generator so test data does not depend on the code
// under test.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "medsurv/survdata.hpp"

namespace gen {

using Engine = std::mt19937_64;

inline double uniform(Engine& e, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(e);
}

inline std::size_t integer(Engine& e, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(e);
}

struct SampleShape {
  std::size_t min_size = 1;
  std::size_t max_size = 40;
  double censoring = 0.3;  ///< probability an observation is censored
  double ties = 0.0;       ///< probability a time is copied from an earlier one
  bool rounded = false;    ///< round times to 2 decimals (more ties)
};

inline medsurv::SurvivalSample sample(Engine& e, const SampleShape& shape = {},
                                      std::string label = {}) {
  const auto n = integer(e, shape.min_size, shape.max_size);
  std::vector<medsurv::Observation> obs;
  for (std::size_t i = 0; i < n; ++i) {
    double t = std::exponential_distribution<double>(1.0)(e) + 1e-3;
    if (shape.rounded) t = std::round(t * 100.0) / 100.0 + 0.01;
    if (!obs.empty() && uniform(e) < shape.ties) t = obs[integer(e, 0, obs.size() - 1)].time;
    const auto status = uniform(e) < shape.censoring ? medsurv::Status::censored
                                                      : medsurv::Status::event;
    obs.push_back({t, status});
  }
  return medsurv::SurvivalSample(std::move(obs), std::move(label));
}

/// Uncensored sample of the given law by inversion.
template <class Quantile>
medsurv::SurvivalSample uncensored(Engine& e, std::size_t n, Quantile&& survival_quantile) {
  std::vector<medsurv::Observation> obs(n);
  for (auto& o : obs) o = {survival_quantile(uniform(e)), medsurv::Status::event};
  return medsurv::SurvivalSample(std::move(obs));
}

inline Eigen::MatrixXd matrix(Engine& e, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = uniform(e, -1.0, 1.0);
  return m;
}

/// Random matrix of the given rank (product of two thin factors).
inline Eigen::MatrixXd low_rank(Engine& e, Eigen::Index rows, Eigen::Index cols, Eigen::Index r) {
  return matrix(e, rows, r) * matrix(e, r, cols);
}

/// Random contrast matrix: rows sum to zero.
inline Eigen::MatrixXd contrast(Engine& e, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd h = matrix(e, rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) h.row(i).array() -= h.row(i).mean();
  return h;
}

inline medsurv::FactorialDataset dataset(Engine& e, const medsurv::FactorialLayout& layout,
                                         const SampleShape& shape = {}) {
  std::vector<medsurv::SurvivalSample> groups;
  for (std::size_t i = 0; i < layout.cells(); ++i)
    groups.push_back(sample(e, shape, layout.cell_name(i)));
  return medsurv::FactorialDataset(std::move(groups), layout);
}

}  // namespace gen
