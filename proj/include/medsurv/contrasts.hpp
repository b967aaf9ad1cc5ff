#pragma once

#include <algorithm>
#include <cmath>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "medsurv/survdata.hpp"

namespace medsurv {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Relative cut-off below which singular values count as zero.
inline constexpr double singular_value_cutoff = 1e-13;

/// P_k = I_k - J_k / k. Throws std::invalid_argument for k < 2.
template <typename Scalar = double>
MatrixX<Scalar> centering(Eigen::Index k) {
  if (k < 2) throw std::invalid_argument("centering matrix needs k >= 2");
  return MatrixX<Scalar>::Identity(k, k) -
         MatrixX<Scalar>::Constant(k, k, Scalar(1) / static_cast<Scalar>(k));
}

/// J_k / k, the averaging matrix.
template <typename Scalar = double>
MatrixX<Scalar> averaging(Eigen::Index k) {
  return MatrixX<Scalar>::Constant(k, k, Scalar(1) / static_cast<Scalar>(k));
}

template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> kronecker(const Eigen::MatrixBase<DerivedA>& a,
                                             const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  MatrixX<Scalar> out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

namespace detail {

template <typename Scalar>
Scalar singular_tolerance(Eigen::Index rows, Eigen::Index cols, Scalar largest) {
  return static_cast<Scalar>(std::max(rows, cols)) * largest *
         static_cast<Scalar>(singular_value_cutoff);
}

}  // namespace detail

/// Moore-Penrose inverse through the SVD. Singular values below
/// max(rows, cols) * sigma_max * 1e-13 are treated as zero.
template <typename Derived>
MatrixX<typename Derived::Scalar> moore_penrose(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.size() == 0) return MatrixX<Scalar>::Zero(m.cols(), m.rows());
  Eigen::JacobiSVD<MatrixX<Scalar>> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const Scalar tol = detail::singular_tolerance(m.rows(), m.cols(), s.size() ? s(0) : Scalar(0));
  VectorX<Scalar> inv = VectorX<Scalar>::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) inv(i) = Scalar(1) / s(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Number of singular values above the moore_penrose cut-off.
template <typename Derived>
Eigen::Index rank(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<MatrixX<Scalar>> svd(m);
  const auto& s = svd.singularValues();
  const Scalar tol = detail::singular_tolerance(m.rows(), m.cols(), s(0));
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) ++r;
  return r;
}

/// T = H'(HH')^+ H: symmetric, idempotent, same null space as H.
template <typename Derived>
MatrixX<typename Derived::Scalar> projection(const Eigen::MatrixBase<Derived>& h) {
  const MatrixX<typename Derived::Scalar> hht = h * h.transpose();
  MatrixX<typename Derived::Scalar> t = h.transpose() * moore_penrose(hht) * h;
  return (t + t.transpose()) / 2;
}

/// Which null hypothesis about the group medians to test.
struct HypothesisSpec {
  enum class Kind { k_sample_equality, main_effect, interaction, custom };

  Kind kind = Kind::k_sample_equality;
  std::string factor;           ///< main_effect only
  Eigen::MatrixXd matrix;       ///< custom only

  static HypothesisSpec equality() { return {}; }
  static HypothesisSpec main_effect(std::string factor) {
    return {Kind::main_effect, std::move(factor), {}};
  }
  static HypothesisSpec interaction() { return {Kind::interaction, {}, {}}; }
  static HypothesisSpec custom(Eigen::MatrixXd h) { return {Kind::custom, {}, std::move(h)}; }

  std::string describe() const;
};

/// Parses "equality", "interaction", "main-effect:<factor>" or
/// "custom:<csv file>". Throws DataError.
HypothesisSpec parse_hypothesis(std::string_view text);

/// Contrast matrix for a hypothesis on a layout:
///   equality          P_k
///   main effect of f  kron over factors of (P for f, J/l otherwise)
///   interaction       kron of P over all factors (needs >= 2 factors)
///   custom            validated copy (rows sum to 0, k columns)
/// Throws DataError on mismatch.
Eigen::MatrixXd hypothesis_matrix(const HypothesisSpec& spec, const FactorialLayout& layout);

/// Plain numeric CSV, one matrix row per line; blank lines and lines starting
/// with '#' are skipped.
Eigen::MatrixXd read_matrix_csv(std::istream& in);
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m);

}  // namespace medsurv
