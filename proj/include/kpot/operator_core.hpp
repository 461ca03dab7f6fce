#pragma once

// Kolmogorov-type operators  div(A grad) + <Bx, grad> - d/dt  with the
// block structure that makes them translation invariant and homogeneous on
// the group K = (R^{n+1}, o, delta_lambda).

#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "kpot/error.hpp"

namespace kpot {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// A point z = (x, t) of the homogeneous group.
template <typename Scalar>
struct GroupPoint {
  Vec<Scalar> x;
  Scalar t = 0;

  GroupPoint() = default;
  GroupPoint(Vec<Scalar> x_, Scalar t_) : x(std::move(x_)), t(t_) {}

  static GroupPoint origin(int n) { return {Vec<Scalar>::Zero(n), Scalar(0)}; }
  int dim() const { return static_cast<int>(x.size()); }
};

template <typename Scalar>
class OperatorSpec;

template <typename Scalar>
OperatorSpec<Scalar> validate_operator(int n, const std::vector<int>& block_sizes, const Mat<Scalar>& A0,
                                       const std::vector<Mat<Scalar>>& B_blocks);

/// Validated operator data. Only `validate_operator` constructs one, so every
/// instance satisfies the block-structure invariants.
template <typename Scalar>
class OperatorSpec {
 public:
  int n() const { return n_; }
  /// Number of subdiagonal blocks (r); the heat operator has depth 0.
  int depth() const { return static_cast<int>(block_sizes_.size()) - 1; }
  int homogeneous_dimension() const { return Q_; }
  const std::vector<int>& block_sizes() const { return block_sizes_; }
  const Mat<Scalar>& A0() const { return A0_; }
  const std::vector<Mat<Scalar>>& B_blocks() const { return B_blocks_; }
  const Mat<Scalar>& A() const { return A_; }
  const Mat<Scalar>& B() const { return B_; }
  /// Dilation exponent of each spatial coordinate: 2j+1 on block j.
  const std::vector<int>& weights() const { return weights_; }
  /// B^k for k = 0..depth.
  const std::vector<Mat<Scalar>>& B_powers() const { return B_powers_; }

  /// No drift and a single block.
  bool is_heat_like() const { return depth() == 0; }
  bool is_heat() const { return is_heat_like() && A0_ == Mat<Scalar>::Identity(n_, n_); }

 private:
  friend OperatorSpec validate_operator<Scalar>(int, const std::vector<int>&, const Mat<Scalar>&,
                                                const std::vector<Mat<Scalar>>&);
  OperatorSpec() = default;

  int n_ = 0;
  int Q_ = 0;
  std::vector<int> block_sizes_;
  std::vector<int> weights_;
  Mat<Scalar> A0_, A_, B_;
  std::vector<Mat<Scalar>> B_blocks_;
  std::vector<Mat<Scalar>> B_powers_;
};

template <typename Scalar>
OperatorSpec<Scalar> validate_operator(int n, const std::vector<int>& block_sizes, const Mat<Scalar>& A0,
                                       const std::vector<Mat<Scalar>>& B_blocks) {
  using std::abs;
  if (n <= 0 || block_sizes.empty())
    throw Error(Errc::DimensionMismatch, "need n >= 1 and at least one block");
  for (int p : block_sizes)
    if (p < 1) throw Error(Errc::DimensionMismatch, "block sizes must be positive");
  if (std::accumulate(block_sizes.begin(), block_sizes.end(), 0) != n)
    throw Error(Errc::DimensionMismatch, "block sizes do not sum to n");
  for (std::size_t j = 1; j < block_sizes.size(); ++j)
    if (block_sizes[j] > block_sizes[j - 1])
      throw Error(Errc::BlockSizeMonotonicityViolated, "block sizes must be non-increasing");

  const int p0 = block_sizes[0];
  if (A0.rows() != p0 || A0.cols() != p0) throw Error(Errc::DimensionMismatch, "A0 must be p0 x p0");
  if (B_blocks.size() + 1 != block_sizes.size())
    throw Error(Errc::DimensionMismatch, "expected one B block per subdiagonal position");
  for (std::size_t j = 1; j < block_sizes.size(); ++j) {
    const auto& Bj = B_blocks[j - 1];
    if (Bj.rows() != block_sizes[j] || Bj.cols() != block_sizes[j - 1])
      throw Error(Errc::DimensionMismatch, "B" + std::to_string(j) + " has the wrong shape",
                  static_cast<int>(j));
  }
  if (!A0.allFinite()) throw Error(Errc::DimensionMismatch, "A0 has non-finite entries");

  const Scalar a_scale = A0.cwiseAbs().maxCoeff();
  if ((A0 - A0.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-12) * a_scale)
    throw Error(Errc::NonSymmetricA0, "A0 is not symmetric");
  const Mat<Scalar> A0_sym = (A0 + A0.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> eig(A0_sym, Eigen::EigenvaluesOnly);
  const Scalar lmin = eig.eigenvalues().minCoeff();
  const Scalar lnorm = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (!(lmin > Scalar(1e-10) * lnorm) || !(lnorm > 0))
    throw Error(Errc::NotPositiveDefiniteA0, "A0 is not positive definite");

  for (std::size_t j = 1; j < block_sizes.size(); ++j) {
    const auto& Bj = B_blocks[j - 1];
    if (!Bj.allFinite()) throw Error(Errc::DimensionMismatch, "non-finite B block", static_cast<int>(j));
    Eigen::JacobiSVD<Mat<Scalar>> svd(Bj);
    const auto& sv = svd.singularValues();
    const Scalar smax = sv.size() > 0 ? sv(0) : Scalar(0);
    int rank = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k)
      if (smax > 0 && sv(k) > Scalar(1e-10) * smax) ++rank;
    if (rank != block_sizes[j])
      throw Error(Errc::RankDeficientBlock, "B" + std::to_string(j) + " does not have full row rank",
                  static_cast<int>(j));
  }

  OperatorSpec<Scalar> spec;
  spec.n_ = n;
  spec.block_sizes_ = block_sizes;
  spec.A0_ = A0_sym;
  spec.B_blocks_ = B_blocks;
  spec.A_ = Mat<Scalar>::Zero(n, n);
  spec.A_.topLeftCorner(p0, p0) = A0_sym;
  spec.B_ = Mat<Scalar>::Zero(n, n);
  int row = p0, col = 0;
  for (std::size_t j = 1; j < block_sizes.size(); ++j) {
    spec.B_.block(row, col, block_sizes[j], block_sizes[j - 1]) = B_blocks[j - 1];
    col += block_sizes[j - 1];
    row += block_sizes[j];
  }
  spec.Q_ = 2;
  for (std::size_t j = 0; j < block_sizes.size(); ++j) {
    spec.Q_ += static_cast<int>(2 * j + 1) * block_sizes[j];
    for (int k = 0; k < block_sizes[j]; ++k) spec.weights_.push_back(static_cast<int>(2 * j + 1));
  }

  const int r = spec.depth();
  spec.B_powers_.push_back(Mat<Scalar>::Identity(n, n));
  for (int k = 1; k <= r + 1; ++k) spec.B_powers_.push_back(spec.B_powers_.back() * spec.B_);
  // The zero pattern of the block form makes B^{r+1} vanish exactly.
  if (!(spec.B_powers_.back().array() == Scalar(0)).all())
    throw Error(Errc::DimensionMismatch, "B is not nilpotent of order depth+1");
  spec.B_powers_.pop_back();
  return spec;
}

/// E(tau) v = exp(-tau B) v as the finite nilpotent series.
template <typename Scalar, typename Derived>
Vec<Scalar> apply_exp(const OperatorSpec<Scalar>& spec, Scalar tau, const Eigen::MatrixBase<Derived>& v) {
  Vec<Scalar> term = v;
  Vec<Scalar> acc = v;
  for (int k = 1; k <= spec.depth(); ++k) {
    term = (-tau / Scalar(k)) * (spec.B() * term);
    acc += term;
  }
  return acc;
}

/// E(tau) = exp(-tau B).
template <typename Scalar>
Mat<Scalar> exp_matrix(const OperatorSpec<Scalar>& spec, Scalar tau) {
  Mat<Scalar> acc = Mat<Scalar>::Identity(spec.n(), spec.n());
  Scalar c = 1;
  for (int k = 1; k <= spec.depth(); ++k) {
    c *= -tau / Scalar(k);
    acc += c * spec.B_powers()[k];
  }
  return acc;
}

/// (x,t) o (xi,tau) = (xi + E(tau) x, t + tau).
template <typename Scalar>
GroupPoint<Scalar> group_compose(const GroupPoint<Scalar>& z, const GroupPoint<Scalar>& w,
                                 const OperatorSpec<Scalar>& spec) {
  return {w.x + apply_exp(spec, w.t, z.x), z.t + w.t};
}

/// (xi,tau)^{-1} = (-E(-tau) xi, -tau).
template <typename Scalar>
GroupPoint<Scalar> group_inverse(const GroupPoint<Scalar>& z, const OperatorSpec<Scalar>& spec) {
  return {-apply_exp(spec, -z.t, z.x), -z.t};
}

/// Spatial block of the dilation matrix D(lambda).
template <typename Scalar>
Vec<Scalar> dilation_diagonal(Scalar lambda, const OperatorSpec<Scalar>& spec) {
  Vec<Scalar> d(spec.n());
  for (int i = 0; i < spec.n(); ++i) d(i) = std::pow(lambda, Scalar(spec.weights()[i]));
  return d;
}

template <typename Scalar>
GroupPoint<Scalar> dilate(Scalar lambda, const GroupPoint<Scalar>& z, const OperatorSpec<Scalar>& spec) {
  if (!(lambda > 0)) throw Error(Errc::NonPositiveLambda, "dilation factor must be positive");
  return {dilation_diagonal(lambda, spec).cwiseProduct(z.x), lambda * lambda * z.t};
}

/// det D(lambda); equals lambda^Q.
template <typename Scalar>
Scalar dilation_determinant(Scalar lambda, const OperatorSpec<Scalar>& spec) {
  return dilation_diagonal(lambda, spec).prod() * lambda * lambda;
}

using OperatorSpecd = OperatorSpec<double>;
using GroupPointd = GroupPoint<double>;
using Vecd = Vec<double>;
using Matd = Mat<double>;

}  // namespace kpot
