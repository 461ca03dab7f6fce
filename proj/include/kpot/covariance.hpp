#pragma once

// E(s) = exp(-sB) and C(t) = int_0^t E(s) A E(s)^T ds as exact matrix
// polynomials, plus factorizations of C(t) used by every kernel evaluation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "kpot/operator_core.hpp"

namespace kpot {

/// Univariate polynomial sum_k c_k t^k.
template <typename Scalar>
class UniPolynomial {
 public:
  UniPolynomial() = default;
  explicit UniPolynomial(std::vector<Scalar> coeffs) : c_(std::move(coeffs)) { trim(); }

  static UniPolynomial constant(Scalar v) { return UniPolynomial(std::vector<Scalar>{v}); }
  static UniPolynomial monomial(Scalar v, int k) {
    std::vector<Scalar> c(static_cast<std::size_t>(k) + 1, Scalar(0));
    c.back() = v;
    return UniPolynomial(std::move(c));
  }

  const std::vector<Scalar>& coeffs() const { return c_; }
  int degree() const { return c_.empty() ? -1 : static_cast<int>(c_.size()) - 1; }
  Scalar coeff(int k) const { return k >= 0 && k < static_cast<int>(c_.size()) ? c_[k] : Scalar(0); }

  Scalar operator()(Scalar t) const {
    Scalar acc = 0;
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * t + *it;
    return acc;
  }

  UniPolynomial derivative() const {
    std::vector<Scalar> d;
    for (std::size_t k = 1; k < c_.size(); ++k) d.push_back(Scalar(k) * c_[k]);
    return UniPolynomial(std::move(d));
  }

  friend UniPolynomial operator+(const UniPolynomial& a, const UniPolynomial& b) {
    std::vector<Scalar> c(std::max(a.c_.size(), b.c_.size()), Scalar(0));
    for (std::size_t k = 0; k < a.c_.size(); ++k) c[k] += a.c_[k];
    for (std::size_t k = 0; k < b.c_.size(); ++k) c[k] += b.c_[k];
    return UniPolynomial(std::move(c));
  }
  friend UniPolynomial operator-(const UniPolynomial& a, const UniPolynomial& b) {
    return a + UniPolynomial::scaled(b, Scalar(-1));
  }
  friend UniPolynomial operator*(const UniPolynomial& a, const UniPolynomial& b) {
    if (a.c_.empty() || b.c_.empty()) return {};
    std::vector<Scalar> c(a.c_.size() + b.c_.size() - 1, Scalar(0));
    for (std::size_t i = 0; i < a.c_.size(); ++i)
      for (std::size_t j = 0; j < b.c_.size(); ++j) c[i + j] += a.c_[i] * b.c_[j];
    return UniPolynomial(std::move(c));
  }
  static UniPolynomial scaled(const UniPolynomial& a, Scalar s) {
    std::vector<Scalar> c = a.c_;
    for (auto& v : c) v *= s;
    return UniPolynomial(std::move(c));
  }

 private:
  void trim() {
    while (!c_.empty() && c_.back() == Scalar(0)) c_.pop_back();
  }
  std::vector<Scalar> c_;
};

/// P(t) = sum_k t^k M_k with square coefficient matrices.
template <typename Scalar>
class MatrixPolynomial {
 public:
  MatrixPolynomial() = default;
  MatrixPolynomial(int dim, std::vector<Mat<Scalar>> coeffs) : dim_(dim), coeffs_(std::move(coeffs)) {}

  int dim() const { return dim_; }
  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
  const std::vector<Mat<Scalar>>& coeffs() const { return coeffs_; }

  /// Horner evaluation.
  Mat<Scalar> operator()(Scalar t) const {
    Mat<Scalar> acc = Mat<Scalar>::Zero(dim_, dim_);
    for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * t + *it;
    return acc;
  }

  MatrixPolynomial derivative() const {
    std::vector<Mat<Scalar>> d;
    for (std::size_t k = 1; k < coeffs_.size(); ++k) d.push_back(Scalar(k) * coeffs_[k]);
    if (d.empty()) d.push_back(Mat<Scalar>::Zero(dim_, dim_));
    return {dim_, std::move(d)};
  }

  /// Entry (i,j) as a univariate polynomial.
  UniPolynomial<Scalar> entry(int i, int j) const {
    std::vector<Scalar> c;
    for (const auto& M : coeffs_) c.push_back(M(i, j));
    return UniPolynomial<Scalar>(std::move(c));
  }

 private:
  int dim_ = 0;
  std::vector<Mat<Scalar>> coeffs_;
};

template <typename Scalar>
MatrixPolynomial<Scalar> exponential_polynomial(const OperatorSpec<Scalar>& spec) {
  std::vector<Mat<Scalar>> c;
  Scalar f = 1;
  for (int k = 0; k <= spec.depth(); ++k) {
    if (k > 0) f *= Scalar(-1) / Scalar(k);
    c.push_back(f * spec.B_powers()[k]);
  }
  return {spec.n(), std::move(c)};
}

/// Term-by-term integration of E(s) A E(s)^T, which has degree <= 2r.
template <typename Scalar>
MatrixPolynomial<Scalar> covariance_polynomial(const OperatorSpec<Scalar>& spec) {
  const auto E = exponential_polynomial(spec);
  const int n = spec.n();
  const int d = E.degree();
  std::vector<Mat<Scalar>> integrand(static_cast<std::size_t>(2 * d + 1), Mat<Scalar>::Zero(n, n));
  for (int i = 0; i <= d; ++i)
    for (int j = 0; j <= d; ++j) integrand[i + j] += E.coeffs()[i] * spec.A() * E.coeffs()[j].transpose();
  std::vector<Mat<Scalar>> c{Mat<Scalar>::Zero(n, n)};
  for (int k = 0; k <= 2 * d; ++k) {
    Mat<Scalar> M = integrand[k] / Scalar(k + 1);
    c.push_back((M + M.transpose()) / Scalar(2));
  }
  return {n, std::move(c)};
}

namespace detail {

template <typename Scalar>
UniPolynomial<Scalar> cofactor_det(const std::vector<std::vector<UniPolynomial<Scalar>>>& m) {
  const std::size_t n = m.size();
  if (n == 1) return m[0][0];
  UniPolynomial<Scalar> acc;
  for (std::size_t col = 0; col < n; ++col) {
    if (m[0][col].degree() < 0) continue;
    std::vector<std::vector<UniPolynomial<Scalar>>> minor;
    for (std::size_t i = 1; i < n; ++i) {
      std::vector<UniPolynomial<Scalar>> row;
      for (std::size_t j = 0; j < n; ++j)
        if (j != col) row.push_back(m[i][j]);
      minor.push_back(std::move(row));
    }
    auto term = m[0][col] * cofactor_det(minor);
    acc = (col % 2 == 0) ? acc + term : acc - term;
  }
  return acc;
}

}  // namespace detail

/// det C(t) as an exact polynomial: cofactor expansion over the polynomial
/// ring for n <= 4, least-squares interpolation at Chebyshev nodes otherwise.
template <typename Scalar>
UniPolynomial<Scalar> det_covariance_polynomial(const OperatorSpec<Scalar>& spec) {
  const auto C = covariance_polynomial(spec);
  const int n = spec.n();
  if (n <= 4) {
    std::vector<std::vector<UniPolynomial<Scalar>>> m(n, std::vector<UniPolynomial<Scalar>>(n));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m[i][j] = C.entry(i, j);
    return detail::cofactor_det(m);
  }
  const int deg = n * (2 * spec.depth() + 1);
  const int npts = 2 * deg + 1;
  Mat<Scalar> V(npts, deg + 1);
  Vec<Scalar> y(npts);
  const Scalar pi = std::acos(Scalar(-1));
  for (int k = 0; k < npts; ++k) {
    const Scalar t = std::cos(pi * (Scalar(k) + Scalar(0.5)) / Scalar(npts));
    Scalar p = 1;
    for (int j = 0; j <= deg; ++j) {
      V(k, j) = p;
      p *= t;
    }
    y(k) = C(t).determinant();
  }
  Vec<Scalar> coef = V.colPivHouseholderQr().solve(y);
  const Scalar scale = coef.cwiseAbs().maxCoeff();
  std::vector<Scalar> c(coef.data(), coef.data() + coef.size());
  for (auto& v : c)
    if (std::abs(v) < Scalar(1e-13) * scale) v = 0;
  return UniPolynomial<Scalar>(std::move(c));
}

/// Factorization of the definite matrix C(t), t != 0. With sign = sign(t),
/// sign*C = G G^T and the inverse is computed on the diagonally equilibrated
/// matrix so the strongly graded entries of C(t) at small |t| stay accurate.
template <typename Scalar>
struct CovarianceFactor {
  Scalar t = 0;
  int sign = 1;
  Mat<Scalar> C;
  Mat<Scalar> inverse;
  Mat<Scalar> cholesky;  ///< G with sign*C = G G^T (lower triangular)
  Scalar det = 0;        ///< det C(t) (carries sign^n)
  Scalar abs_det = 0;
  Scalar condition = 1;  ///< condition number of the equilibrated matrix (when requested)
  bool ill_conditioned = false;
};

template <typename Scalar>
CovarianceFactor<Scalar> factor_covariance(const Mat<Scalar>& C, Scalar t, bool want_condition = false) {
  if (t == Scalar(0)) throw Error(Errc::SingularAtZero, "C(0) = 0 is singular");
  CovarianceFactor<Scalar> f;
  f.t = t;
  f.sign = t > 0 ? 1 : -1;
  f.C = C;
  const int n = static_cast<int>(C.rows());
  const Mat<Scalar> S = Scalar(f.sign) * C;
  Vec<Scalar> d(n);
  for (int i = 0; i < n; ++i) d(i) = Scalar(1) / std::sqrt(S(i, i));
  const Mat<Scalar> Sh = d.asDiagonal() * S * d.asDiagonal();
  Eigen::LLT<Mat<Scalar>> llt(Sh);
  const Mat<Scalar> L = llt.matrixL();
  f.cholesky = d.cwiseInverse().asDiagonal() * L;
  const Mat<Scalar> Shinv = llt.solve(Mat<Scalar>::Identity(n, n));
  f.inverse = Scalar(f.sign) * (d.asDiagonal() * Shinv * d.asDiagonal());
  f.inverse = (f.inverse + f.inverse.transpose()) / Scalar(2);
  Scalar ld = L.diagonal().prod();
  f.abs_det = ld * ld / d.array().square().prod();
  f.det = (f.sign < 0 && n % 2 == 1) ? -f.abs_det : f.abs_det;
  if (want_condition) {
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> eig(Sh, Eigen::EigenvaluesOnly);
    const Scalar lo = eig.eigenvalues().minCoeff();
    const Scalar hi = eig.eigenvalues().maxCoeff();
    f.condition = lo > 0 ? hi / lo : std::numeric_limits<Scalar>::infinity();
    f.ill_conditioned = f.condition > Scalar(1e14);
  }
  return f;
}

/// Bundles the polynomials of one operator so evaluations never rebuild them.
template <typename Scalar>
class Covariance {
 public:
  explicit Covariance(const OperatorSpec<Scalar>& spec)
      : E_(exponential_polynomial(spec)), C_(covariance_polynomial(spec)), det_(det_covariance_polynomial(spec)) {}

  const MatrixPolynomial<Scalar>& exponential() const { return E_; }
  const MatrixPolynomial<Scalar>& covariance() const { return C_; }
  const UniPolynomial<Scalar>& det() const { return det_; }

  Mat<Scalar> at(Scalar t) const { return C_(t); }
  CovarianceFactor<Scalar> factor(Scalar t, bool want_condition = false) const {
    return factor_covariance(C_(t), t, want_condition);
  }

 private:
  MatrixPolynomial<Scalar> E_;
  MatrixPolynomial<Scalar> C_;
  UniPolynomial<Scalar> det_;
};

template <typename Scalar>
Mat<Scalar> covariance_at(Scalar t, const OperatorSpec<Scalar>& spec) {
  return covariance_polynomial(spec)(t);
}

/// C^{-1}(t). Throws SingularAtZero at t = 0; ill-conditioning is reported via
/// the optional out-parameter rather than thrown.
template <typename Scalar>
Mat<Scalar> covariance_inverse_at(Scalar t, const OperatorSpec<Scalar>& spec, bool* ill_conditioned = nullptr) {
  auto f = factor_covariance(covariance_at(t, spec), t, true);
  if (ill_conditioned) *ill_conditioned = f.ill_conditioned;
  return f.inverse;
}

}  // namespace kpot
