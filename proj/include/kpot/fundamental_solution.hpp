#pragma once

#include <cmath>
#include <memory>

#include "kpot/covariance.hpp"

namespace kpot {

/// Evaluates the fundamental solution gamma (pole at the origin), its
/// translates Gamma(z, zeta) = gamma(zeta^{-1} o z), and the mean-value
/// kernel W(x,t) = <A C^{-1}(t) x, C^{-1}(t) x> / 4.
template <typename Scalar>
class GammaEvaluator {
 public:
  explicit GammaEvaluator(OperatorSpec<Scalar> spec)
      : spec_(std::move(spec)),
        cov_(spec_),
        normalization_(std::pow(Scalar(4) * std::acos(Scalar(-1)), -Scalar(spec_.n()) / Scalar(2))) {}

  const OperatorSpec<Scalar>& spec() const { return spec_; }
  const Covariance<Scalar>& covariance() const { return cov_; }
  int n() const { return spec_.n(); }
  /// (4 pi)^{-n/2}
  Scalar normalization() const { return normalization_; }

  Scalar gamma(const GroupPoint<Scalar>& z) const {
    if (!(z.t > 0)) return 0;
    return gamma(z.x, cov_.factor(z.t));
  }

  /// gamma at (x, f.t) with a precomputed factor of C(f.t), f.t > 0.
  Scalar gamma(const Vec<Scalar>& x, const CovarianceFactor<Scalar>& f) const {
    const Scalar q = x.dot(f.inverse * x);
    const Scalar expo = -q / Scalar(4);
    if (expo < Scalar(-745)) return 0;
    return normalization_ / std::sqrt(f.abs_det) * std::exp(expo);
  }

  Scalar Gamma(const GroupPoint<Scalar>& z, const GroupPoint<Scalar>& zeta) const {
    return gamma(group_compose(group_inverse(zeta, spec_), z, spec_));
  }

  Scalar W(const GroupPoint<Scalar>& z) const {
    if (z.t == Scalar(0)) throw Error(Errc::TimeZero, "W is undefined on t = 0");
    return W(z.x, cov_.factor(z.t));
  }

  Scalar W(const Vec<Scalar>& x, const CovarianceFactor<Scalar>& f) const {
    const Vec<Scalar> y = f.inverse * x;
    return y.dot(spec_.A() * y) / Scalar(4);
  }

  /// K(t) = C^{-1}(t) A C^{-1}(t); W(x,t) = x^T K x / 4.
  Mat<Scalar> kernel_matrix(const CovarianceFactor<Scalar>& f) const {
    Mat<Scalar> K = f.inverse * spec_.A() * f.inverse;
    return (K + K.transpose()) / Scalar(2);
  }

 private:
  OperatorSpec<Scalar> spec_;
  Covariance<Scalar> cov_;
  Scalar normalization_;
};

template <typename Scalar>
Scalar gamma_at(const GroupPoint<Scalar>& z, const GammaEvaluator<Scalar>& ev) {
  return ev.gamma(z);
}

template <typename Scalar>
Scalar Gamma(const GroupPoint<Scalar>& z, const GroupPoint<Scalar>& zeta, const GammaEvaluator<Scalar>& ev) {
  return ev.Gamma(z, zeta);
}

template <typename Scalar>
Scalar kernel_W(const GroupPoint<Scalar>& z, const GammaEvaluator<Scalar>& ev) {
  return ev.W(z);
}

using GammaEvaluatord = GammaEvaluator<double>;
using Evaluator = std::shared_ptr<const GammaEvaluatord>;

inline Evaluator make_evaluator(OperatorSpecd spec) {
  return std::make_shared<const GammaEvaluatord>(std::move(spec));
}

}  // namespace kpot
