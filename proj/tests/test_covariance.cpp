#include <doctest.h>

#include <random>

#include "operators.hpp"

using namespace kpot;
using namespace kpot::testing;

TEST_CASE("exponential polynomial") {
  const auto E = exponential_polynomial(prototype());
  CHECK(E.degree() == 1);
  CHECK(E(0.0) == Matd::Identity(2, 2));
  CHECK(E(2.5) == mat(2, 2, {1, 0, -2.5, 1}));
  CHECK(exponential_polynomial(heat2())(3.0) == Matd::Identity(2, 2));
  for (const auto& op : all_operators()) {
    const auto Ep = exponential_polynomial(op.spec);
    for (double s : {-1.7, 0.3, 2.0}) {
      CHECK(Ep(s).determinant() == doctest::Approx(1.0).epsilon(1e-14));
      CHECK((Ep(s) * Ep(-s) - Matd::Identity(op.spec.n(), op.spec.n())).norm() < 1e-13);
      CHECK((Ep(s) - exp_matrix(op.spec, s)).norm() < 1e-14);
    }
  }
}

TEST_CASE("covariance polynomial examples") {
  const auto C = covariance_polynomial(prototype());
  CHECK(C(0.0).isZero());
  for (double t : {0.1, 1.0, 3.0}) {
    const Matd expected = mat(2, 2, {t, -t * t / 2, -t * t / 2, t * t * t / 3});
    CHECK((C(t) - expected).norm() <= 4e-16 * expected.norm());
  }
  CHECK(covariance_at(2.0, heat2()) == 2.0 * Matd::Identity(2, 2));
  CHECK(covariance_inverse_at(2.0, heat2()).isApprox(0.5 * Matd::Identity(2, 2), 1e-15));

  const Matd Cinv = covariance_inverse_at(1.0, prototype());
  CHECK(Cinv.isApprox(mat(2, 2, {4, 6, 6, 12}), 1e-13));
  CHECK_THROWS_AS(covariance_inverse_at(0.0, prototype()), Error);

  const auto det = det_covariance_polynomial(prototype());
  CHECK(det.degree() == 4);
  CHECK(det.coeff(4) == doctest::Approx(1.0 / 12).epsilon(1e-15));
  for (int k = 0; k < 4; ++k) CHECK(std::abs(det.coeff(k)) < 1e-16);
  CHECK(det_covariance_polynomial(heat2())(2.0) == 4.0);
  CHECK(det_covariance_polynomial(heat1())(5.0) == 5.0);

  Eigen::SelfAdjointEigenSolver<Matd> eig(C(-1.0));
  CHECK(eig.eigenvalues().maxCoeff() < 0);
}

TEST_CASE("covariance properties") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.05, 3.0);
  for (const auto& op : all_operators()) {
    CAPTURE(op.name);
    const auto C = covariance_polynomial(op.spec);
    const auto E = exponential_polynomial(op.spec);
    CHECK(C.degree() <= 2 * op.spec.depth() + 1);
    for (const auto& M : C.coeffs()) CHECK(M == M.transpose());
    double worst = 0;
    for (int k = 0; k < 100; ++k) {
      const double t = U(rng), h = 1e-5;
      const Matd fd = (C(t + h) - C(t - h)) / (2 * h);
      const Matd exact = E(t) * op.spec.A() * E(t).transpose();
      worst = std::max(worst, (fd - exact).cwiseAbs().maxCoeff() / std::max(1.0, exact.cwiseAbs().maxCoeff()));
    }
    CHECK(worst < 1e-8);

    const auto det = det_covariance_polynomial(op.spec);
    const int Q = op.spec.homogeneous_dimension();
    for (int e = -3; e <= 3; ++e) {
      const double t = std::pow(10.0, e);
      Eigen::SelfAdjointEigenSolver<Matd> pos(C(t)), neg(C(-t));
      CHECK(pos.eigenvalues().minCoeff() > 0);
      CHECK(neg.eigenvalues().maxCoeff() < 0);
      // Homogeneity forces det C(t) = det C(1) t^{Q-2}.
      CHECK(det(t) == doctest::Approx(det(1.0) * std::pow(t, Q - 2)).epsilon(1e-12));
      const auto f = factor_covariance(C(t), t);
      CHECK(f.abs_det == doctest::Approx(det(t)).epsilon(1e-12));
      const Matd I = Matd::Identity(op.spec.n(), op.spec.n());
      CHECK((C(t) * f.inverse - I).cwiseAbs().maxCoeff() < 1e-10);
    }
    double prev = 0;
    for (int k = 1; k <= 50; ++k) {
      const double v = det(0.1 * k);
      CHECK(v > prev);
      prev = v;
    }
  }
}

TEST_CASE("equilibrated factorization at tiny times") {
  const auto spec = chain21();
  const Covariance<double> cov(spec);
  for (double t : {1e-6, 1e-9, -1e-9}) {
    const auto f = cov.factor(t, true);
    const Matd I = Matd::Identity(3, 3);
    // Entries of C scale like |t|^{(w_i + w_j)/2}; compare in the scaled frame.
    Vecd S(3);
    for (int i = 0; i < 3; ++i) S(i) = std::pow(std::abs(t), -spec.weights()[i] / 2.0);
    CHECK((S.asDiagonal() * f.C * f.inverse * S.cwiseInverse().asDiagonal() - I).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((f.cholesky * f.cholesky.transpose() - f.sign * f.C).cwiseAbs().maxCoeff() <=
          1e-14 * f.C.cwiseAbs().maxCoeff());
    CHECK_FALSE(f.ill_conditioned);
  }
}
