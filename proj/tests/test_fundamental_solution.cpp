#include <doctest.h>

#include <numbers>
#include <random>

#include "kpot/quadrature.hpp"
#include "operators.hpp"

using namespace kpot;
using namespace kpot::testing;

TEST_CASE("gamma examples") {
  const GammaEvaluatord h(heat1()), p(prototype());
  CHECK(h.gamma({vec({0.4}), 0.0}) == 0.0);
  CHECK(h.gamma({vec({0.4}), -1.0}) == 0.0);
  CHECK(h.gamma({vec({0.0}), 1 / (4 * std::numbers::pi)}) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(p.gamma({vec({0, 0}), 1.0}) == doctest::Approx(std::sqrt(3.0) / (2 * std::numbers::pi)).epsilon(1e-14));
  // Gauss-Weierstrass kernel.
  const double x = 0.7, t = 0.3;
  CHECK(h.gamma({vec({x}), t}) ==
        doctest::Approx(std::exp(-x * x / (4 * t)) / std::sqrt(4 * std::numbers::pi * t)).epsilon(1e-14));
}

TEST_CASE("Gamma and left invariance") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-1, 1);
  for (const auto& op : all_operators()) {
    CAPTURE(op.name);
    const GammaEvaluatord ev(op.spec);
    const int n = op.spec.n();
    auto rp = [&] {
      Vecd x(n);
      for (int i = 0; i < n; ++i) x(i) = U(rng);
      return GroupPointd{x, U(rng)};
    };
    const auto z = rp();
    CHECK(ev.Gamma(z, z) == 0.0);
    for (int k = 0; k < 200; ++k) {
      const auto a = rp(), b = rp(), w = rp();
      const double g = ev.Gamma(a, b);
      // Gamma may underflow to zero for a.t > b.t, but never is positive otherwise.
      if (a.t <= b.t) CHECK(g == 0.0);
      if (a.t - b.t > 0.1 && (b.x - a.x).norm() < 0.5) CHECK(g > 0);
      const double gw = ev.Gamma(group_compose(w, a, op.spec), group_compose(w, b, op.spec));
      CHECK(gw == doctest::Approx(g).epsilon(1e-10));
    }
  }
}

TEST_CASE("homogeneity of gamma and W") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1, 1), T(0.05, 2), L(0.5, 2);
  for (const auto& op : all_operators()) {
    CAPTURE(op.name);
    const GammaEvaluatord ev(op.spec);
    const int n = op.spec.n(), Q = op.spec.homogeneous_dimension();
    double worst_g = 0, worst_w = 0;
    for (int k = 0; k < 1000; ++k) {
      Vecd x(n);
      for (int i = 0; i < n; ++i) x(i) = U(rng);
      const GroupPointd z{x, T(rng)};
      const double lambda = L(rng);
      const auto dz = dilate(lambda, z, op.spec);
      const double g = ev.gamma(dz);
      // denormal results carry no relative accuracy
      if (g > 1e-290) worst_g = std::max(worst_g, std::abs(g - std::pow(lambda, 2 - Q) * ev.gamma(z)) / g);
      const double w = ev.W(dz);
      if (w > 1e-290) worst_w = std::max(worst_w, std::abs(w - ev.W(z) / (lambda * lambda)) / w);
    }
    CHECK(worst_g < 1e-10);
    CHECK(worst_w < 1e-10);
  }
}

TEST_CASE("kernel W examples") {
  const GammaEvaluatord h(heat1()), p(prototype());
  CHECK(h.W({vec({2}), 1.0}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p.W({vec({1, 0}), 1.0}) == doctest::Approx(4.0).epsilon(1e-13));
  for (double t : {0.5, 2.0, -1.0}) {
    const Vecd x = covariance_at(t, p.spec()) * vec({0, 1});
    CHECK(std::abs(p.W({x, t})) < 1e-12);
  }
  CHECK_THROWS_AS(h.W({vec({1}), 0.0}), Error);
  const GammaEvaluatord h2(heat2());
  CHECK(h2.W({vec({1, 1}), 0.5}) == doctest::Approx(0.25 * 2 / 0.25).epsilon(1e-14));
}

TEST_CASE("unit mass") {
  for (const auto& op : all_operators()) {
    CAPTURE(op.name);
    const GammaEvaluatord ev(op.spec);
    for (double t : {0.1, 1.0, 10.0}) CHECK(std::abs(gaussian_mass(ev, t, 60) - 1.0) < 1e-6);
  }
}
