#include <doctest.h>

#include <random>

#include "operators.hpp"

using namespace kpot;
using namespace kpot::testing;

namespace {

double rel_dist(const GroupPointd& a, const GroupPointd& b) {
  const double num = std::sqrt((a.x - b.x).squaredNorm() + (a.t - b.t) * (a.t - b.t));
  const double den = std::sqrt(a.x.squaredNorm() + a.t * a.t) + 1.0;
  return num / den;
}

GroupPointd random_point(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> U(-2, 2);
  Vecd x(n);
  for (int i = 0; i < n; ++i) x(i) = U(rng);
  return {x, U(rng)};
}

}  // namespace

TEST_CASE("homogeneous dimension and assembled blocks") {
  const auto h = heat1();
  CHECK(h.homogeneous_dimension() == 3);
  CHECK(h.is_heat());

  const auto p = prototype();
  CHECK(p.homogeneous_dimension() == 6);
  CHECK(p.B() == mat(2, 2, {0, 0, 1, 0}));
  CHECK(p.A() == mat(2, 2, {1, 0, 0, 0}));
  CHECK_FALSE(p.is_heat_like());

  const auto c = chain21();
  CHECK(c.homogeneous_dimension() == 2 * 1 + 1 * 3 + 2);
  CHECK(c.weights() == std::vector<int>{1, 1, 3});

  // det D(lambda) = lambda^Q, checked by expanding the product of the diagonal.
  for (const auto& op : all_operators())
    for (double lambda : {0.5, 1.5, 3.0}) {
      const double det = dilation_diagonal(lambda, op.spec).prod() * lambda * lambda;
      CHECK(det == doctest::Approx(std::pow(lambda, op.spec.homogeneous_dimension())).epsilon(1e-14));
      CHECK(dilation_determinant(lambda, op.spec) ==
            doctest::Approx(std::pow(lambda, op.spec.homogeneous_dimension())).epsilon(1e-14));
    }
}

TEST_CASE("validation errors") {
  auto code = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::IoError;  // sentinel: nothing thrown
  };
  CHECK(code([] { validate_operator(2, {1, 1}, mat(1, 1, {-1}), {mat(1, 1, {1})}); }) ==
        Errc::NotPositiveDefiniteA0);
  CHECK(code([] { validate_operator(2, {2}, mat(2, 2, {1, 0.5, 0, 1}), {}); }) == Errc::NonSymmetricA0);
  CHECK(code([] { validate_operator(2, {1, 1}, mat(1, 1, {1}), {mat(1, 1, {0})}); }) == Errc::RankDeficientBlock);
  CHECK(code([] { validate_operator(3, {1, 2}, mat(1, 1, {1}), {mat(2, 1, {1, 1})}); }) ==
        Errc::BlockSizeMonotonicityViolated);
  CHECK(code([] { validate_operator(3, {1, 1}, mat(1, 1, {1}), {mat(1, 1, {1})}); }) == Errc::DimensionMismatch);
  CHECK(code([] { validate_operator(2, {1, 1}, mat(1, 1, {1}), {}); }) == Errc::DimensionMismatch);

  try {
    validate_operator(4, {2, 1, 1}, Matd(Matd::Identity(2, 2)), {mat(1, 2, {1, 0}), mat(1, 1, {0})});
    FAIL("expected RankDeficientBlock");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::RankDeficientBlock);
    CHECK(e.detail() == 2);
  }
}

TEST_CASE("group law examples") {
  const auto p = prototype();
  const GroupPointd z{vec({1, 0}), 0}, w{vec({0, 0}), 1};
  const auto zw = group_compose(z, w, p);
  CHECK(zw.x(0) == 1.0);
  CHECK(zw.x(1) == -1.0);
  CHECK(zw.t == 1.0);

  const auto inv = group_inverse(GroupPointd{vec({1, 0}), 1}, p);
  CHECK(inv.x(0) == -1.0);
  CHECK(inv.x(1) == -1.0);
  CHECK(inv.t == -1.0);

  const auto h = heat1();
  const GroupPointd a{vec({0.3}), 0.7}, b{vec({-1.1}), 2.0};
  CHECK(group_compose(a, b, h).x(0) == doctest::Approx(-0.8));
  CHECK(group_inverse(a, h).x(0) == -0.3);

  const auto d = dilate(2.0, GroupPointd{vec({1, 1}), 1}, p);
  CHECK(d.x(0) == 2.0);
  CHECK(d.x(1) == 8.0);
  CHECK(d.t == 4.0);
  const auto dh = dilate(2.0, GroupPointd{vec({1.5}), 0.5}, h);
  CHECK(dh.x(0) == 3.0);
  CHECK(dh.t == 2.0);
  CHECK_THROWS_AS(dilate(0.0, a, h), Error);
}

TEST_CASE("group properties on random triples") {
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> L(0.5, 2.0);
  for (const auto& op : all_operators()) {
    CAPTURE(op.name);
    const int n = op.spec.n();
    double worst_assoc = 0, worst_inv = 0, worst_dil = 0;
    for (int k = 0; k < 1000; ++k) {
      const auto z = random_point(rng, n), w = random_point(rng, n), v = random_point(rng, n);
      const auto lhs = group_compose(group_compose(z, w, op.spec), v, op.spec);
      const auto rhs = group_compose(z, group_compose(w, v, op.spec), op.spec);
      worst_assoc = std::max(worst_assoc, rel_dist(lhs, rhs));

      const auto e = GroupPointd::origin(n);
      worst_inv = std::max(worst_inv, rel_dist(group_compose(z, group_inverse(z, op.spec), op.spec), e));
      worst_inv = std::max(worst_inv, rel_dist(group_compose(group_inverse(z, op.spec), z, op.spec), e));

      const double lambda = L(rng);
      const auto a = dilate(lambda, group_compose(z, w, op.spec), op.spec);
      const auto b = group_compose(dilate(lambda, z, op.spec), dilate(lambda, w, op.spec), op.spec);
      worst_dil = std::max(worst_dil, rel_dist(a, b));

      const auto twice = dilate(lambda, dilate(1.3, z, op.spec), op.spec);
      CHECK(rel_dist(twice, dilate(1.3 * lambda, z, op.spec)) < 1e-12);
    }
    CHECK(worst_assoc < 1e-12);
    CHECK(worst_inv < 1e-12);
    CHECK(worst_dil < 1e-12);
  }
}
