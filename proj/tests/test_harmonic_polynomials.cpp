#include <doctest.h>

#include <random>

#include "kpot/harmonic_polynomials.hpp"
#include "operators.hpp"

using namespace kpot;
using namespace kpot::testing;

namespace {

AnisoPolynomial poly(int n, std::initializer_list<std::pair<Monomial, double>> terms) {
  AnisoPolynomial p(n);
  for (const auto& [m, c] : terms) p.add_term(m, c);
  return p;
}

/// Residual of the least-squares fit of `target` by the span of `basis`, in
/// coefficient space.
double span_residual(const std::vector<AnisoPolynomial>& basis, const AnisoPolynomial& target) {
  std::map<Monomial, int> index;
  auto idx = [&](const Monomial& m) { return index.try_emplace(m, static_cast<int>(index.size())).first->second; };
  for (const auto& b : basis)
    for (const auto& [m, c] : b.terms()) idx(m);
  for (const auto& [m, c] : target.terms()) idx(m);
  Matd M = Matd::Zero(index.size(), basis.size());
  Vecd y = Vecd::Zero(index.size());
  for (std::size_t k = 0; k < basis.size(); ++k)
    for (const auto& [m, c] : basis[k].terms()) M(index[m], k) = c;
  for (const auto& [m, c] : target.terms()) y(index[m]) = c;
  const Vecd coef = M.colPivHouseholderQr().solve(y);
  return (M * coef - y).norm();
}

}  // namespace

TEST_CASE("L on monomials") {
  const auto h = heat1();
  // L(x^2) = 2, L(t) = -1, L(x^2 + 2t) = 0.
  CHECK(apply_L(poly(1, {{{{2}, 0}, 1.0}}), h).terms() == poly(1, {{{{0}, 0}, 2.0}}).terms());
  CHECK(apply_L(AnisoPolynomial::time(1), h).terms() == poly(1, {{{{0}, 0}, -1.0}}).terms());
  CHECK(apply_L(poly(1, {{{{2}, 0}, 1.0}, {{{0}, 1}, 2.0}}), h).is_zero());

  const auto p = prototype();
  // L = dxx + x dy - dt: L(y) = x, L(y + t x) = x - x = 0, L(x^3 - 6ty) ... checked by hand.
  CHECK(apply_L(AnisoPolynomial::coordinate(2, 1), p).terms() == AnisoPolynomial::coordinate(2, 0).terms());
  CHECK(apply_L(poly(2, {{{{0, 1}, 0}, 1.0}, {{{1, 0}, 1}, 1.0}}), p).is_zero());
  // L(x^3) = 6x; L(x y) = x^2; L(x^2 y) = 2y + x^3.
  CHECK(apply_L(poly(2, {{{{3, 0}, 0}, 1.0}}), p).terms() == poly(2, {{{{1, 0}, 0}, 6.0}}).terms());
  CHECK(apply_L(poly(2, {{{{1, 1}, 0}, 1.0}}), p).terms() == poly(2, {{{{2, 0}, 0}, 1.0}}).terms());
  CHECK(apply_L(poly(2, {{{{2, 1}, 0}, 1.0}}), p).terms() ==
        poly(2, {{{{0, 1}, 0}, 2.0}, {{{3, 0}, 0}, 1.0}}).terms());
}

TEST_CASE("L agrees with finite differences") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-1, 1);
  for (const auto& op : all_operators()) {
    CAPTURE(op.name);
    const int n = op.spec.n();
    for (const auto& m : monomials_of_degree(op.spec, 5)) {
      AnisoPolynomial u(n);
      u.add_term(m, 1.0);
      const auto Lu = apply_L(u, op.spec);
      Vecd x(n);
      for (int i = 0; i < n; ++i) x(i) = U(rng);
      const double t = U(rng), h = 1e-4;
      double fd = -(u(x, t + h) - u(x, t - h)) / (2 * h);
      const Vecd Bx = op.spec.B() * x;
      for (int i = 0; i < n; ++i) {
        const Vecd ei = Vecd::Unit(n, i) * h;
        fd += Bx(i) * (u(x + ei, t) - u(x - ei, t)) / (2 * h);
        for (int j = 0; j < n; ++j) {
          const Vecd ej = Vecd::Unit(n, j) * h;
          const double dij = (u(x + ei + ej, t) - u(x + ei - ej, t) - u(x - ei + ej, t) + u(x - ei - ej, t)) / (4 * h * h);
          fd += op.spec.A()(i, j) * dij;
        }
      }
      CHECK(Lu(x, t) == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("monomial enumeration") {
  const auto p = prototype();
  // weights (1, 3), t has weight 2
  CHECK(monomials_of_degree(p, 0).size() == 1);
  CHECK(monomials_of_degree(p, 1).size() == 1);
  CHECK(monomials_of_degree(p, 2).size() == 2);  // x^2, t
  CHECK(monomials_of_degree(p, 3).size() == 3);  // x^3, xt, y
  for (int m = 0; m <= 8; ++m)
    for (const auto& mono : monomials_of_degree(p, m)) CHECK(aniso_degree(mono, p) == m);
  CHECK(monomials_of_degree(p, -1).empty());
}

TEST_CASE("harmonic bases") {
  const auto h = heat1();
  const auto hb = harmonic_basis(h, 4);
  // heat polynomials: one per degree
  CHECK(hb.dimension_per_degree == std::vector<int>{1, 1, 1, 1, 1});
  CHECK(hb.residual == 0.0);
  CHECK(span_residual(hb.elements, poly(1, {{{{2}, 0}, 1.0}, {{{0}, 1}, 2.0}})) < 1e-14);
  CHECK(span_residual(hb.elements, poly(1, {{{{3}, 0}, 1.0}, {{{1}, 1}, 6.0}})) < 1e-14);
  CHECK(span_residual(hb.elements, poly(1, {{{{2}, 0}, 1.0}})) > 0.1);

  const auto p = prototype();
  const auto pb = harmonic_basis(p, 4);
  CHECK(pb.residual < 1e-14);
  CHECK(span_residual(pb.elements, AnisoPolynomial::constant(2, 1)) < 1e-14);
  CHECK(span_residual(pb.elements, AnisoPolynomial::coordinate(2, 0)) < 1e-14);
  CHECK(span_residual(pb.elements, poly(2, {{{{0, 1}, 0}, 1.0}, {{{1, 0}, 1}, 1.0}})) < 1e-14);
  CHECK(span_residual(pb.elements, AnisoPolynomial::coordinate(2, 1)) > 0.1);

  for (const auto& op : all_operators()) {
    CAPTURE(op.name);
    const auto b = harmonic_basis(op.spec, 6);
    CHECK(b.residual < 1e-12);
    CHECK(b.dimension_per_degree[0] == 1);
    CHECK(b.dimension_per_degree[1] == op.spec.block_sizes()[0]);
    for (std::size_t k = 0; k < b.elements.size(); ++k) {
      CHECK(b.elements[k].aniso_degree(op.spec) == b.degrees[k]);
      CHECK(apply_L(b.elements[k], op.spec).max_abs_coeff() < 1e-12);
    }
  }
}

TEST_CASE("text round trip") {
  const auto b = harmonic_basis(chain21(), 5);
  for (const auto& u : b.elements) {
    const auto v = AnisoPolynomial::from_text(u.to_text(), 3);
    CHECK(v.terms() == u.terms());
  }
  CHECK(poly(1, {{{{2}, 0}, 1.0}, {{{0}, 1}, 2.0}}).to_string() == "2*t + x1^2");
  CHECK_THROWS_AS(AnisoPolynomial::from_text("1 2", 2), Error);
}
