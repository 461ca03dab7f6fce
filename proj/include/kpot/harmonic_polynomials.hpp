#pragma once

// Polynomials in (x, t) graded by the dilation weights, the operator L applied
// to them exactly, and certified bases of polynomial solutions of L u = 0.

#include <compare>
#include <map>
#include <string>
#include <vector>

#include "kpot/operator_core.hpp"

namespace kpot {

/// x^alpha t^k
struct Monomial {
  std::vector<int> x;
  int t = 0;
  auto operator<=>(const Monomial&) const = default;
};

int aniso_degree(const Monomial& m, const OperatorSpecd& spec);

class AnisoPolynomial {
 public:
  explicit AnisoPolynomial(int n = 0) : n_(n) {}

  static AnisoPolynomial constant(int n, double c);
  /// The coordinate x_i.
  static AnisoPolynomial coordinate(int n, int i);
  static AnisoPolynomial time(int n);

  int n() const { return n_; }
  const std::map<Monomial, double>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  /// Adds c * m; exact zeros are dropped.
  void add_term(const Monomial& m, double c);

  double operator()(const Vecd& x, double t) const;
  double operator()(const GroupPointd& z) const { return (*this)(z.x, z.t); }

  /// Largest total degree in x over all terms.
  int x_degree() const;
  /// Largest exponent of t.
  int t_degree() const;
  int aniso_degree(const OperatorSpecd& spec) const;
  double max_abs_coeff() const;

  AnisoPolynomial& operator+=(const AnisoPolynomial& o);
  AnisoPolynomial& operator*=(double c);
  friend AnisoPolynomial operator+(AnisoPolynomial a, const AnisoPolynomial& b) { return a += b; }
  friend AnisoPolynomial operator-(AnisoPolynomial a, AnisoPolynomial b) { return a += (b *= -1.0); }
  friend AnisoPolynomial operator*(AnisoPolynomial a, double c) { return a *= c; }
  friend AnisoPolynomial operator*(const AnisoPolynomial& a, const AnisoPolynomial& b);

  /// Human-readable form, e.g. "x1^2 + 2*t".
  std::string to_string() const;
  /// Plain-text monomial list: one line "coef a_1 ... a_n k" per term.
  std::string to_text() const;
  static AnisoPolynomial from_text(const std::string& text, int n);

 private:
  int n_;
  std::map<Monomial, double> terms_;
};

/// div(A grad u) + <Bx, grad u> - du/dt, exactly.
AnisoPolynomial apply_L(const AnisoPolynomial& u, const OperatorSpecd& spec);

/// All monomials of anisotropic degree exactly m (weights 2j+1 on block j, 2 on t).
std::vector<Monomial> monomials_of_degree(const OperatorSpecd& spec, int m);

struct HarmonicBasis {
  std::vector<AnisoPolynomial> elements;
  std::vector<int> degrees;               ///< anisotropic degree of each element
  std::vector<int> dimension_per_degree;  ///< kernel dimension for m = 0..max
  /// max over elements of |L u|_inf / max(1, |u|_inf) evaluated in floating point
  double residual = 0;
};

/// Kernel of L on each anisotropic-homogeneous degree m <= max_degree. L lowers
/// the degree by exactly two, so each degree is an independent null-space
/// problem; it is solved in exact rational arithmetic (every double is a
/// dyadic rational) and the basis is the reduced-row-echelon one.
HarmonicBasis harmonic_basis(const OperatorSpecd& spec, int max_degree);

}  // namespace kpot
