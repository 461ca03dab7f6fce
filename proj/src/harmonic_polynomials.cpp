#include "kpot/harmonic_polynomials.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/multiprecision/cpp_int.hpp>

namespace kpot {

namespace {

using Rational = boost::multiprecision::cpp_rational;

// Emits the terms of L(c * x^alpha t^k) through `emit(monomial, coefficient)`.
template <typename T, typename MatT, typename Emit>
void L_of_monomial(const Monomial& m, const T& c, const MatT& A, const MatT& B, int n, Emit&& emit) {
  for (int i = 0; i < n; ++i) {
    const int ai = m.x[i];
    if (ai == 0) continue;
    for (int j = 0; j < n; ++j) {
      if (A(i, j) == T(0)) continue;
      Monomial d = m;
      if (i == j) {
        if (ai < 2) continue;
        d.x[i] -= 2;
        emit(d, c * A(i, i) * T(ai * (ai - 1)));
      } else {
        const int aj = m.x[j];
        if (aj == 0) continue;
        d.x[i] -= 1;
        d.x[j] -= 1;
        emit(d, c * A(i, j) * T(ai * aj));
      }
    }
    // <Bx, grad>: sum_k B_ik x_k d/dx_i
    for (int k = 0; k < n; ++k) {
      if (B(i, k) == T(0)) continue;
      Monomial d = m;
      d.x[i] -= 1;
      d.x[k] += 1;
      emit(d, c * B(i, k) * T(ai));
    }
  }
  if (m.t > 0) {
    Monomial d = m;
    d.t -= 1;
    emit(d, -c * T(m.t));
  }
}

void enumerate(const std::vector<int>& w, int i, int remaining, Monomial& cur, std::vector<Monomial>& out) {
  const int n = static_cast<int>(w.size());
  if (i == n) {
    if (remaining % 2 == 0) {
      cur.t = remaining / 2;
      out.push_back(cur);
    }
    return;
  }
  for (int a = 0; a * w[i] <= remaining; ++a) {
    cur.x[i] = a;
    enumerate(w, i + 1, remaining - a * w[i], cur, out);
  }
  cur.x[i] = 0;
}

// Null space of a rational matrix via reduced row echelon form.
std::vector<std::vector<Rational>> null_space(std::vector<std::vector<Rational>> M, int cols) {
  const int rows = static_cast<int>(M.size());
  std::vector<int> pivot_col;
  int row = 0;
  for (int col = 0; col < cols && row < rows; ++col) {
    int piv = -1;
    for (int i = row; i < rows; ++i)
      if (M[i][col] != 0) {
        piv = i;
        break;
      }
    if (piv < 0) continue;
    std::swap(M[piv], M[row]);
    const Rational inv = Rational(1) / M[row][col];
    for (auto& v : M[row]) v *= inv;
    for (int i = 0; i < rows; ++i) {
      if (i == row || M[i][col] == 0) continue;
      const Rational f = M[i][col];
      for (int j = 0; j < cols; ++j) M[i][j] -= f * M[row][j];
    }
    pivot_col.push_back(col);
    ++row;
  }
  std::vector<bool> is_pivot(cols, false);
  for (int c : pivot_col) is_pivot[c] = true;
  std::vector<std::vector<Rational>> basis;
  for (int free = 0; free < cols; ++free) {
    if (is_pivot[free]) continue;
    std::vector<Rational> v(cols, Rational(0));
    v[free] = 1;
    for (std::size_t k = 0; k < pivot_col.size(); ++k) v[pivot_col[k]] = -M[k][free];
    basis.push_back(std::move(v));
  }
  return basis;
}

}  // namespace

int aniso_degree(const Monomial& m, const OperatorSpecd& spec) {
  int d = 2 * m.t;
  for (std::size_t i = 0; i < m.x.size(); ++i) d += spec.weights()[i] * m.x[i];
  return d;
}

AnisoPolynomial AnisoPolynomial::constant(int n, double c) {
  AnisoPolynomial p(n);
  p.add_term({std::vector<int>(n, 0), 0}, c);
  return p;
}

AnisoPolynomial AnisoPolynomial::coordinate(int n, int i) {
  AnisoPolynomial p(n);
  Monomial m{std::vector<int>(n, 0), 0};
  m.x[i] = 1;
  p.add_term(m, 1.0);
  return p;
}

AnisoPolynomial AnisoPolynomial::time(int n) {
  AnisoPolynomial p(n);
  p.add_term({std::vector<int>(n, 0), 1}, 1.0);
  return p;
}

void AnisoPolynomial::add_term(const Monomial& m, double c) {
  if (static_cast<int>(m.x.size()) != n_) throw Error(Errc::DimensionMismatch, "monomial dimension mismatch");
  if (c == 0) return;
  auto [it, inserted] = terms_.try_emplace(m, c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0) terms_.erase(it);
  }
}

double AnisoPolynomial::operator()(const Vecd& x, double t) const {
  double acc = 0;
  for (const auto& [m, c] : terms_) {
    double v = c * std::pow(t, m.t);
    for (int i = 0; i < n_; ++i) v *= std::pow(x(i), m.x[i]);
    acc += v;
  }
  return acc;
}

int AnisoPolynomial::x_degree() const {
  int d = 0;
  for (const auto& [m, c] : terms_) {
    int k = 0;
    for (int a : m.x) k += a;
    d = std::max(d, k);
  }
  return d;
}

int AnisoPolynomial::t_degree() const {
  int d = 0;
  for (const auto& [m, c] : terms_) d = std::max(d, m.t);
  return d;
}

int AnisoPolynomial::aniso_degree(const OperatorSpecd& spec) const {
  int d = 0;
  for (const auto& [m, c] : terms_) d = std::max(d, kpot::aniso_degree(m, spec));
  return d;
}

double AnisoPolynomial::max_abs_coeff() const {
  double v = 0;
  for (const auto& [m, c] : terms_) v = std::max(v, std::abs(c));
  return v;
}

AnisoPolynomial& AnisoPolynomial::operator+=(const AnisoPolynomial& o) {
  for (const auto& [m, c] : o.terms_) add_term(m, c);
  return *this;
}

AnisoPolynomial& AnisoPolynomial::operator*=(double c) {
  if (c == 0) {
    terms_.clear();
    return *this;
  }
  for (auto& [m, v] : terms_) v *= c;
  return *this;
}

AnisoPolynomial operator*(const AnisoPolynomial& a, const AnisoPolynomial& b) {
  AnisoPolynomial p(a.n());
  for (const auto& [ma, ca] : a.terms())
    for (const auto& [mb, cb] : b.terms()) {
      Monomial m = ma;
      for (int i = 0; i < a.n(); ++i) m.x[i] += mb.x[i];
      m.t += mb.t;
      p.add_term(m, ca * cb);
    }
  return p;
}

std::string AnisoPolynomial::to_string() const {
  if (terms_.empty()) return "0";
  std::ostringstream os;
  os.precision(12);
  bool first = true;
  for (const auto& [m, c] : terms_) {
    const bool is_const = m.t == 0 && std::all_of(m.x.begin(), m.x.end(), [](int a) { return a == 0; });
    double mag = c;
    if (!first) {
      os << (c < 0 ? " - " : " + ");
      mag = std::abs(c);
    }
    first = false;
    if (is_const || mag != 1.0) {
      os << mag;
      if (!is_const) os << '*';
    }
    bool need_star = false;
    for (int i = 0; i < n_; ++i) {
      if (m.x[i] == 0) continue;
      if (need_star) os << '*';
      os << 'x' << (i + 1);
      if (m.x[i] > 1) os << '^' << m.x[i];
      need_star = true;
    }
    if (m.t > 0) {
      if (need_star) os << '*';
      os << 't';
      if (m.t > 1) os << '^' << m.t;
    }
  }
  return os.str();
}

std::string AnisoPolynomial::to_text() const {
  std::ostringstream os;
  os.precision(17);
  for (const auto& [m, c] : terms_) {
    os << c;
    for (int a : m.x) os << ' ' << a;
    os << ' ' << m.t << '\n';
  }
  return os.str();
}

AnisoPolynomial AnisoPolynomial::from_text(const std::string& text, int n) {
  AnisoPolynomial p(n);
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double c;
    Monomial m{std::vector<int>(n, 0), 0};
    if (!(ls >> c)) throw Error(Errc::ConfigParseError, "bad monomial line: " + line);
    for (int i = 0; i < n; ++i)
      if (!(ls >> m.x[i])) throw Error(Errc::ConfigParseError, "bad monomial line: " + line);
    if (!(ls >> m.t)) throw Error(Errc::ConfigParseError, "bad monomial line: " + line);
    p.add_term(m, c);
  }
  return p;
}

AnisoPolynomial apply_L(const AnisoPolynomial& u, const OperatorSpecd& spec) {
  AnisoPolynomial out(u.n());
  for (const auto& [m, c] : u.terms())
    L_of_monomial<double>(m, c, spec.A(), spec.B(), spec.n(),
                          [&](const Monomial& d, double v) { out.add_term(d, v); });
  return out;
}

std::vector<Monomial> monomials_of_degree(const OperatorSpecd& spec, int m) {
  std::vector<Monomial> out;
  if (m < 0) return out;
  Monomial cur{std::vector<int>(spec.n(), 0), 0};
  enumerate(spec.weights(), 0, m, cur, out);
  std::sort(out.begin(), out.end());
  return out;
}

HarmonicBasis harmonic_basis(const OperatorSpecd& spec, int max_degree) {
  const int n = spec.n();
  using RMat = Eigen::Matrix<Rational, Eigen::Dynamic, Eigen::Dynamic>;
  RMat A(n, n), B(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      A(i, j) = Rational(spec.A()(i, j));
      B(i, j) = Rational(spec.B()(i, j));
    }

  HarmonicBasis basis;
  for (int m = 0; m <= max_degree; ++m) {
    const auto cols = monomials_of_degree(spec, m);
    const auto rows = monomials_of_degree(spec, m - 2);
    std::map<Monomial, int> row_index;
    for (std::size_t k = 0; k < rows.size(); ++k) row_index[rows[k]] = static_cast<int>(k);
    std::vector<std::vector<Rational>> M(rows.size(), std::vector<Rational>(cols.size(), Rational(0)));
    for (std::size_t c = 0; c < cols.size(); ++c)
      L_of_monomial<Rational>(cols[c], Rational(1), A, B, n, [&](const Monomial& d, const Rational& v) {
        M[row_index.at(d)][c] += v;
      });
    const auto kernel = null_space(std::move(M), static_cast<int>(cols.size()));
    basis.dimension_per_degree.push_back(static_cast<int>(kernel.size()));
    for (const auto& v : kernel) {
      AnisoPolynomial u(n);
      for (std::size_t c = 0; c < cols.size(); ++c)
        if (v[c] != 0) u.add_term(cols[c], static_cast<double>(v[c]));
      const double res = apply_L(u, spec).max_abs_coeff() / std::max(1.0, u.max_abs_coeff());
      basis.residual = std::max(basis.residual, res);
      basis.elements.push_back(std::move(u));
      basis.degrees.push_back(m);
    }
  }
  return basis;
}

}  // namespace kpot
