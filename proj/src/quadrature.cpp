#include "kpot/quadrature.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "kpot/parallel.hpp"

namespace kpot {

void QuadratureConfig::validate() const {
  auto fail = [](const char* what) { throw Error(Errc::SchemaError, what); };
  if (!(rel_tol > 0)) fail("quadrature.rel_tol must be positive");
  if (!(abs_tol >= 0)) fail("quadrature.abs_tol must be non-negative");
  if (!(spatial_rel_tol > 0)) fail("quadrature.spatial_rel_tol must be positive");
  if (gauss_order < 2 || gauss_order > 128) fail("quadrature.gauss_order must be in [2, 128]");
  if (endpoint_refinement < 1 || endpoint_refinement > 60) fail("quadrature.endpoint_refinement must be in [1, 60]");
  if (extra_pole_levels < 0) fail("quadrature.extra_pole_levels must be non-negative");
  if (max_cells < 1) fail("quadrature.max_cells must be positive");
  if (mc_samples < 1) fail("quadrature.mc_samples must be positive");
  if (threads < 1) fail("quadrature.threads must be positive");
}

// ---------------------------------------------------------------------------
// Monomials

MonomialIndex::MonomialIndex(int n, int max_degree) : n_(n), D_(max_degree) {
  if (n < 1 || max_degree < 0) throw Error(Errc::DimensionMismatch, "bad monomial index size");
  double table = std::pow(D_ + 1.0, n_);
  if (table > (1 << 24)) throw Error(Errc::DimensionMismatch, "monomial index too large");
  lookup_.assign(static_cast<std::size_t>(table), -1);
  std::vector<int> alpha(n_, 0);
  for (int d = 0; d <= D_; ++d) {
    start_.push_back(static_cast<int>(degree_.size()));
    // Exponents of total degree d in lexicographically decreasing order.
    std::vector<int> cur(n_, 0);
    auto rec = [&](auto&& self, int i, int left) -> void {
      if (i == n_ - 1) {
        cur[i] = left;
        exps_.insert(exps_.end(), cur.begin(), cur.end());
        degree_.push_back(d);
        return;
      }
      for (int a = left; a >= 0; --a) {
        cur[i] = a;
        self(self, i + 1, left - a);
      }
    };
    rec(rec, 0, d);
  }
  start_.push_back(static_cast<int>(degree_.size()));
  for (int idx = 0; idx < size(); ++idx) {
    std::size_t key = 0, mul = 1;
    for (int i = 0; i < n_; ++i, mul *= static_cast<std::size_t>(D_ + 1)) key += exponent(idx)[i] * mul;
    lookup_[key] = idx;
  }
  raise_.assign(static_cast<std::size_t>(size()) * n_, -1);
  std::vector<int> b(n_);
  for (int idx = 0; idx < size(); ++idx) {
    if (degree_[idx] == D_) continue;
    for (int i = 0; i < n_; ++i) {
      std::copy(exponent(idx), exponent(idx) + n_, b.begin());
      ++b[i];
      raise_[static_cast<std::size_t>(idx) * n_ + i] = index(b.data());
    }
  }
}

int MonomialIndex::index(const int* alpha) const {
  std::size_t key = 0, mul = 1;
  int d = 0;
  for (int i = 0; i < n_; ++i, mul *= static_cast<std::size_t>(D_ + 1)) {
    if (alpha[i] < 0) return -1;
    d += alpha[i];
    if (d > D_) return -1;
    key += alpha[i] * mul;
  }
  return lookup_[key];
}

double unit_ball_moment(const std::vector<int>& alpha) {
  int total = 0;
  double log_num = 0;
  for (int a : alpha) {
    if (a % 2 != 0) return 0;
    total += a;
    log_num += std::lgamma((a + 1) / 2.0);
  }
  const double n = static_cast<double>(alpha.size());
  return std::exp(log_num - std::lgamma((total + n) / 2.0 + 1.0));
}

MonomialMoments::MonomialMoments(int n, int max_degree) : index_(n, max_degree) {
  moments_.resize(index_.size());
  std::vector<int> a(n);
  for (int idx = 0; idx < index_.size(); ++idx) {
    std::copy(index_.exponent(idx), index_.exponent(idx) + n, a.begin());
    moments_[idx] = unit_ball_moment(a);
  }
}

double MonomialMoments::operator()(const std::vector<int>& alpha) const {
  const int idx = index_.index(alpha.data());
  return idx >= 0 ? moments_[idx] : unit_ball_moment(alpha);
}

Eigen::VectorXd centered_ellipsoid_moments(const Matd& T, const MonomialMoments& moments) {
  const MonomialIndex& I = moments.index();
  const int n = I.n(), D = I.max_degree();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(I.size());
  const double jac = std::abs(T.determinant());
  out(0) = jac * moments[0];
  // prev[b] holds prod_i ((T v)_i)^{beta_i} for the degree-(d-1) monomial b as
  // coefficients over degree-(d-1) monomials in v; built degree by degree.
  Eigen::MatrixXd prev = Eigen::MatrixXd::Ones(1, 1);
  for (int d = 1; d <= D; ++d) {
    const int b0 = I.degree_begin(d), nb = I.degree_begin(d + 1) - b0;
    const int p0 = I.degree_begin(d - 1);
    Eigen::MatrixXd cur = Eigen::MatrixXd::Zero(nb, nb);
    for (int bl = 0; bl < nb; ++bl) {
      const int* beta = I.exponent(b0 + bl);
      int i = 0;
      while (beta[i] == 0) ++i;
      std::vector<int> parent(beta, beta + n);
      --parent[i];
      const int pl = I.index(parent.data()) - p0;
      for (int g = 0; g < prev.cols(); ++g) {
        const double coef = prev(pl, g);
        if (coef == 0) continue;
        for (int j = 0; j < n; ++j) {
          if (T(i, j) == 0) continue;
          cur(bl, I.raise(p0 + g, j) - b0) += coef * T(i, j);
        }
      }
      double acc = 0;
      for (int g = 0; g < nb; ++g)
        if (cur(bl, g) != 0) acc += cur(bl, g) * moments[b0 + g];
      out(b0 + bl) = jac * acc;
    }
    prev = std::move(cur);
  }
  return out;
}

void add_shifted_monomial(const int* alpha, double coef, const Vecd& c, const MonomialIndex& index, double* out) {
  const int n = index.n();
  std::array<int, 16> beta{};
  if (n > 16) throw Error(Errc::DimensionMismatch, "too many variables");
  // Odometer over 0 <= beta <= alpha.
  while (true) {
    double v = coef;
    for (int i = 0; i < n; ++i) {
      const int k = alpha[i] - beta[i];
      if (k == 0) continue;
      // binomial(alpha_i, beta_i) c_i^(alpha_i - beta_i)
      double b = 1;
      for (int j = 1; j <= k; ++j) b = b * (beta[i] + j) / j;
      v *= b * std::pow(c(i), k);
    }
    if (v != 0) out[index.index(beta.data())] += v;
    int i = 0;
    while (i < n && beta[i] == alpha[i]) beta[i++] = 0;
    if (i == n) break;
    ++beta[i];
  }
}

int SpatialPolynomial::degree() const {
  int d = 0;
  for (const auto& [a, c] : terms) {
    int k = 0;
    for (int e : a) k += e;
    d = std::max(d, k);
  }
  return d;
}

double SpatialPolynomial::operator()(const Vecd& x) const {
  double acc = 0;
  for (const auto& [a, c] : terms) {
    double v = c;
    for (int i = 0; i < n; ++i) v *= std::pow(x(i), a[i]);
    acc += v;
  }
  return acc;
}

double ellipsoid_polynomial_integral(const SpatialPolynomial& p, const Ellipsoid& e) {
  if (p.n != e.dim()) throw Error(Errc::DimensionMismatch, "polynomial and ellipsoid dimensions differ");
  const MonomialMoments mom(p.n, p.degree());
  std::vector<double> coef(mom.index().size(), 0.0);
  for (const auto& [a, c] : p.terms) add_shifted_monomial(a.data(), c, e.center(), mom.index(), coef.data());
  const Eigen::VectorXd m = centered_ellipsoid_moments(e.map(), mom);
  double acc = 0;
  for (int i = 0; i < mom.index().size(); ++i) acc += coef[i] * m(i);
  return acc;
}

bool SliceRegion::contains(const Vecd& y) const {
  if (include.empty()) return false;
  for (const auto& e : include)
    if (!e.contains(y)) return false;
  for (const auto& e : exclude)
    if (e.contains(y)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Nested cubature

namespace {

constexpr double kHalfPi = std::numbers::pi / 2;

/// {c + L w : |w| < 1} with L lower triangular, positive diagonal.
struct FrameEllipsoid {
  Vecd c;
  Matd L;
};

/// Expresses e in coordinates u with y = p + P u. The lower-triangular factor
/// comes from a QR factorization of (P^{-1} T)^T, which avoids squaring its
/// condition number.
std::optional<FrameEllipsoid> to_frame(const Ellipsoid& e, const Vecd& p, const Matd& Pinv) {
  if (!(e.level() > 0)) return std::nullopt;
  const Matd S = Pinv * e.map();
  Eigen::HouseholderQR<Matd> qr(S.transpose());
  Matd L = qr.matrixQR().triangularView<Eigen::Upper>().toDenseMatrix().transpose();
  for (int j = 0; j < L.cols(); ++j)
    if (L(j, j) < 0) L.col(j) *= -1;
  if (!(L.diagonal().minCoeff() > 0)) return std::nullopt;
  return FrameEllipsoid{Pinv * (e.center() - p), std::move(L)};
}

struct Interval {
  double a, b;
};

class NestedCubature {
 public:
  static constexpr int kMaxIntervals = 16;

  NestedCubature(int n, std::vector<FrameEllipsoid> include, std::vector<FrameEllipsoid> exclude, double cutoff,
                 double rel_tol)
      : n_(n), ninc_(static_cast<int>(include.size())), cutoff_(cutoff), tol_(rel_tol) {
    ells_ = std::move(include);
    for (auto& e : exclude) ells_.push_back(std::move(e));
    if (ells_.size() - ninc_ > kMaxIntervals - 2) throw Error(Errc::DimensionMismatch, "too many excluded ellipsoids");
    u_.assign(n_, 0.0);
    v_.assign(ells_.size() * n_, 0.0);
    ss_.assign(ells_.size() * (n_ + 1), 0.0);
  }

  /// inner(u, intervals, count) integrates over the last coordinate with the
  /// first n-1 coordinates fixed in u.
  /// A non-adaptive pass fixes an absolute floor for the adaptive one, so
  /// pieces deep in the Gaussian tail are not refined to relative accuracy.
  template <typename Inner>
  double run(Inner& inner, double abs_tol = 0) {
    if (ninc_ == 0) return 0;
    depth_ = 0;
    floor_ = 0;
    const double coarse = level(0, inner);
    depth_ = 10;
    floor_ = std::max(0.1 * tol_ * std::abs(coarse), abs_tol);
    return level(0, inner);
  }

 private:
  bool range(int e, int k, double& lo, double& hi) const {
    const auto& E = ells_[e];
    double cen = E.c(k);
    for (int j = 0; j < k; ++j) cen += E.L(k, j) * v_[e * n_ + j];
    const double r2 = 1 - ss_[e * (n_ + 1) + k];
    if (!(r2 > 0)) return false;
    const double h = E.L(k, k) * std::sqrt(r2);
    lo = cen - h;
    hi = cen + h;
    return true;
  }

  void set(int k, double uk) {
    u_[k] = uk;
    for (int e = 0; e < static_cast<int>(ells_.size()); ++e) {
      const auto& E = ells_[e];
      double cen = E.c(k);
      for (int j = 0; j < k; ++j) cen += E.L(k, j) * v_[e * n_ + j];
      const double v = (uk - cen) / E.L(k, k);
      v_[e * n_ + k] = v;
      ss_[e * (n_ + 1) + k + 1] = ss_[e * (n_ + 1) + k] + v * v;
    }
  }

  template <typename Inner>
  double level(int k, Inner& inner) {
    // Clip to the ball |u| <= cutoff, outside of which the integrand is negligible.
    double rest = cutoff_ * cutoff_;
    for (int j = 0; j < k; ++j) rest -= u_[j] * u_[j];
    if (!(rest > 0)) return 0;
    double hi = std::sqrt(rest), lo = -hi, a, b;
    for (int e = 0; e < ninc_; ++e) {
      if (!range(e, k, a, b)) return 0;
      lo = std::max(lo, a);
      hi = std::min(hi, b);
    }
    if (!(hi > lo)) return 0;
    const int nexc = static_cast<int>(ells_.size()) - ninc_;
    if (k == n_ - 1) {
      std::array<Interval, kMaxIntervals> iv;
      int count = 1;
      iv[0] = {lo, hi};
      for (int e = ninc_; e < ninc_ + nexc; ++e) {
        if (!range(e, k, a, b)) continue;
        int m = 0;
        std::array<Interval, kMaxIntervals> next;
        for (int q = 0; q < count; ++q) {
          if (a > iv[q].a) next[m++] = {iv[q].a, std::min(a, iv[q].b)};
          if (b < iv[q].b) next[m++] = {std::max(b, iv[q].a), iv[q].b};
        }
        count = 0;
        for (int q = 0; q < m; ++q)
          if (next[q].b > next[q].a) iv[count++] = next[q];
      }
      return count ? inner(u_.data(), iv.data(), count) : 0.0;
    }
    std::array<double, kMaxIntervals + 2> knots;
    int nk = 0;
    knots[nk++] = lo;
    for (int e = ninc_; e < ninc_ + nexc; ++e) {
      if (!range(e, k, a, b)) continue;
      if (a > lo && a < hi) knots[nk++] = a;
      if (b > lo && b < hi) knots[nk++] = b;
    }
    knots[nk++] = hi;
    std::sort(knots.begin(), knots.begin() + nk);
    double total = 0;
    // An error of e at level k + 1 costs at most e * 2 cutoff at level k.
    const double floor = floor_ * std::pow(2 * cutoff_, -k);
    for (int q = 0; q + 1 < nk; ++q) {
      if (!(knots[q + 1] > knots[q])) continue;
      const double mid = 0.5 * (knots[q] + knots[q + 1]), half = 0.5 * (knots[q + 1] - knots[q]);
      // u = mid + half sin(theta) removes the square-root behaviour of chord
      // lengths at the ends of the projected interval.
      auto g = [&](double th) {
        set(k, mid + half * std::sin(th));
        return level(k + 1, inner) * half * std::cos(th);
      };
      total += adapt(g, -kHalfPi, kHalfPi, depth_, floor);
    }
    return total;
  }

  /// Adaptive Gauss-Kronrod 21 with a relative and an absolute stopping rule.
  template <typename F>
  double adapt(F& f, double a, double b, int depth, double floor) const {
    using boost::math::quadrature::gauss;
    using boost::math::quadrature::gauss_kronrod;
    const auto& xk = gauss_kronrod<double, 21>::abscissa();
    const auto& wk = gauss_kronrod<double, 21>::weights();
    const auto& wg = gauss<double, 10>::weights();
    const double h = 0.5 * (b - a), m = 0.5 * (a + b);
    const double f0 = f(m);
    double kr = wk[0] * f0, ga = 0;
    for (std::size_t i = 1; i < xk.size(); ++i) {
      const double pair = f(m - h * xk[i]) + f(m + h * xk[i]);
      kr += wk[i] * pair;
      if (i % 2 == 1) ga += wg[i / 2] * pair;
    }
    kr *= h;
    ga *= h;
    const double err = std::abs(kr - ga);
    if (depth == 0 || err <= std::max(tol_ * std::abs(kr), 0.5 * floor) || err <= 1e-14 * std::abs(kr)) return kr;
    return adapt(f, a, m, depth - 1, 0.5 * floor) + adapt(f, m, b, depth - 1, 0.5 * floor);
  }

  int n_, ninc_;
  double cutoff_, tol_;
  int depth_ = 10;
  double floor_ = 0;
  std::vector<FrameEllipsoid> ells_;
  std::vector<double> u_, v_, ss_;
};

/// M_k = int_a^b (x - x0)^k exp(-x^2/2) dx for k = 0, 1, 2. Moments about x0
/// (a point near the interval) keep a quadratic written around x0 free of
/// cancellation when the interval is far from the Gaussian center.
void gauss_moments(double a, double b, double x0, double M[3]) {
  if (b - a < 0.5) {
    const GaussRule& g = gauss_legendre(12);
    const double h = 0.5 * (b - a), m = 0.5 * (a + b);
    M[0] = M[1] = M[2] = 0;
    for (int k = 0; k < g.size(); ++k) {
      const double x = m + h * g.nodes[k];
      const double w = g.weights[k] * std::exp(-0.5 * x * x);
      const double d = (m - x0) + h * g.nodes[k];
      M[0] += w;
      M[1] += w * d;
      M[2] += w * d * d;
    }
    M[0] *= h;
    M[1] *= h;
    M[2] *= h;
    return;
  }
  constexpr double c = 1.2533141373155002512;  // sqrt(pi/2)
  const double r = std::numbers::sqrt2 / 2;
  double J0;
  if (a >= 0)
    J0 = c * (std::erfc(a * r) - std::erfc(b * r));
  else if (b <= 0)
    J0 = c * (std::erfc(-b * r) - std::erfc(-a * r));
  else
    J0 = c * (std::erf(b * r) - std::erf(a * r));
  const double ea = std::exp(-0.5 * a * a), eb = std::exp(-0.5 * b * b);
  // With d = x - x0: int d e = J1 - x0 J0 and int d^2 e = J2 - 2 x0 J1 + x0^2 J0,
  // using J1 = ea - eb and J2 = J0 + a ea - b eb.
  M[0] = J0;
  M[1] = (ea - eb) - x0 * J0;
  M[2] = J0 + (a - 2 * x0) * ea - (b - 2 * x0) * eb + x0 * x0 * J0;
}

/// W(y) = (1/4) (y - c0)^T K (y - c0) written in u with y = p + P u, as a
/// quadratic in d = u - uq: d^T Aw d + bw^T d + cw. Expanding about a point uq
/// inside the integration region avoids cancellation when W's center and the
/// region are far apart in whitened units.
struct FrameQuadratic {
  Matd Aw;
  Vecd bw, uq;
  double cw;
  FrameQuadratic(const Matd& K, const Vecd& c0, const Vecd& p, const Matd& P, const Vecd& q) {
    const Vecd d = q - c0;
    uq = P.triangularView<Eigen::Lower>().solve(q - p);
    Aw = 0.25 * P.transpose() * K * P;
    Aw = 0.5 * (Aw + Aw.transpose()).eval();
    bw = 0.5 * P.transpose() * (K * d);
    cw = 0.25 * d.dot(K * d);
  }
  /// Coefficients of W as a quadratic in (u_last - uq_last), prefix of u fixed.
  void last(const double* u, int n, double& a2, double& a1, double& a0) const {
    const int l = n - 1;
    a2 = Aw(l, l);
    a1 = bw(l);
    a0 = cw;
    for (int j = 0; j < l; ++j) {
      const double dj = u[j] - uq(j);
      a1 += 2 * Aw(l, j) * dj;
      double row = 0;
      for (int i = 0; i < l; ++i) row += Aw(j, i) * (u[i] - uq(i));
      a0 += dj * (row + bw(j));
    }
  }
};

std::vector<FrameEllipsoid> frame_all(const std::vector<Ellipsoid>& es, const Vecd& p, const Matd& Pinv, bool& any_empty) {
  std::vector<FrameEllipsoid> out;
  for (const auto& e : es) {
    auto f = to_frame(e, p, Pinv);
    if (f)
      out.push_back(std::move(*f));
    else
      any_empty = true;
  }
  return out;
}

/// Gaussian-weighted W over a region that is small against the Gaussian
/// (|P^{-1} T| <= 1/2 for the body map T). Integrates in body coordinates
/// y = q + T v, where W keeps its natural scale; whitened coordinates would
/// mix directions of very different sizes and cancel. The Gaussian factor is
/// smooth over chords of length <= 2 and Gauss-Legendre handles it directly.
double small_region_integral(const SliceRegion& region, const Vecd& m, const Matd& Pinv, const Matd& M,
                             const Matd& K, const Vecd& c0, double rel_tol) {
  const Ellipsoid& body = region.include.front();
  const int n = body.dim();
  const Matd& T = body.map();
  const Matd Tinv = T.inverse();
  bool degenerate = false;
  auto inc = frame_all(region.include, body.center(), Tinv, degenerate);
  if (degenerate) return 0;
  auto exc = frame_all(region.exclude, body.center(), Tinv, degenerate);
  const FrameQuadratic W(K, c0, body.center(), T, body.center());
  const Vecd uq = Pinv * (body.center() - m);
  const GaussRule& g = gauss_legendre(16);
  Vecd a(n);
  auto inner = [&](const double* v, const Interval* iv, int count) {
    double a2, a1, a0;
    W.last(v, n, a2, a1, a0);
    a = uq;
    for (int j = 0; j < n - 1; ++j) a += M.col(j) * v[j];
    const double aa = a.squaredNorm(), ab = a.dot(M.col(n - 1)), bb = M.col(n - 1).squaredNorm();
    double acc = 0;
    for (int q = 0; q < count; ++q) {
      const double h = 0.5 * (iv[q].b - iv[q].a), mid = 0.5 * (iv[q].a + iv[q].b);
      double sum = 0;
      for (int k = 0; k < g.size(); ++k) {
        const double x = mid + h * g.nodes[k];
        sum += g.weights[k] * std::exp(-0.5 * (aa + x * (2 * ab + x * bb))) * ((a2 * x + a1) * x + a0);
      }
      acc += h * sum;
    }
    return acc;
  };
  NestedCubature nc(n, std::move(inc), std::move(exc), 1.5, rel_tol);
  return std::pow(2 * std::numbers::pi, -0.5 * n) * std::abs(M.determinant()) * nc.run(inner);
}

}  // namespace

double gaussian_quadratic_integral(const SliceRegion& region, const Vecd& m, const Matd& G, const Matd& K,
                                   const Vecd& c0, double rel_tol) {
  if (region.empty()) return 0;
  // Only at depths below ~1e-150, where the slice contributes O(s).
  if (K.array().isInf().any()) return 0;
  const int n = static_cast<int>(m.size());
  const Matd P = std::numbers::sqrt2 * G;
  const Matd Pinv = P.triangularView<Eigen::Lower>().solve(Matd::Identity(n, n));
  const Ellipsoid& body = region.include.front();
  if (!(body.level() > 0)) return 0;
  const Matd M = Pinv * body.map();
  if (M.norm() <= 0.5) return small_region_integral(region, m, Pinv, M, K, c0, rel_tol);
  bool degenerate = false;
  auto inc = frame_all(region.include, m, Pinv, degenerate);
  if (degenerate) return 0;
  auto exc = frame_all(region.exclude, m, Pinv, degenerate);
  const FrameQuadratic W(K, c0, m, P, region.include.front().center());
  auto inner = [&](const double* u, const Interval* iv, int count) {
    double a2, a1, a0;
    W.last(u, n, a2, a1, a0);
    double pre = 0;
    for (int j = 0; j < n - 1; ++j) pre += u[j] * u[j];
    double acc = 0, M[3];
    for (int q = 0; q < count; ++q) {
      gauss_moments(iv[q].a, iv[q].b, W.uq(n - 1), M);
      acc += a2 * M[2] + a1 * M[1] + a0 * M[0];
    }
    return std::exp(-0.5 * pre) * acc;
  };
  // exp(-x^2/2) < 1e-19 beyond the cutoff.
  NestedCubature nc(n, std::move(inc), std::move(exc), 9.5, rel_tol);
  return std::pow(2 * std::numbers::pi, -0.5 * n) * nc.run(inner);
}

double quadratic_power_integral(const SliceRegion& region, const Matd& K, const Vecd& c0, int p, double rel_tol,
                                double abs_tol) {
  if (region.empty() || p < 0) return 0;
  const Ellipsoid& body = region.include.front();
  if (!(body.level() > 0)) return 0;
  const int n = body.dim();
  const Matd& P = body.map();
  const Matd Pinv = P.inverse();
  bool degenerate = false;
  auto inc = frame_all(region.include, body.center(), Pinv, degenerate);
  if (degenerate) return 0;
  auto exc = frame_all(region.exclude, body.center(), Pinv, degenerate);
  const FrameQuadratic W(K, c0, body.center(), P, body.center());
  const GaussRule& g = gauss_legendre(p + 2);
  auto inner = [&](const double* u, const Interval* iv, int count) {
    double a2, a1, a0;
    W.last(u, n, a2, a1, a0);
    double acc = 0;
    for (int q = 0; q < count; ++q) {
      const double h = 0.5 * (iv[q].b - iv[q].a), mid = 0.5 * (iv[q].a + iv[q].b);
      double s = 0;
      for (int k = 0; k < g.size(); ++k) {
        const double x = mid + h * g.nodes[k];  // uq = 0 here
        s += g.weights[k] * std::pow((a2 * x + a1) * x + a0, p);
      }
      acc += h * s;
    }
    return acc;
  };
  NestedCubature nc(n, std::move(inc), std::move(exc), 1.5, rel_tol);
  return std::abs(P.determinant()) * nc.run(inner, abs_tol / std::abs(P.determinant()));
}

namespace {

/// Integrals of W(c + T v)^p over |v| < 1 split by the degree of the monomials
/// in v: the ball of radius rho gives sum_d out[d] rho^{d+n}. Exact.
std::vector<double> power_moments_by_degree(const Ellipsoid& e, const Matd& K, const Vecd& c0, int p) {
  if (p < 0) throw Error(Errc::SchemaError, "power must be nonnegative");
  const int n = e.dim();
  const Matd& T = e.map();
  const Vecd d = e.center() - c0;
  // W(c + T v) = v^T Av v + bv^T v + cv, expanded into monomials of v.
  const Matd Av = 0.25 * T.transpose() * K * T;
  const Vecd bv = 0.5 * T.transpose() * (K * d);
  const double cv = 0.25 * d.dot(K * d);
  const MonomialMoments mom(n, std::max(2 * p, 2));
  const MonomialIndex& I = mom.index();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(I.size());
  w(0) = cv;
  for (int i = 0; i < n; ++i) {
    w(I.raise(0, i)) += bv(i);
    for (int j = 0; j < n; ++j) w(I.raise(I.raise(0, i), j)) += Av(i, j);
  }
  Eigen::VectorXd power = Eigen::VectorXd::Zero(I.size());
  power(0) = 1;
  std::vector<int> sum(n);
  for (int k = 0; k < p; ++k) {
    Eigen::VectorXd next = Eigen::VectorXd::Zero(I.size());
    for (int a = 0; a < I.size(); ++a) {
      if (power(a) == 0) continue;
      for (int b = 0; b < I.size() && I.degree(b) <= 2; ++b) {
        if (w(b) == 0) continue;
        for (int i = 0; i < n; ++i) sum[i] = I.exponent(a)[i] + I.exponent(b)[i];
        const int c = I.index(sum.data());
        if (c >= 0) next(c) += power(a) * w(b);
      }
    }
    power = std::move(next);
  }
  std::vector<double> out(2 * p + 1, 0.0);
  const double jac = std::abs(T.determinant());
  for (int a = 0; a < I.size(); ++a)
    if (power(a) != 0 && I.degree(a) <= 2 * p) out[I.degree(a)] += power(a) * mom[a] * jac;
  return out;
}

}  // namespace

double quadratic_power_ellipsoid_integral(const Ellipsoid& e, const Matd& K, const Vecd& c0, int p) {
  if (!(e.level() > 0)) return 0;
  double acc = 0;
  for (double m : power_moments_by_degree(e, K, c0, p)) acc += m;
  return acc;
}

double quadratic_power_shell_integral(const Ellipsoid& e, double delta, const Matd& K, const Vecd& c0, int p) {
  if (delta == 0 || !(e.level() > 0)) return 0;
  if (!(delta > -1)) throw Error(Errc::SchemaError, "shell scale must stay positive");
  const auto m = power_moments_by_degree(e, K, c0, p);
  // The shell picks up (1 + delta)^{d + n} - 1 per degree d.
  double acc = 0;
  for (int d = 0; d < static_cast<int>(m.size()); ++d) acc += m[d] * std::expm1((d + e.dim()) * std::log1p(delta));
  return std::abs(acc);
}

// ---------------------------------------------------------------------------
// Ball integrals

VectorEstimate integrate_polynomials_over_ball(const std::vector<AnisoPolynomial>& us, bool times_W,
                                               const LBall& ball, const QuadratureConfig& cfg) {
  const int n = ball.spec().n();
  const int dim = static_cast<int>(us.size());
  int du = 0;
  for (const auto& u : us) {
    if (u.n() != n) throw Error(Errc::DimensionMismatch, "polynomial dimension differs from the operator");
    du = std::max(du, u.x_degree());
  }
  const MonomialMoments mom(n, du + (times_W ? 2 : 0));
  const MonomialIndex& I = mom.index();
  const int nu = I.degree_begin(du + 1);  // monomials of degree <= du

  const GammaEvaluatord& ev = ball.ev();
  const GroupPointd& z0 = ball.z0();
  std::vector<double> coef(I.size());
  Eigen::VectorXd weight(nu);

  auto f = [&](double s, Eigen::VectorXd& out) {
    const Ellipsoid e = ball_slice(s, ball);
    const Vecd c = apply_exp(ball.spec(), -s, z0.x);
    const double t = z0.t - s;
    const Eigen::VectorXd m = centered_ellipsoid_moments(e.map(), mom);
    if (times_W) {
      const Matd K = ev.kernel_matrix(ev.covariance().factor(-s));
      for (int b = 0; b < nu; ++b) {
        double acc = 0;
        for (int i = 0; i < n; ++i) {
          const int bi = I.raise(b, i);
          for (int j = 0; j < n; ++j)
            if (K(i, j) != 0) acc += K(i, j) * m(I.raise(bi, j));
        }
        weight(b) = 0.25 * acc;
      }
    } else {
      weight = m.head(nu);
    }
    for (int k = 0; k < dim; ++k) {
      std::fill(coef.begin(), coef.end(), 0.0);
      for (const auto& [mono, cf] : us[k].terms())
        add_shifted_monomial(mono.x.data(), cf * std::pow(t, mono.t), c, I, coef.data());
      double acc = 0;
      for (int b = 0; b < nu; ++b) acc += coef[b] * weight(b);
      out(k) = acc;
    }
  };
  return integrate_graded(f, dim, 0.0, ball.s_max(), {}, cfg);
}

Estimate integrate_over_ball(const AnisoPolynomial& u, bool times_W, const LBall& ball, const QuadratureConfig& cfg) {
  const auto v = integrate_polynomials_over_ball({u}, times_W, ball, cfg);
  return {v.value(0), v.error, v.converged, v.evaluations};
}

BallSampler::BallSampler(const LBall& ball, int cells) : ball_(ball) {
  const double smax = ball_.s_max();
  edges_.resize(cells + 1);
  for (int k = 0; k <= cells; ++k) edges_[k] = smax * k / cells;
  envelope_.resize(cells);
  cumulative_.assign(cells + 1, 0.0);
  constexpr int kProbe = 9;
  for (int k = 0; k < cells; ++k) {
    double mx = 0;
    for (int j = 0; j < kProbe; ++j) {
      const double s = edges_[k] + (edges_[k + 1] - edges_[k]) * (j + 0.5) / kProbe;
      mx = std::max(mx, ball_slice(s, ball_).volume());
    }
    envelope_[k] = 1.1 * mx;
    cumulative_[k + 1] = cumulative_[k] + envelope_[k] * (edges_[k + 1] - edges_[k]);
  }
}

GroupPointd BallSampler::sample(Xoshiro256& rng) const {
  const int n = ball_.spec().n();
  const double smax = ball_.s_max();
  while (true) {
    const double target = rng.uniform() * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    const int k = std::clamp(static_cast<int>(it - cumulative_.begin()) - 1, 0, static_cast<int>(envelope_.size()) - 1);
    const double s = rng.uniform(edges_[k], edges_[k + 1]);
    if (!(s > 0 && s < smax)) continue;
    const Ellipsoid e = ball_slice_absolute(s, ball_);
    const double v = e.volume();
    if (v > envelope_[k]) ++violations_;
    if (rng.uniform() * envelope_[k] >= v) continue;
    Vecd dir(n);
    for (int i = 0; i < n; ++i) dir(i) = rng.normal();
    const double norm = dir.norm();
    if (!(norm > 0)) continue;
    const double radius = std::pow(rng.uniform(), 1.0 / n);
    return {e.center() + e.map() * (dir * (radius / norm)), ball_.z0().t - s};
  }
}

std::vector<GroupPointd> BallSampler::sample(std::size_t count, std::uint64_t seed, int threads) const {
  constexpr std::size_t kChunk = 1024;
  std::vector<GroupPointd> out(count);
  const std::size_t chunks = (count + kChunk - 1) / kChunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    Xoshiro256 rng(seed, c);
    for (std::size_t i = c * kChunk; i < std::min(count, (c + 1) * kChunk); ++i) out[i] = sample(rng);
  });
  return out;
}

std::vector<GroupPointd> mc_sample_ball(const LBall& ball, std::size_t count, std::uint64_t seed, int threads) {
  return BallSampler(ball).sample(count, seed, threads);
}

double gaussian_mass(const GammaEvaluatord& ev, double t, int order) {
  const int n = ev.n();
  const auto f = ev.covariance().factor(t);
  // Covariance of gamma(., t) is Sigma = 2 C(t). Scale each axis by its own
  // standard deviation times sqrt(lambda_max(R)), R the correlation matrix, so
  // the Hermite weight decays no faster than gamma in any direction.
  const Matd Sigma = 2.0 * f.C;
  const Vecd sd = Sigma.diagonal().cwiseSqrt();
  const Matd R = sd.cwiseInverse().asDiagonal() * Sigma * sd.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matd> eig(R, Eigen::EigenvaluesOnly);
  const double kappa = std::sqrt(eig.eigenvalues().maxCoeff());
  const Vecd scale = std::numbers::sqrt2 * kappa * sd;
  const GaussRule gh = gauss_hermite(order);
  std::vector<int> idx(n, 0);
  Vecd x(n);
  double acc = 0;
  while (true) {
    double w = 1, xi2 = 0;
    for (int i = 0; i < n; ++i) {
      const double xi = gh.nodes[idx[i]];
      x(i) = scale(i) * xi;
      w *= gh.weights[idx[i]];
      xi2 += xi * xi;
    }
    const double val = ev.gamma(x, f);
    if (val > 0) acc += w * val * std::exp(xi2);
    int i = 0;
    while (i < n && idx[i] == order - 1) idx[i++] = 0;
    if (i == n) break;
    ++idx[i];
  }
  return acc * scale.prod();
}

}  // namespace kpot
