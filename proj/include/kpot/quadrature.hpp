#pragma once

// Integration over L-balls and sliced domains. Time is handled by a graded
// adaptive Gauss-Legendre integrator on (0, s_max); each time slice is either
// integrated exactly (polynomial times W over an ellipsoid, through unit-ball
// moments) or by nested one-dimensional quadrature in whitened coordinates.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <vector>

#include "kpot/ball_geometry.hpp"
#include "kpot/gauss.hpp"
#include "kpot/harmonic_polynomials.hpp"
#include "kpot/random.hpp"

namespace kpot {

struct QuadratureConfig {
  double rel_tol = 1e-10;          ///< time integration, relative to the largest component
  double abs_tol = 0;              ///< time integration floor
  double spatial_rel_tol = 1e-10;  ///< nested slice quadrature
  int gauss_order = 16;            ///< per-cell Gauss-Legendre order
  int endpoint_refinement = 8;     ///< initial dyadic levels toward each segment end
  int extra_pole_levels = 0;       ///< forced extra bisections of the cell touching s = 0
  int max_cells = 6000;
  std::int64_t mc_samples = 100000;
  std::optional<std::uint64_t> seed;
  int threads = 1;

  /// Throws Error(SchemaError) on out-of-range values.
  void validate() const;
};

struct Estimate {
  double value = 0;
  double error = 0;
  bool converged = true;
  long evaluations = 0;
};

struct VectorEstimate {
  Eigen::VectorXd value;
  double error = 0;  ///< max-norm error estimate
  bool converged = true;
  long evaluations = 0;
  int cells = 0;
};

/// Adaptive integration of a vector-valued f over [a, b] split at `breaks`.
/// Every segment is pre-graded dyadically toward both of its ends, then the
/// cell with the largest error (|GL(cell) - GL(left) - GL(right)|_inf) is
/// bisected until the summed error is below max(abs_tol, rel_tol |I|_inf).
/// Integrable endpoint singularities are resolved by repeated bisection of the
/// end cell. f is called as f(s, out) with `out` of size `dim`.
template <typename F>
VectorEstimate integrate_graded(F&& f, int dim, double a, double b, std::vector<double> breaks,
                                const QuadratureConfig& cfg);

// ---------------------------------------------------------------------------
// Monomials and unit-ball moments

/// All exponent vectors in n variables with total degree <= D, graded by degree.
class MonomialIndex {
 public:
  MonomialIndex(int n, int max_degree);

  int n() const { return n_; }
  int max_degree() const { return D_; }
  int size() const { return static_cast<int>(degree_.size()); }
  const int* exponent(int idx) const { return &exps_[static_cast<std::size_t>(idx) * n_]; }
  int degree(int idx) const { return degree_[idx]; }
  /// First index of total degree d.
  int degree_begin(int d) const { return start_[d]; }
  /// Index of an exponent vector, or -1 if its degree exceeds D.
  int index(const int* alpha) const;
  /// Index of alpha + e_i, or -1.
  int raise(int idx, int i) const { return raise_[static_cast<std::size_t>(idx) * n_ + i]; }

 private:
  int n_, D_;
  std::vector<int> exps_, degree_, start_, lookup_, raise_;
};

/// Moments of the open unit ball: int_{|u|<1} u^alpha du
///   = prod Gamma((alpha_i+1)/2) / Gamma((|alpha|+n)/2 + 1) for even alpha, else 0.
class MonomialMoments {
 public:
  MonomialMoments(int n, int max_degree);
  const MonomialIndex& index() const { return index_; }
  double operator[](int idx) const { return moments_[idx]; }
  double operator()(const std::vector<int>& alpha) const;

 private:
  MonomialIndex index_;
  std::vector<double> moments_;
};

double unit_ball_moment(const std::vector<int>& alpha);

/// m[beta] = int_{|v|<1} prod_i ((T v)_i)^{beta_i} |det T| dv for all beta in
/// `moments.index()`: the moments of the ellipsoid {T v} about its center.
Eigen::VectorXd centered_ellipsoid_moments(const Matd& T, const MonomialMoments& moments);

/// Adds coef * prod_i (c_i + w_i)^{alpha_i}, expanded in w, into `out` (indexed by `index`).
void add_shifted_monomial(const int* alpha, double coef, const Vecd& c, const MonomialIndex& index, double* out);

struct SpatialPolynomial {
  int n = 0;
  std::map<std::vector<int>, double> terms;
  int degree() const;
  double operator()(const Vecd& x) const;
};

/// Exact integral of a polynomial over an ellipsoid.
double ellipsoid_polynomial_integral(const SpatialPolynomial& p, const Ellipsoid& e);

// ---------------------------------------------------------------------------
// Slice regions and nested cubature

/// (union-free) region: intersection of `include` minus the union of `exclude`.
struct SliceRegion {
  std::vector<Ellipsoid> include;
  std::vector<Ellipsoid> exclude;
  bool empty() const { return include.empty(); }
  bool contains(const Vecd& y) const;
};

/// int_region N(y; m, 2 C) * (1/4) (y - c0)^T K (y - c0) dy, where N is the
/// normal density and G is a Cholesky factor of C. Regions wide against the
/// Gaussian are integrated in whitened coordinates, with the innermost
/// coordinate in closed form; small regions in their own body coordinates.
/// Outer coordinates use adaptive Gauss-Kronrod. Returns 0 when K has
/// overflowed (slices at depths below ~1e-150).
double gaussian_quadratic_integral(const SliceRegion& region, const Vecd& m, const Matd& G, const Matd& K,
                                   const Vecd& c0, double rel_tol);

/// int_region ((1/4) (y - c0)^T K (y - c0))^p dy. Stops refining once the
/// estimated error is below rel_tol relative or abs_tol absolute.
double quadratic_power_integral(const SliceRegion& region, const Matd& K, const Vecd& c0, int p, double rel_tol,
                                double abs_tol = 0);

/// The same over a single ellipsoid, exactly (moments of the unit ball).
double quadratic_power_ellipsoid_integral(const Ellipsoid& e, const Matd& K, const Vecd& c0, int p);

/// int ((1/4) (y - c0)^T K (y - c0))^p dy over the shell between e and
/// e.scaled(1 + delta), as a nonnegative number for either sign of delta.
/// Exact (moments of W^p over balls); accurate for |delta| down to underflow,
/// where subtracting two nested ellipsoids would lose all digits.
double quadratic_power_shell_integral(const Ellipsoid& e, double delta, const Matd& K, const Vecd& c0, int p);

// ---------------------------------------------------------------------------
// Ball integrals

/// For each u_k: int_{Omega_r(z0)} u_k(zeta) [W(z0^{-1} o zeta)] dzeta, the bracket
/// present when times_W. Slices are integrated exactly.
VectorEstimate integrate_polynomials_over_ball(const std::vector<AnisoPolynomial>& u, bool times_W,
                                               const LBall& ball, const QuadratureConfig& cfg);
Estimate integrate_over_ball(const AnisoPolynomial& u, bool times_W, const LBall& ball, const QuadratureConfig& cfg);

/// Uniform sampling of a ball: depth from a tabulated envelope of the slice
/// volume with rejection (so the time marginal is exact), then a uniform point
/// of the slice ellipsoid. Samples are generated in chunks of 1024 with one
/// generator stream per chunk, independent of the thread count.
class BallSampler {
 public:
  explicit BallSampler(const LBall& ball, int cells = 4096);

  const LBall& ball() const { return ball_; }
  GroupPointd sample(Xoshiro256& rng) const;
  std::vector<GroupPointd> sample(std::size_t count, std::uint64_t seed, int threads = 1) const;
  /// Number of proposals where the slice volume exceeded the envelope (should be 0).
  long envelope_violations() const { return violations_; }

 private:
  LBall ball_;
  std::vector<double> edges_, envelope_, cumulative_;
  mutable std::atomic<long> violations_{0};
};

std::vector<GroupPointd> mc_sample_ball(const LBall& ball, std::size_t count, std::uint64_t seed, int threads = 1);

/// Monte Carlo integral of a general callable over the ball, with standard error.
template <typename F>
Estimate integrate_over_ball_mc(F&& f, const LBall& ball, const QuadratureConfig& cfg);

/// Tensor Gauss-Hermite estimate of int gamma(x, t) dx using only the diagonal
/// of C(t) for scaling.
double gaussian_mass(const GammaEvaluatord& ev, double t, int order);

// ---------------------------------------------------------------------------
// Implementation of the templates

namespace detail {

struct GradedCell {
  double a, b;
  Eigen::VectorXd whole, left, right;
  double err;
  bool splittable;
};

}  // namespace detail

template <typename F>
VectorEstimate integrate_graded(F&& f, int dim, double a, double b, std::vector<double> breaks,
                                const QuadratureConfig& cfg) {
  VectorEstimate est;
  est.value = Eigen::VectorXd::Zero(dim);
  if (!(b > a)) return est;
  const GaussRule& g = gauss_legendre(cfg.gauss_order);
  Eigen::VectorXd fx(dim), acc(dim);

  auto gl = [&](double lo, double hi, Eigen::VectorXd& out) {
    const double h = 0.5 * (hi - lo), mid = 0.5 * (lo + hi);
    out.setZero(dim);
    for (int k = 0; k < g.size(); ++k) {
      f(mid + h * g.nodes[k], fx);
      out += g.weights[k] * fx;
    }
    out *= h;
    est.evaluations += g.size();
  };

  std::vector<detail::GradedCell> cells;
  auto make_cell = [&](double lo, double hi, const Eigen::VectorXd* whole) {
    detail::GradedCell c{lo, hi, {}, {}, {}, 0, true};
    const double mid = 0.5 * (lo + hi);
    if (whole) {
      c.whole = *whole;
    } else {
      gl(lo, hi, c.whole);
    }
    gl(lo, mid, c.left);
    gl(mid, hi, c.right);
    c.err = (c.whole - c.left - c.right).cwiseAbs().maxCoeff();
    c.splittable = mid > lo && mid < hi && (hi - lo) > 8 * std::numeric_limits<double>::epsilon() * std::abs(mid);
    cells.push_back(std::move(c));
  };

  // Segments between breakpoints, each graded toward both ends.
  breaks.erase(std::remove_if(breaks.begin(), breaks.end(), [&](double x) { return !(x > a && x < b); }),
               breaks.end());
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  std::vector<double> knots{a};
  knots.insert(knots.end(), breaks.begin(), breaks.end());
  knots.push_back(b);
  const int levels = std::max(cfg.endpoint_refinement, 1);
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const double lo = knots[k], hi = knots[k + 1], mid = 0.5 * (lo + hi), h = mid - lo;
    // [lo, mid] graded toward lo
    double edge = mid;
    for (int l = 1; l < levels; ++l) {
      const double next = lo + std::ldexp(h, -l);
      make_cell(next, edge, nullptr);
      edge = next;
    }
    make_cell(lo, edge, nullptr);
    edge = mid;
    for (int l = 1; l < levels; ++l) {
      const double next = hi - std::ldexp(h, -l);
      make_cell(edge, next, nullptr);
      edge = next;
    }
    make_cell(edge, hi, nullptr);
  }

  // Forced refinement at s = a (used to check that the pole is resolved).
  for (int l = 0; l < cfg.extra_pole_levels; ++l) {
    int first = -1;
    for (int i = 0; i < static_cast<int>(cells.size()); ++i)
      if (cells[i].a == a && cells[i].err >= 0) first = i;
    if (first < 0 || !cells[first].splittable) break;
    const double lo = cells[first].a, hi = cells[first].b, mid = 0.5 * (lo + hi);
    const Eigen::VectorXd L = cells[first].left, R = cells[first].right;
    cells[first].err = -1;  // retired
    make_cell(lo, mid, &L);
    make_cell(mid, hi, &R);
  }

  auto by_err = [&](int i, int j) { return cells[i].err < cells[j].err; };
  std::priority_queue<int, std::vector<int>, decltype(by_err)> queue(by_err);
  for (int i = 0; i < static_cast<int>(cells.size()); ++i)
    if (cells[i].splittable && cells[i].err >= 0) queue.push(i);

  auto totals = [&](double& err) {
    acc.setZero(dim);
    err = 0;
    for (const auto& c : cells) {
      if (c.err < 0) continue;
      acc += c.left + c.right;
      err += c.err;
    }
  };

  double err = 0;
  totals(err);
  int active = 0;
  for (const auto& c : cells) active += c.err >= 0;
  while (true) {
    const double target = std::max(cfg.abs_tol, cfg.rel_tol * acc.cwiseAbs().maxCoeff());
    if (err <= target) break;
    if (queue.empty() || active >= cfg.max_cells) {
      est.converged = false;
      break;
    }
    // Split a batch of the worst cells before re-summing.
    for (int batch = 0; batch < 16 && !queue.empty(); ++batch) {
      const int i = queue.top();
      queue.pop();
      const double lo = cells[i].a, hi = cells[i].b, mid = 0.5 * (lo + hi);
      const Eigen::VectorXd L = cells[i].left, R = cells[i].right;
      cells[i].err = -1;
      make_cell(lo, mid, &L);
      make_cell(mid, hi, &R);
      for (int c = static_cast<int>(cells.size()) - 2; c < static_cast<int>(cells.size()); ++c)
        if (cells[c].splittable) queue.push(c);
      ++active;
    }
    totals(err);
  }
  totals(err);
  est.value = acc;
  est.error = err;
  est.cells = active;
  return est;
}

template <typename F>
Estimate integrate_over_ball_mc(F&& f, const LBall& ball, const QuadratureConfig& cfg) {
  if (!cfg.seed) throw Error(Errc::SchemaError, "Monte Carlo integration needs a seed");
  const auto samples = mc_sample_ball(ball, static_cast<std::size_t>(cfg.mc_samples), *cfg.seed, cfg.threads);
  const double V = ball_volume(ball);
  double sum = 0, sum2 = 0;
  for (const auto& z : samples) {
    const double v = f(z);
    sum += v;
    sum2 += v * v;
  }
  const double N = static_cast<double>(samples.size());
  const double mean = sum / N;
  const double var = std::max(sum2 / N - mean * mean, 0.0);
  Estimate e;
  e.value = V * mean;
  e.error = V * std::sqrt(var / N);
  e.evaluations = static_cast<long>(N);
  return e;
}

}  // namespace kpot
