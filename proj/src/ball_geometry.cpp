#include "kpot/ball_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "kpot/gauss.hpp"

namespace kpot {

Ellipsoid::Ellipsoid(Vecd center, Matd shape, double level)
    : center_(std::move(center)), shape_(std::move(shape)), level_(level) {
  // shape = L L^T  =>  x = c + sqrt(level) L^{-T} u
  Eigen::LLT<Matd> llt(shape_);
  const Matd Linv = llt.matrixL().solve(Matd::Identity(shape_.rows(), shape_.cols()));
  map_ = std::sqrt(level_) * Linv.transpose();
}

Ellipsoid::Ellipsoid(Vecd center, Matd shape, double level, Matd map)
    : center_(std::move(center)), shape_(std::move(shape)), level_(level), map_(std::move(map)) {}

double Ellipsoid::quadratic(const Vecd& x) const {
  const Vecd d = x - center_;
  return d.dot(shape_ * d);
}

double Ellipsoid::volume() const { return unit_ball_volume(dim()) * jacobian(); }

Ellipsoid Ellipsoid::scaled(double factor) const {
  return {center_, shape_, level_ * factor * factor, map_ * factor};
}

double unit_ball_volume(int n) {
  return std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0 + 1.0);
}

double ball_time_extent(double r, const GammaEvaluatord& ev) {
  if (!(r > 0)) throw Error(Errc::RootNotBracketed, "radius must be positive");
  const auto& det = ev.covariance().det();
  const double target = r * r * std::pow(4 * std::numbers::pi, -ev.n());
  auto f = [&](double s) { return det(s) - target; };
  double lo = 1, hi = 1;
  int guard = 0;
  while (f(lo) >= 0 && guard++ < 2000) lo *= 0.5;
  guard = 0;
  while (f(hi) <= 0 && guard++ < 2000) hi *= 2;
  if (!(f(lo) < 0 && f(hi) > 0)) throw Error(Errc::RootNotBracketed, "det C(s) does not bracket the level");
  // Bisection to a tight bracket, then safeguarded Newton.
  for (int it = 0; it < 60 && hi - lo > 1e-3 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0 ? lo : hi) = mid;
  }
  const auto ddet = det.derivative();
  double s = 0.5 * (lo + hi);
  for (int it = 0; it < 100; ++it) {
    const double fs = f(s);
    if (fs == 0) return s;
    (fs < 0 ? lo : hi) = s;
    double next = s - fs / ddet(s);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - s) <= 1e-15 * s) return next;
    s = next;
  }
  if (hi - lo > 1e-14 * hi) throw Error(Errc::RootNotBracketed, "time extent did not converge");
  return s;
}

LBall::LBall(Evaluator ev, double r, GroupPointd z0)
    : ev_(std::move(ev)), r_(r), z0_(std::move(z0)), s_max_(ball_time_extent(r_, *ev_)) {
  if (z0_.dim() != ev_->n()) throw Error(Errc::DimensionMismatch, "center has the wrong dimension");
}

double LBall::level(double s) const {
  const double det = ev_->covariance().det()(s);
  return 4.0 * std::log(r_ * ev_->normalization() / std::sqrt(det));
}

LBall make_ball(Evaluator ev, double r) {
  const int n = ev->n();
  return {std::move(ev), r, GroupPointd::origin(n)};
}

LBall make_ball(Evaluator ev, double r, const GroupPointd& z0) { return {std::move(ev), r, z0}; }

Ellipsoid ball_slice(double s, const LBall& ball) {
  if (!(s > 0 && s < ball.s_max())) throw Error(Errc::SliceOutOfRange, "slice depth outside (0, s_max)");
  const auto& spec = ball.spec();
  const auto f = ball.ev().covariance().factor(s);
  const Matd E = exp_matrix(spec, s);
  const Matd Einv = exp_matrix(spec, -s);
  Matd shape = E.transpose() * f.inverse * E;
  shape = (shape + shape.transpose()) / 2.0;
  const double rho = 4.0 * std::log(ball.r() * ball.ev().normalization() / std::sqrt(f.abs_det));
  const double level = std::max(rho, 0.0);
  Matd map = std::sqrt(level) * (Einv * f.cholesky);
  return {Vecd::Zero(spec.n()), std::move(shape), level, std::move(map)};
}

Ellipsoid ball_slice_absolute(double s, const LBall& ball) {
  return ball_slice(s, ball).translated(apply_exp(ball.spec(), -s, ball.z0().x));
}

bool ball_contains(const GroupPointd& z, const LBall& ball) { return ball.ev().Gamma(ball.z0(), z) > 1.0 / ball.r(); }

Membership ball_classify(const GroupPointd& z, const LBall& ball) {
  const double g = ball.ev().Gamma(ball.z0(), z);
  const double lvl = 1.0 / ball.r();
  if (std::abs(g - lvl) < 1e-12 * lvl) return Membership::Boundary;
  return g > lvl ? Membership::Inside : Membership::Outside;
}

bool ball_contains_by_slice(const GroupPointd& z, const LBall& ball) {
  const double s = ball.z0().t - z.t;
  if (!(s > 0 && s < ball.s_max())) return false;
  return ball_slice_absolute(s, ball).contains(z.x);
}

double Box::diameter() const {
  const double dt = t_hi - t_lo;
  return std::sqrt((hi - lo).squaredNorm() + dt * dt);
}

bool Box::contains(const GroupPointd& z) const {
  if (!(z.t >= t_lo && z.t <= t_hi)) return false;
  for (Eigen::Index i = 0; i < z.x.size(); ++i)
    if (!(z.x(i) >= lo(i) && z.x(i) <= hi(i))) return false;
  return true;
}

namespace {

// Maximizes g on (0, smax): dense scan, then golden section around the best node.
template <typename G>
double maximize_on_depths(G&& g, double smax) {
  constexpr int kGrid = 256;
  int best = 1;
  double best_val = -std::numeric_limits<double>::infinity();
  for (int k = 1; k < kGrid; ++k) {
    const double v = g(smax * k / kGrid);
    if (v > best_val) {
      best_val = v;
      best = k;
    }
  }
  double a = smax * (best - 1) / kGrid, b = smax * (best + 1) / kGrid;
  a = std::max(a, 1e-300);
  b = std::min(b, smax * (1 - 1e-15));
  const double phi = (std::sqrt(5.0) - 1) / 2;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = g(x1), f2 = g(x2);
  for (int it = 0; it < 200 && b - a > 1e-15 * smax; ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = g(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = g(x1);
    }
  }
  return std::max({best_val, f1, f2});
}

}  // namespace

Box ball_bounding_box(const LBall& ball) {
  const int n = ball.spec().n();
  Box box;
  box.lo.resize(n);
  box.hi.resize(n);
  box.t_lo = ball.z0().t - ball.s_max();
  box.t_hi = ball.z0().t;
  for (int i = 0; i < n; ++i) {
    auto upper = [&](double s) {
      const Ellipsoid e = ball_slice_absolute(s, ball);
      return e.center()(i) + e.half_width(i);
    };
    auto lower = [&](double s) {
      const Ellipsoid e = ball_slice_absolute(s, ball);
      return -(e.center()(i) - e.half_width(i));
    };
    const double hi = maximize_on_depths(upper, ball.s_max());
    const double lo = -maximize_on_depths(lower, ball.s_max());
    const double pad = 1e-9 * std::max(hi - lo, 1e-300);
    box.lo(i) = lo - pad;
    box.hi(i) = hi + pad;
  }
  return box;
}

LBall ball_translate(const LBall& ball, const GroupPointd& w) {
  return {ball.evaluator(), ball.r(), group_compose(w, ball.z0(), ball.spec())};
}

LBall ball_dilate(const LBall& ball, double lambda) {
  if (!(lambda > 0)) throw Error(Errc::NonPositiveLambda, "dilation factor must be positive");
  const int Q = ball.spec().homogeneous_dimension();
  return {ball.evaluator(), std::pow(lambda, Q - 2) * ball.r(), dilate(lambda, ball.z0(), ball.spec())};
}

double ball_volume(const LBall& ball) {
  // Slice volume vanishes like a power of s at 0 and like rho^{n/2} at s_max;
  // dyadic grading toward both ends keeps Gauss-Legendre accurate.
  const double smax = ball.s_max();
  auto vol = [&](double s) { return ball_slice(s, ball).volume(); };
  double acc = 0;
  constexpr int kDepth = 50;
  for (int k = 0; k < kDepth; ++k) {
    const double a = smax * std::ldexp(0.5, -k - 1), b = smax * std::ldexp(0.5, -k);
    acc += gauss_integrate(vol, a, b, 24);
    const double c = smax - smax * std::ldexp(0.5, -k), d = smax - smax * std::ldexp(0.5, -k - 1);
    acc += gauss_integrate(vol, c, d, 24);
  }
  return acc;
}

void write_slices_csv(std::ostream& os, const LBall& ball, int count) {
  const int n = ball.spec().n();
  os << "s,t";
  for (int i = 0; i < n; ++i) os << ",center_" << i;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) os << ",shape_" << i << j;
  os << ",rho\n";
  os.precision(17);
  for (int k = 0; k < count; ++k) {
    const double s = ball.s_max() * (k + 0.5) / count;
    const Ellipsoid e = ball_slice_absolute(s, ball);
    os << s << ',' << ball.z0().t - s;
    for (int i = 0; i < n; ++i) os << ',' << e.center()(i);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) os << ',' << e.shape()(i, j);
    os << ',' << e.level() << '\n';
  }
}

}  // namespace kpot
