#pragma once

// L-balls Omega_r(z0) = { z : Gamma(z0, z) > 1/r }. Every ball is a time
// interval (t0 - s_max, t0) whose time slices are exact ellipsoids; balls are
// built at the origin and moved by left translation.

#include <iosfwd>
#include <optional>

#include "kpot/fundamental_solution.hpp"

namespace kpot {

/// { x : <M (x - c), x - c> < level }, stored together with the affine map
/// u -> c + T u that carries the open unit ball onto it.
class Ellipsoid {
 public:
  Ellipsoid() = default;
  /// Derives the unit-ball map from a Cholesky factor of `shape`.
  Ellipsoid(Vecd center, Matd shape, double level);
  /// `map` must satisfy map * map^T = level * shape^{-1}.
  Ellipsoid(Vecd center, Matd shape, double level, Matd map);

  const Vecd& center() const { return center_; }
  const Matd& shape() const { return shape_; }
  double level() const { return level_; }
  const Matd& map() const { return map_; }
  int dim() const { return static_cast<int>(center_.size()); }

  /// <M (x - c), x - c>
  double quadratic(const Vecd& x) const;
  bool contains(const Vecd& x) const { return quadratic(x) < level_; }
  double volume() const;
  /// |det T|
  double jacobian() const { return std::abs(map_.determinant()); }
  /// Semi-axis extent along coordinate i: sqrt(level * (M^{-1})_ii).
  double half_width(int i) const { return map_.row(i).norm(); }

  Ellipsoid translated(const Vecd& shift) const { return {center_ + shift, shape_, level_, map_}; }
  /// Same center and shape, level multiplied by factor^2 (lengths scale by factor).
  Ellipsoid scaled(double factor) const;

 private:
  Vecd center_;
  Matd shape_;
  double level_ = 0;
  Matd map_;
};

/// Volume of the unit ball in R^n.
double unit_ball_volume(int n);

enum class Membership { Inside, Outside, Boundary };

class LBall {
 public:
  LBall(Evaluator ev, double r, GroupPointd z0);

  const Evaluator& evaluator() const { return ev_; }
  const GammaEvaluatord& ev() const { return *ev_; }
  const OperatorSpecd& spec() const { return ev_->spec(); }
  double r() const { return r_; }
  const GroupPointd& z0() const { return z0_; }
  /// Temporal depth: the ball lives in R^n x (t0 - s_max, t0).
  double s_max() const { return s_max_; }

  /// rho(s) = 4 log( r (4 pi)^{-n/2} det C(s)^{-1/2} ); positive on (0, s_max).
  double level(double s) const;

 private:
  Evaluator ev_;
  double r_;
  GroupPointd z0_;
  double s_max_;
};

/// Unique s > 0 with det C(s) = r^2 (4 pi)^{-n}.
double ball_time_extent(double r, const GammaEvaluatord& ev);

LBall make_ball(Evaluator ev, double r);
LBall make_ball(Evaluator ev, double r, const GroupPointd& z0);

/// Slice of Omega_r(0) at time -s (frame of the center): the points (x, -s)
/// with x inside the returned ellipsoid. Shape E^T(s) C^{-1}(s) E(s), level rho(s).
Ellipsoid ball_slice(double s, const LBall& ball);
/// The same slice placed at absolute time t0 - s, centered at E(-s) x0.
Ellipsoid ball_slice_absolute(double s, const LBall& ball);

bool ball_contains(const GroupPointd& z, const LBall& ball);
/// Like ball_contains but reports points with |Gamma - 1/r| < 1e-12 / r as Boundary.
Membership ball_classify(const GroupPointd& z, const LBall& ball);
/// Membership through the slice ellipsoid instead of the direct level test.
bool ball_contains_by_slice(const GroupPointd& z, const LBall& ball);

struct Box {
  Vecd lo, hi;
  double t_lo = 0, t_hi = 0;
  Vecd half_widths() const { return (hi - lo) / 2.0; }
  double diameter() const;
  bool contains(const GroupPointd& z) const;
};

Box ball_bounding_box(const LBall& ball);

/// Left translation: w o Omega_r(z0) = Omega_r(w o z0).
LBall ball_translate(const LBall& ball, const GroupPointd& w);
/// delta_lambda(Omega_r(z0)) = Omega_{lambda^{Q-2} r}(delta_lambda z0).
LBall ball_dilate(const LBall& ball, double lambda);

/// Volume by integrating slice volumes over s (Gauss-Legendre, graded toward the ends).
double ball_volume(const LBall& ball);

/// CSV rows (s, t, center..., shape row-major..., rho) at `count` evenly spaced depths.
void write_slices_csv(std::ostream& os, const LBall& ball, int count);

}  // namespace kpot
