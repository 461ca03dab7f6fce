#include "kpot/potential_lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "kpot/parallel.hpp"
#include "kpot/random.hpp"

namespace kpot {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

LBall frame_ball(const LBall& ball) { return make_ball(ball.evaluator(), ball.r()); }

GroupPointd to_frame(const LBall& ball, const GroupPointd& z) {
  return group_compose(group_inverse(ball.z0(), ball.spec()), z, ball.spec());
}

GroupPointd from_frame(const LBall& ball, const GroupPointd& zf) { return group_compose(ball.z0(), zf, ball.spec()); }

Vecd unit_ball_point(Xoshiro256& rng, int n) {
  Vecd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v * (std::pow(rng.uniform(), 1.0 / n) / v.norm());
}

Vecd unit_direction(Xoshiro256& rng, int n) {
  Vecd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v / v.norm();
}

/// W matrix at frame depth s (time -s).
Matd kernel_at_depth(const GammaEvaluatord& ev, double s) { return ev.kernel_matrix(ev.covariance().factor(-s)); }

}  // namespace

double Taper::operator()(double s, double s_max) const {
  if (!(fraction > 0)) return 1;
  const double a = 0.5 * fraction * s_max, b = fraction * s_max;
  if (s <= a) return 0;
  if (s >= b) return 1;
  const double x = (s - a) / (b - a);
  return x * x * x * (10 + x * (-15 + 6 * x));
}

std::vector<double> Taper::knots(double s_max) const {
  if (!(fraction > 0)) return {};
  return {0.5 * fraction * s_max, fraction * s_max};
}

std::string perturbation_name(const Perturbation& p) {
  return std::visit(overloaded{[](const SpatialShift&) { return std::string("spatial_shift"); },
                               [](const RadiusMismatch&) { return std::string("radius_mismatch"); },
                               [](const SliceScale&) { return std::string("slice_scale"); },
                               [](const Bite&) { return std::string("bite"); },
                               [](const TimeShift&) { return std::string("time_shift"); }},
                    p);
}

// ---------------------------------------------------------------------------
// Domains

SlicedDomain SlicedDomain::exact(const LBall& ball) {
  SlicedDomain d(ball, Kind::ExactBall);
  d.s_lo_ = 0;
  d.s_hi_ = ball.s_max();
  return d;
}

SlicedDomain SlicedDomain::perturbed(const LBall& ball, Perturbation p) {
  SlicedDomain d(ball, Kind::PerturbedBall);
  const double smax = ball.s_max();
  d.s_lo_ = 0;
  d.s_hi_ = smax;
  std::visit(overloaded{
                 [&](const SpatialShift& q) {
                   if (q.h.size() != ball.spec().n()) throw Error(Errc::DimensionMismatch, "shift dimension");
                   d.breaks_ = q.taper.knots(smax);
                 },
                 [&](const RadiusMismatch& q) {
                   if (!(q.r_prime > 0)) throw Error(Errc::SchemaError, "r_prime must be positive");
                   d.other_ = make_ball(ball.evaluator(), q.r_prime);
                   d.s_hi_ = std::max(smax, d.other_->s_max());
                   d.breaks_ = q.taper.knots(smax);
                   d.breaks_.push_back(smax);
                   d.breaks_.push_back(d.other_->s_max());
                 },
                 [&](const SliceScale& q) {
                   if (!(q.epsilon > -1)) throw Error(Errc::SchemaError, "slice scale factor must stay positive");
                 },
                 [&](const Bite& q) {
                   if (!(q.s_center > 0 && q.s_center < smax) || !(q.scale > 0) || !(q.offset >= 0) ||
                       !(q.offset + q.scale < 1))
                     throw Error(Errc::SchemaError, "bite must sit inside the ball");
                   const double half = q.scale * std::min(q.s_center, smax - q.s_center);
                   d.breaks_ = {q.s_center - half, q.s_center + half};
                 },
                 [&](const TimeShift& q) {
                   if (!(q.delta > 0 && q.delta < smax)) throw Error(Errc::SchemaError, "time shift must be in (0, s_max)");
                   d.s_lo_ = -q.delta;
                   d.s_hi_ = smax - q.delta;
                   d.breaks_ = {0.0};
                 }},
             p);
  d.perturbation_ = std::move(p);
  return d;
}

SlicedDomain SlicedDomain::indicator(const LBall& ball, Indicator in, Box frame_box) {
  SlicedDomain d(ball, Kind::Indicator);
  d.indicator_ = std::move(in);
  d.box_ = std::move(frame_box);
  d.s_lo_ = -d.box_.t_hi;
  d.s_hi_ = -d.box_.t_lo;
  return d;
}

std::string SlicedDomain::name() const {
  switch (kind_) {
    case Kind::ExactBall: return "exact_ball";
    case Kind::Indicator: return "indicator";
    case Kind::PerturbedBall: return perturbation_name(*perturbation_);
  }
  return "unknown";
}

SliceRegion SlicedDomain::region(double s) const {
  SliceRegion out;
  if (kind_ == Kind::Indicator) throw Error(Errc::SchemaError, "indicator domains have no slice regions");
  if (!(s > s_lo_ && s < s_hi_)) return out;
  const LBall& b = ball_;
  const double smax = b.s_max();
  if (kind_ == Kind::ExactBall) {
    out.include.push_back(ball_slice(s, b));
    return out;
  }
  std::visit(overloaded{
                 [&](const SpatialShift& q) { out.include.push_back(ball_slice(s, b).translated(q.taper(s, smax) * q.h)); },
                 [&](const RadiusMismatch& q) {
                   const double w = q.taper(s, smax);
                   // Exactly the ball slice where the taper vanishes: a one-ulp
                   // sliver is visible to W^p near the pole.
                   if (w == 0 && s < smax) {
                     out.include.push_back(ball_slice(s, b));
                     return;
                   }
                   const double level = b.level(s) + w * 4 * std::log(q.r_prime / b.r());
                   if (!(level > 0)) return;
                   const Ellipsoid e = s < smax ? ball_slice(s, b) : ball_slice(s, *other_);
                   out.include.push_back(e.scaled(std::sqrt(level / e.level())));
                 },
                 [&](const SliceScale& q) {
                   const double x = s / smax;
                   const double phi = 1 + q.epsilon * (q.profile == SliceScale::Profile::Quadratic ? x * x : 1.0);
                   out.include.push_back(ball_slice(s, b).scaled(phi));
                 },
                 [&](const Bite& q) {
                   out.include.push_back(ball_slice(s, b));
                   const double half = q.scale * std::min(q.s_center, smax - q.s_center);
                   const double u = (s - q.s_center) / half;
                   if (std::abs(u) < 1) {
                     const Ellipsoid c = ball_slice(q.s_center, b);
                     out.exclude.push_back(c.scaled(q.scale * std::sqrt(1 - u * u)).translated(q.offset * c.map().col(0)));
                   }
                 },
                 [&](const TimeShift& q) {
                   const double sb = s + q.delta;
                   if (sb > 0 && sb < smax) out.include.push_back(ball_slice(sb, b));
                 }},
             *perturbation_);
  return out;
}

bool SlicedDomain::contains_frame(const GroupPointd& zf) const {
  const double s = -zf.t;
  if (!(s > s_lo_ && s < s_hi_)) return false;
  if (kind_ == Kind::Indicator) return indicator_(zf);
  return region(s).contains(zf.x);
}

bool SlicedDomain::contains(const GroupPointd& z) const { return contains_frame(to_frame(ball_, z)); }

Box SlicedDomain::frame_box() const {
  if (kind_ == Kind::Indicator) return box_;
  const int n = ball_.spec().n();
  Box box{Vecd::Constant(n, std::numeric_limits<double>::infinity()),
          Vecd::Constant(n, -std::numeric_limits<double>::infinity()), -s_hi_, -s_lo_};
  // Extremes over a fine depth grid; the domain is the union of its slices.
  const int samples = 2048;
  for (int k = 0; k < samples; ++k) {
    const double s = s_lo_ + (s_hi_ - s_lo_) * (k + 0.5) / samples;
    for (const auto& e : region(s).include) {
      for (int i = 0; i < n; ++i) {
        box.lo(i) = std::min(box.lo(i), e.center()(i) - e.half_width(i));
        box.hi(i) = std::max(box.hi(i), e.center()(i) + e.half_width(i));
      }
    }
  }
  const Vecd pad = 0.02 * (box.hi - box.lo);
  box.lo -= pad;
  box.hi += pad;
  return box;
}

Perturbation make_perturbation(const std::string& family, double magnitude, const LBall& ball, double taper) {
  const int n = ball.spec().n();
  if (family == "spatial_shift") {
    const Box box = ball_bounding_box(frame_ball(ball));
    return SpatialShift{Vecd::Unit(n, 0) * magnitude * box.half_widths()(0), Taper{taper}};
  }
  if (family == "radius_mismatch") return RadiusMismatch{(1 + magnitude) * ball.r(), Taper{taper}};
  if (family == "slice_scale") return SliceScale{magnitude, SliceScale::Profile::Quadratic};
  if (family == "bite") return Bite{0.5 * ball.s_max(), magnitude};
  throw Error(Errc::SchemaError, "unknown perturbation family: " + family);
}

// ---------------------------------------------------------------------------
// Mean values and potentials

Estimate mean_value(const AnisoPolynomial& u, const GroupPointd& z0, double r, const Evaluator& ev,
                    const QuadratureConfig& cfg) {
  const auto e = integrate_over_ball(u, true, make_ball(ev, r, z0), cfg);
  return {e.value / r, e.error / r, e.converged, e.evaluations};
}

VectorEstimate mean_value(const std::vector<AnisoPolynomial>& us, const LBall& ball, const QuadratureConfig& cfg) {
  auto e = integrate_polynomials_over_ball(us, true, ball, cfg);
  e.value /= ball.r();
  e.error /= ball.r();
  return e;
}

Estimate mean_value_mc(const std::function<double(const GroupPointd&)>& u, const LBall& ball,
                       const QuadratureConfig& cfg) {
  const auto& ev = ball.ev();
  const auto e = integrate_over_ball_mc([&](const GroupPointd& z) { return u(z) * ev.W(to_frame(ball, z)); }, ball, cfg);
  return {e.value / ball.r(), e.error / ball.r(), e.converged, e.evaluations};
}

Estimate potential_integral(const SlicedDomain& D, const GroupPointd& z, const QuadratureConfig& cfg) {
  if (!D.sliced()) return potential_integral_mc(D, z, cfg);
  const LBall& ball = D.ball();
  const GammaEvaluatord& ev = ball.ev();
  const auto& spec = ball.spec();
  const int n = spec.n();
  const GroupPointd zf = to_frame(ball, z);
  // Gamma(zeta, z) vanishes unless zeta is later than z: depth s < -t'.
  const double upper = std::min(D.s_hi(), -zf.t);
  Estimate out;
  if (!(upper > D.s_lo())) return out;
  if (D.s_lo() < 0 && upper > 0)
    throw Error(Errc::SingularAtZero, "domain meets t = t0 away from the pole; the potential diverges there");
  const Vecd zero = Vecd::Zero(n);
  auto f = [&](double s, Eigen::VectorXd& v) {
    v.resize(1);
    v(0) = 0;
    const double tau = -s - zf.t;
    if (!(tau > 0)) return;
    const SliceRegion region = D.region(s);
    if (region.empty()) return;
    const auto F = ev.covariance().factor(tau);
    const Vecd m = apply_exp(spec, tau, zf.x);
    v(0) = gaussian_quadratic_integral(region, m, F.cholesky, kernel_at_depth(ev, s), zero, cfg.spatial_rel_tol);
  };
  std::vector<double> breaks = D.breakpoints();
  breaks.push_back(0.0);
  const auto e = integrate_graded(f, 1, D.s_lo(), upper, breaks, cfg);
  return {e.value(0), e.error, e.converged, e.evaluations};
}

Estimate potential_integral_mc(const SlicedDomain& D, const GroupPointd& z, const QuadratureConfig& cfg) {
  if (!cfg.seed) throw Error(Errc::SchemaError, "Monte Carlo potential needs a seed");
  const LBall& ball = D.ball();
  const GammaEvaluatord& ev = ball.ev();
  const auto& spec = ball.spec();
  const int n = spec.n();
  const GroupPointd zf = to_frame(ball, z);
  const GroupPointd zf_inv = group_inverse(zf, spec);
  const Box box = D.frame_box();
  const double vol = (box.hi - box.lo).prod() * (box.t_hi - box.t_lo);
  constexpr std::size_t kChunk = 1024;
  const std::size_t N = static_cast<std::size_t>(cfg.mc_samples);
  const std::size_t chunks = (N + kChunk - 1) / kChunk;
  std::vector<double> sum(chunks, 0.0), sum2(chunks, 0.0);
  parallel_for(chunks, cfg.threads, [&](std::size_t c) {
    Xoshiro256 rng(*cfg.seed, c);
    for (std::size_t i = c * kChunk; i < std::min(N, (c + 1) * kChunk); ++i) {
      GroupPointd p{Vecd(n), rng.uniform(box.t_lo, box.t_hi)};
      for (int k = 0; k < n; ++k) p.x(k) = rng.uniform(box.lo(k), box.hi(k));
      if (p.t == 0 || !D.contains_frame(p)) continue;
      const double v = ev.gamma(group_compose(zf_inv, p, spec)) * ev.W(p);
      sum[c] += v;
      sum2[c] += v * v;
    }
  });
  double s = 0, s2 = 0;
  for (std::size_t c = 0; c < chunks; ++c) {
    s += sum[c];
    s2 += sum2[c];
  }
  const double mean = s / N, var = std::max(s2 / N - mean * mean, 0.0);
  return {vol * mean, vol * std::sqrt(var / N), true, static_cast<long>(N)};
}

Estimate gamma_potential(const SlicedDomain& D, const GroupPointd& z, const QuadratureConfig& cfg) {
  const auto e = potential_integral(D, z, cfg);
  const double r = D.ball().r();
  return {e.value / r, e.error / r, e.converged, e.evaluations};
}

// ---------------------------------------------------------------------------
// Test points

const char* to_string(PointCategory c) {
  switch (c) {
    case PointCategory::Below: return "below";
    case PointCategory::Beside: return "beside";
    case PointCategory::Above: return "above";
  }
  return "unknown";
}

std::vector<TestPoint> exterior_test_points(const SlicedDomain& D, int count, std::uint64_t seed) {
  if (count <= 0) throw Error(Errc::SchemaError, "test point count must be positive");
  const LBall& ball = D.ball();
  const LBall fb = frame_ball(ball);
  const int n = ball.spec().n();
  const double smax = ball.s_max();
  Box box = ball_bounding_box(fb);
  if (D.kind() != SlicedDomain::Kind::ExactBall) {
    const Box db = D.frame_box();
    box.lo = box.lo.cwiseMin(db.lo);
    box.hi = box.hi.cwiseMax(db.hi);
  }
  const Vecd center = 0.5 * (box.lo + box.hi), half = box.half_widths();
  const double bottom = std::max(D.s_hi(), smax);

  const int n_above = std::max(1, count / 8);
  const int n_beside = (3 * count) / 8;
  const int n_below = count - n_above - n_beside;

  Xoshiro256 rng(seed, 0);
  auto near_box = [&] {
    Vecd x(n);
    for (int i = 0; i < n; ++i) x(i) = center(i) + half(i) * rng.uniform(-1.5, 1.5);
    return x;
  };
  auto outside = [&](const GroupPointd& zf) { return !D.contains_frame(zf) && !ball_contains(zf, fb); };

  std::vector<TestPoint> out;
  auto accept = [&](const GroupPointd& zf, PointCategory c) {
    if (!outside(zf)) return false;
    out.push_back({from_frame(ball, zf), c});
    return true;
  };
  for (int k = 0; k < n_below;) k += accept({near_box(), -bottom - smax * rng.uniform(0.05, 1.0)}, PointCategory::Below);
  for (int k = 0; k < n_beside;) {
    const double s = smax * rng.uniform(0.1, 0.9);
    const Ellipsoid e = ball_slice(s, fb);
    const Vecd x = e.center() + e.map() * (unit_direction(rng, n) * rng.uniform(1.1, 1.6));
    k += accept({x, -s}, PointCategory::Beside);
  }
  for (int k = 0; k < n_above;) k += accept({near_box(), smax * rng.uniform(0.0, 1.0)}, PointCategory::Above);
  return out;
}

std::vector<GroupPointd> interior_test_points(const LBall& ball, int count, std::uint64_t seed) {
  if (count <= 0) throw Error(Errc::SchemaError, "test point count must be positive");
  const LBall fb = frame_ball(ball);
  const int n = ball.spec().n();
  const double smax = ball.s_max();
  std::vector<GroupPointd> out;
  out.push_back(from_frame(ball, {ball_slice(0.5 * smax, fb).center(), -0.5 * smax}));
  Xoshiro256 rng(seed, 1);
  while (static_cast<int>(out.size()) < count) {
    const double s = smax * rng.uniform(0.2, 0.8);
    const Ellipsoid e = ball_slice(s, fb);
    const Vecd x = e.center() + e.map() * (0.9 * unit_ball_point(rng, n));
    out.push_back(from_frame(ball, {x, -s}));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Identity, inequality, L^p, future mass

RigidityReport potential_identity_residual(const SlicedDomain& D, const std::vector<TestPoint>& points,
                                           const QuadratureConfig& cfg) {
  const LBall& ball = D.ball();
  for (std::size_t i = 0; i < points.size(); ++i)
    if (D.contains(points[i].z))
      throw Error(Errc::TestPointInsideDomain, "test point " + std::to_string(i) + " lies in D", static_cast<int>(i));
  RigidityReport rep;
  rep.domain = D.name();
  rep.r = ball.r();
  rep.entries.resize(points.size());
  QuadratureConfig inner = cfg;
  inner.threads = 1;
  parallel_for(points.size(), cfg.threads, [&](std::size_t i) {
    ResidualEntry& e = rep.entries[i];
    e.point = points[i];
    const auto est = potential_integral(D, points[i].z, inner);
    e.lhs = est.value;
    e.lhs_error = est.error;
    e.converged = est.converged;
    e.rhs = ball.r() * ball.ev().Gamma(ball.z0(), points[i].z);
    e.abs_residual = std::abs(e.lhs - e.rhs);
    e.rel_residual = e.rhs > 1e-12 ? e.abs_residual / e.rhs : e.abs_residual;
  });
  for (const auto& e : rep.entries) {
    rep.sup_rel_residual = std::max(rep.sup_rel_residual, e.rel_residual);
    rep.sup_abs_residual = std::max(rep.sup_abs_residual, e.abs_residual);
    rep.all_converged = rep.all_converged && e.converged;
  }
  return rep;
}

std::vector<InteriorMargin> interior_inequality_margin(const LBall& ball, const std::vector<GroupPointd>& points,
                                                       const QuadratureConfig& cfg) {
  const auto& ev = ball.ev();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double g = ev.Gamma(ball.z0(), points[i]);
    if (!(g > 0) || !(std::log(ball.r() * g) > 1e-6))
      throw Error(Errc::PointNotInterior, "point " + std::to_string(i) + " is not strictly inside the ball",
                  static_cast<int>(i));
  }
  const SlicedDomain D = SlicedDomain::exact(ball);
  std::vector<InteriorMargin> out(points.size());
  QuadratureConfig inner = cfg;
  inner.threads = 1;
  parallel_for(points.size(), cfg.threads, [&](std::size_t i) {
    InteriorMargin& m = out[i];
    m.z = points[i];
    m.gamma = ev.Gamma(ball.z0(), points[i]);
    const auto est = gamma_potential(D, points[i], inner);
    m.potential = est.value;
    m.error = est.error;
    m.converged = est.converged;
    m.margin = m.gamma - m.potential;
  });
  return out;
}

namespace {

/// Pieces of the symmetric difference of D_s = (cap I) minus (cup X) and the ball slice B_s.
std::vector<SliceRegion> symmetric_difference(const SliceRegion& D, const std::optional<Ellipsoid>& B) {
  std::vector<SliceRegion> out;
  if (D.exclude.size() > 1) throw Error(Errc::SchemaError, "at most one excluded region per slice is supported");
  if (!B) {
    if (!D.empty()) out.push_back(D);
    return out;
  }
  if (D.empty()) {
    out.push_back({{*B}, {}});
    return out;
  }
  SliceRegion d_minus_b = D;
  d_minus_b.exclude.push_back(*B);
  out.push_back(std::move(d_minus_b));
  // B minus D = (B minus cap I) + (B cap I cap X); the first part is a union
  // over the include ellipsoids, here a single one.
  if (D.include.size() > 1) throw Error(Errc::SchemaError, "at most one included region per slice is supported");
  out.push_back({{*B}, {D.include.front()}});
  for (const auto& x : D.exclude) out.push_back({{*B, D.include.front(), x}, {}});
  return out;
}

}  // namespace

LpResult lp_condition_norm(const SlicedDomain& D, double p, const QuadratureConfig& cfg) {
  if (!D.sliced()) throw Error(Errc::SchemaError, "the L^p condition needs a sliced domain");
  if (!(p >= 1) || p != std::floor(p)) throw Error(Errc::SchemaError, "p must be a positive integer");
  const LBall& ball = D.ball();
  const LBall fb = frame_ball(ball);
  const GammaEvaluatord& ev = ball.ev();
  const int pi = static_cast<int>(p);
  LpResult res;
  res.p = p;
  res.certified = p > ball.spec().homogeneous_dimension() / 2.0;
  if (D.kind() == SlicedDomain::Kind::ExactBall) return res;

  const double smax = ball.s_max();
  const Vecd zero = Vecd::Zero(ball.spec().n());
  const auto* scale = std::get_if<SliceScale>(&*D.perturbation());
  auto F = [&](double s) {
    std::optional<Ellipsoid> B;
    if (s > 0 && s < smax) B = ball_slice(s, fb);
    if (scale) {
      // The difference is a thin shell near the pole; use the exact form.
      if (!B) return 0.0;
      const double x = s / smax;
      const double delta = scale->epsilon * (scale->profile == SliceScale::Profile::Quadratic ? x * x : 1.0);
      return quadratic_power_shell_integral(*B, delta, kernel_at_depth(ev, s), zero, pi);
    }
    const auto pieces = symmetric_difference(D.region(s), B);
    if (pieces.empty()) return 0.0;
    const Matd K = kernel_at_depth(ev, s);
    // Thin pieces are resolved to a tolerance set by the whole slice.
    const Ellipsoid scale_slice = B ? *B : pieces.front().include.front();
    const double abs_tol = cfg.spatial_rel_tol * quadratic_power_ellipsoid_integral(scale_slice, K, zero, pi);
    double acc = 0;
    for (const auto& piece : pieces) acc += quadratic_power_integral(piece, K, zero, pi, cfg.spatial_rel_tol, abs_tol);
    return acc;
  };

  // Pole behaviour: F(s) ~ s^beta gives dyadic shells in ratio 2^{-(beta+1)};
  // the integral diverges iff beta <= -1.
  auto shell = [&](int k) {
    const double hi = smax * std::ldexp(1.0, -k), lo = 0.5 * hi;
    const GaussRule& g = gauss_legendre(cfg.gauss_order);
    double acc = 0;
    for (int q = 0; q < g.size(); ++q) acc += g.weights[q] * F(0.5 * (lo + hi) + 0.5 * (hi - lo) * g.nodes[q]);
    return 0.5 * (hi - lo) * acc;
  };
  const double s_deep = shell(26), s_deeper = shell(28);
  res.pole_ratio = s_deep > 0 ? std::sqrt(s_deeper / s_deep) : 0.0;
  if (res.pole_ratio > 0.99) {
    res.finite = false;
    res.value = std::numeric_limits<double>::infinity();
    res.error = 0;
    return res;
  }

  const double a = std::min(D.s_lo(), 0.0), b = std::max(D.s_hi(), smax);
  std::vector<double> breaks = D.breakpoints();
  breaks.push_back(0.0);
  breaks.push_back(smax);
  const auto est = integrate_graded(
      [&](double s, Eigen::VectorXd& v) {
        v.resize(1);
        v(0) = F(s);
      },
      1, a, b, breaks, cfg);
  const double I = est.value(0);
  res.converged = est.converged;
  res.value = I > 0 ? std::pow(I, 1 / p) : 0.0;
  res.error = I > 0 ? res.value / p * est.error / I : est.error;
  return res;
}

FutureMassResult future_mass_check(const LBall& ball, double delta, const QuadratureConfig& cfg) {
  const SlicedDomain D = SlicedDomain::perturbed(ball, TimeShift{delta});
  const LBall fb = frame_ball(ball);
  FutureMassResult res;
  res.delta = delta;
  // z* at frame time delta/10, just beyond the D-slice there (ball depth
  // 0.9 delta) along the first axis. Later or farther points see only the
  // Gaussian tail, which drops to 1e-18 for the chain operators.
  const double t_star = 0.1 * delta;
  const Ellipsoid e = ball_slice(delta - t_star, fb);
  const int n = ball.spec().n();
  const Vecd x = e.center() + 1.05 * e.half_width(0) * Vecd::Unit(n, 0);
  const GroupPointd zf{x, t_star};
  if (D.contains_frame(zf)) throw Error(Errc::TestPointInsideDomain, "z* lies in the shifted domain");
  res.z_star = from_frame(ball, zf);
  res.u_star_at_z0 = ball.ev().Gamma(ball.z0(), res.z_star);
  const auto est = gamma_potential(D, res.z_star, cfg);
  res.mean_value = est.value;
  res.error = est.error;
  res.detected = res.mean_value > 0 && res.mean_value > 5 * res.error;
  return res;
}

// ---------------------------------------------------------------------------
// Serialization

void to_json(nlohmann::json& j, const GroupPointd& z) {
  j = nlohmann::json{{"x", std::vector<double>(z.x.data(), z.x.data() + z.x.size())}, {"t", z.t}};
}

void to_json(nlohmann::json& j, const LpResult& lp) {
  j = nlohmann::json{{"p", lp.p},
                     {"value", lp.finite ? nlohmann::json(lp.value) : nlohmann::json("inf")},
                     {"error", lp.error},
                     {"finite", lp.finite},
                     {"certified", lp.certified},
                     {"converged", lp.converged},
                     {"pole_ratio", lp.pole_ratio}};
  if (!lp.certified) j["note"] = "hypothesis not certified: p <= Q/2";
}

void to_json(nlohmann::json& j, const RigidityReport& r) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : r.entries)
    entries.push_back({{"z", e.point.z},
                       {"category", to_string(e.point.category)},
                       {"lhs", e.lhs},
                       {"lhs_error", e.lhs_error},
                       {"rhs", e.rhs},
                       {"abs_residual", e.abs_residual},
                       {"rel_residual", e.rel_residual},
                       {"converged", e.converged}});
  j = nlohmann::json{{"domain", r.domain},
                     {"r", r.r},
                     {"sup_rel_residual", r.sup_rel_residual},
                     {"sup_abs_residual", r.sup_abs_residual},
                     {"all_converged", r.all_converged},
                     {"entries", std::move(entries)}};
  if (r.lp) j["lp"] = *r.lp;
}

void to_json(nlohmann::json& j, const InteriorMargin& m) {
  j = nlohmann::json{{"z", m.z},           {"gamma", m.gamma}, {"potential", m.potential},
                     {"margin", m.margin}, {"error", m.error}, {"converged", m.converged}};
}

void to_json(nlohmann::json& j, const FutureMassResult& f) {
  j = nlohmann::json{{"delta", f.delta},
                     {"z_star", f.z_star},
                     {"u_star_at_z0", f.u_star_at_z0},
                     {"mean_value", f.mean_value},
                     {"error", f.error},
                     {"detected", f.detected}};
}

namespace {

void write_point(std::ostream& os, const GroupPointd& z) {
  for (int i = 0; i < z.x.size(); ++i) os << z.x(i) << ',';
  os << z.t;
}

void point_header(std::ostream& os, int n) {
  for (int i = 0; i < n; ++i) os << 'x' << i << ',';
  os << 't';
}

}  // namespace

void write_residuals_csv(std::ostream& os, const RigidityReport& r) {
  const int n = r.entries.empty() ? 0 : static_cast<int>(r.entries.front().point.z.x.size());
  os.precision(17);
  os << "index,category,";
  point_header(os, n);
  os << ",lhs,lhs_error,rhs,abs_residual,rel_residual,converged\n";
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    const auto& e = r.entries[i];
    os << i << ',' << to_string(e.point.category) << ',';
    write_point(os, e.point.z);
    os << ',' << e.lhs << ',' << e.lhs_error << ',' << e.rhs << ',' << e.abs_residual << ',' << e.rel_residual << ','
       << (e.converged ? 1 : 0) << '\n';
  }
}

void write_margins_csv(std::ostream& os, const std::vector<InteriorMargin>& m) {
  const int n = m.empty() ? 0 : static_cast<int>(m.front().z.x.size());
  os.precision(17);
  os << "index,";
  point_header(os, n);
  os << ",gamma,potential,margin,error,converged\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    os << i << ',';
    write_point(os, m[i].z);
    os << ',' << m[i].gamma << ',' << m[i].potential << ',' << m[i].margin << ',' << m[i].error << ','
       << (m[i].converged ? 1 : 0) << '\n';
  }
}

}  // namespace kpot
