#pragma once

// Experiments built on the mean-value formula: Gamma-potentials of the
// measure W(z0^{-1} o .) 1_D / r, the exterior identity that characterizes
// L-balls, the strict inequality inside, the L^p gluing condition and the
// future-mass detector.
//
// Domains are described in the frame of the reference ball: a point z has
// frame coordinates z' = z0^{-1} o z = (y, -s), and D is given by a spatial
// region for every depth s.

#include <functional>
#include <optional>
#include <string>
#include <variant>

#include <json.hpp>

#include "kpot/quadrature.hpp"

namespace kpot {

/// Smooth switch used to keep a perturbation away from the pole: 0 for
/// s <= fraction * s_max / 2, 1 for s >= fraction * s_max, quintic in between.
/// A fraction of 0 means no taper (the perturbation reaches the pole).
struct Taper {
  double fraction = 0;
  double operator()(double s, double s_max) const;
  std::vector<double> knots(double s_max) const;
};

/// Slices translated by taper(s) * h.
struct SpatialShift {
  Vecd h;
  Taper taper;
};

/// Slices of the ball of radius r_prime; with a taper, the level set is
/// interpolated between radius r (near the pole) and r_prime.
struct RadiusMismatch {
  double r_prime;
  Taper taper;
};

/// Slices scaled about their centers by 1 + epsilon (s/s_max)^2 (Quadratic)
/// or 1 + epsilon (Constant).
struct SliceScale {
  enum class Profile { Quadratic, Constant };
  double epsilon;
  Profile profile = Profile::Quadratic;
};

/// Removes a space-time ellipsoid at depth s_center: spatial semi-axes `scale`
/// times those of that slice, temporal semi-axis
/// `scale * min(s_center, s_max - s_center)`, centered at the slice center
/// moved by `offset` along the first axis of the slice map. W vanishes at the
/// slice center, so an off-center bite removes mass at first order.
struct Bite {
  double s_center;
  double scale;
  double offset = 0.5;
};

/// The ball moved by delta in time: frame depths (-delta, s_max - delta).
struct TimeShift {
  double delta;
};

using Perturbation = std::variant<SpatialShift, RadiusMismatch, SliceScale, Bite, TimeShift>;

std::string perturbation_name(const Perturbation& p);

/// A bounded domain together with the ball Omega_r(z0) it is compared to.
class SlicedDomain {
 public:
  enum class Kind { ExactBall, PerturbedBall, Indicator };
  /// Membership test on frame coordinates.
  using Indicator = std::function<bool(const GroupPointd&)>;

  static SlicedDomain exact(const LBall& ball);
  static SlicedDomain perturbed(const LBall& ball, Perturbation p);
  /// Generic domain known only through membership; `frame_box` must contain it.
  static SlicedDomain indicator(const LBall& ball, Indicator in, Box frame_box);

  Kind kind() const { return kind_; }
  const LBall& ball() const { return ball_; }
  const std::optional<Perturbation>& perturbation() const { return perturbation_; }
  std::string name() const;

  /// Depth range (s_lo, s_hi) of the domain in the frame.
  double s_lo() const { return s_lo_; }
  double s_hi() const { return s_hi_; }
  /// Depths where slices change non-smoothly.
  const std::vector<double>& breakpoints() const { return breaks_; }
  /// True when slices are exact ellipsoid regions (not Kind::Indicator).
  bool sliced() const { return kind_ != Kind::Indicator; }

  /// Spatial region at frame depth s; empty outside (s_lo, s_hi).
  SliceRegion region(double s) const;
  bool contains(const GroupPointd& z) const;
  bool contains_frame(const GroupPointd& zf) const;
  /// Frame box containing the domain.
  Box frame_box() const;

 private:
  SlicedDomain(const LBall& ball, Kind kind) : ball_(ball), kind_(kind) {}
  LBall ball_;
  Kind kind_;
  std::optional<Perturbation> perturbation_;
  std::optional<LBall> other_;  // r_prime ball for RadiusMismatch
  Indicator indicator_;
  Box box_;
  double s_lo_ = 0, s_hi_ = 0;
  std::vector<double> breaks_;
};

/// Builds a perturbation of relative size `magnitude` (0.1 = 10%) from a
/// family name: "spatial_shift", "radius_mismatch", "slice_scale", "bite".
/// `taper` applies to the first two.
Perturbation make_perturbation(const std::string& family, double magnitude, const LBall& ball, double taper = 0.25);

// ---------------------------------------------------------------------------

/// (1/r) int_{Omega_r(z0)} u W(z0^{-1} o .) through the exact slice path.
Estimate mean_value(const AnisoPolynomial& u, const GroupPointd& z0, double r, const Evaluator& ev,
                    const QuadratureConfig& cfg);
VectorEstimate mean_value(const std::vector<AnisoPolynomial>& us, const LBall& ball, const QuadratureConfig& cfg);
/// Monte Carlo path for a general callable (needs cfg.seed).
Estimate mean_value_mc(const std::function<double(const GroupPointd&)>& u, const LBall& ball,
                       const QuadratureConfig& cfg);

/// int_D Gamma(zeta, z) W(z0^{-1} o zeta) dzeta. The normalized potential is this over r.
Estimate potential_integral(const SlicedDomain& D, const GroupPointd& z, const QuadratureConfig& cfg);
/// Monte Carlo version over D's frame box; works for every domain kind.
Estimate potential_integral_mc(const SlicedDomain& D, const GroupPointd& z, const QuadratureConfig& cfg);
/// Gamma_nu(z) with d nu = (1/r) 1_D W(z0^{-1} o .) dzeta.
Estimate gamma_potential(const SlicedDomain& D, const GroupPointd& z, const QuadratureConfig& cfg);

enum class PointCategory { Below, Beside, Above };
const char* to_string(PointCategory c);

struct TestPoint {
  GroupPointd z;
  PointCategory category;
};

/// Deterministic exterior points: half strictly below the ball, 3/8 at slice
/// times but spatially outside, 1/8 at times >= t0. All are outside D and the ball.
std::vector<TestPoint> exterior_test_points(const SlicedDomain& D, int count, std::uint64_t seed);
/// Interior points at depths in [0.2, 0.8] s_max; the first is the deep center (s_max/2, slice center).
std::vector<GroupPointd> interior_test_points(const LBall& ball, int count, std::uint64_t seed);

struct ResidualEntry {
  TestPoint point;
  double lhs = 0, lhs_error = 0;  ///< int_D Gamma(., z) W
  double rhs = 0;                 ///< r Gamma(z0, z)
  double abs_residual = 0;
  double rel_residual = 0;  ///< relative to rhs when rhs > 1e-12, else absolute
  bool converged = true;
};

struct LpResult {
  double p = 0;
  double value = 0;  ///< (int_{D sym-diff ball} W^p)^{1/p}; +inf when divergent
  double error = 0;
  bool finite = true;
  bool certified = false;  ///< p > Q/2
  bool converged = true;
  double pole_ratio = 0;  ///< ratio of consecutive dyadic shell integrals at the pole
};

struct RigidityReport {
  std::string domain;
  double r = 0;
  std::vector<ResidualEntry> entries;
  double sup_rel_residual = 0;  ///< over nontrivial entries
  double sup_abs_residual = 0;
  bool all_converged = true;
  std::optional<LpResult> lp;
};

/// Evaluates both sides of the exterior identity at each test point. Throws
/// TestPointInsideDomain if a point lies in D.
RigidityReport potential_identity_residual(const SlicedDomain& D, const std::vector<TestPoint>& points,
                                           const QuadratureConfig& cfg);

struct InteriorMargin {
  GroupPointd z;
  double gamma = 0;      ///< Gamma(z0, z)
  double potential = 0;  ///< Gamma_mu(z)
  double margin = 0;     ///< gamma - potential
  double error = 0;      ///< quadrature error of the potential
  bool converged = true;
};

/// Throws PointNotInterior for points that are not strictly inside the ball.
std::vector<InteriorMargin> interior_inequality_margin(const LBall& ball, const std::vector<GroupPointd>& points,
                                                       const QuadratureConfig& cfg);

/// L^p norm of (1_D - 1_ball) W(z0^{-1} o .) for integer p >= 1 (so W^p is a
/// polynomial on each slice). Divergence at the pole is detected from dyadic
/// shells and reported as finite = false.
LpResult lp_condition_norm(const SlicedDomain& D, double p, const QuadratureConfig& cfg);

struct FutureMassResult {
  double delta = 0;
  GroupPointd z_star;
  double u_star_at_z0 = 0;  ///< Gamma(z0, z*) = 0 since z* lies above t0
  double mean_value = 0;    ///< (1/r) int_D Gamma(., z*) W(z0^{-1} o .)
  double error = 0;
  bool detected = false;  ///< mean_value > 5 error and > 0
};

/// D = ball moved up by delta (0 < delta < s_max) straddles t0; z* sits at
/// frame time delta/10 just outside the D-slice there, where the part of D
/// above t0 still carries visible mass.
FutureMassResult future_mass_check(const LBall& ball, double delta, const QuadratureConfig& cfg);

// ---------------------------------------------------------------------------
// Serialization

void to_json(nlohmann::json& j, const GroupPointd& z);
void to_json(nlohmann::json& j, const LpResult& lp);
void to_json(nlohmann::json& j, const RigidityReport& r);
void to_json(nlohmann::json& j, const InteriorMargin& m);
void to_json(nlohmann::json& j, const FutureMassResult& f);
/// Per-point CSV table of a rigidity report.
void write_residuals_csv(std::ostream& os, const RigidityReport& r);
void write_margins_csv(std::ostream& os, const std::vector<InteriorMargin>& m);

}  // namespace kpot
