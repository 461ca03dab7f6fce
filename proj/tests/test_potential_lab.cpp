#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "kpot/potential_lab.hpp"
#include "operators.hpp"

using namespace kpot;
using namespace kpot::testing;

namespace {

const double kPi = std::numbers::pi;

double unit_depth_radius(const OperatorSpecd& spec) {
  return std::pow(4 * kPi, spec.n() / 2.0) * std::sqrt(det_covariance_polynomial(spec)(1.0));
}

QuadratureConfig fast_config() {
  QuadratureConfig cfg;
  cfg.gauss_order = 8;
  cfg.rel_tol = 1e-9;
  cfg.spatial_rel_tol = 1e-8;
  return cfg;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::IoError;
}

}  // namespace

TEST_CASE("mean values of harmonic polynomials") {
  QuadratureConfig cfg;
  const auto heat = make_evaluator(heat1());
  const auto proto = make_evaluator(prototype());
  const double r = std::sqrt(4 * kPi);

  CHECK(mean_value(AnisoPolynomial::constant(1, 1), {vec({0.0}), 0.0}, r, heat, cfg).value ==
        doctest::Approx(1).epsilon(1e-9));
  // x is L-harmonic for the prototype; it vanishes at the origin.
  const auto x = AnisoPolynomial::coordinate(2, 0);
  CHECK(std::abs(mean_value(x, {vec({0.0, 0.0}), 0.0}, 2 * kPi / std::sqrt(3.0), proto, cfg).value) < 1e-9);

  // x^2 + 2t solves the heat equation; check at the origin and at a translate.
  const auto u = AnisoPolynomial::coordinate(1, 0) * AnisoPolynomial::coordinate(1, 0) + AnisoPolynomial::time(1) * 2.0;
  CHECK(std::abs(mean_value(u, {vec({0.0}), 0.0}, r, heat, cfg).value) < 1e-7);
  const GroupPointd z0{vec({0.7}), -0.4};
  CHECK(mean_value(u, z0, r, heat, cfg).value == doctest::Approx(u(z0)).epsilon(1e-7));

  // The Monte Carlo path agrees within its error bar.
  QuadratureConfig mc = cfg;
  mc.seed = 7;
  mc.mc_samples = 400000;
  const LBall ball = make_ball(heat, r, z0);
  const auto est = mean_value_mc([&](const GroupPointd& z) { return u(z); }, ball, mc);
  CHECK(std::abs(est.value - u(z0)) < 4 * est.error + 1e-12);
}

TEST_CASE("exact balls satisfy the exterior identity") {
  const auto cfg = fast_config();
  for (const auto& op : {all_operators()[0], all_operators()[2]}) {
    CAPTURE(op.name);
    const auto ev = make_evaluator(op.spec);
    const int n = op.spec.n();
    const LBall ball = make_ball(ev, unit_depth_radius(op.spec), {Vecd::LinSpaced(n, 0.4, -0.3), 1.5});
    const auto D = SlicedDomain::exact(ball);
    const auto points = exterior_test_points(D, 32, 11);
    const auto rep = potential_identity_residual(D, points, cfg);
    CHECK(rep.all_converged);
    CHECK(rep.sup_rel_residual < 1e-6);
    for (const auto& e : rep.entries)
      if (e.point.category == PointCategory::Above) {
        // Gamma(zeta, z) = 0 for every zeta earlier than z.
        CHECK(e.lhs == 0);
        CHECK(e.rhs == 0);
      }
  }
}

TEST_CASE("exterior and interior test points") {
  const auto ev = make_evaluator(prototype());
  const LBall ball = make_ball(ev, unit_depth_radius(prototype()));
  const auto D = SlicedDomain::perturbed(ball, make_perturbation("spatial_shift", 0.2, ball));
  const auto a = exterior_test_points(D, 40, 3), b = exterior_test_points(D, 40, 3);
  REQUIRE(a.size() == 40);
  int counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].z.x == b[i].z.x);
    CHECK(a[i].z.t == b[i].z.t);
    CHECK_FALSE(D.contains(a[i].z));
    CHECK_FALSE(ball_contains(a[i].z, ball));
    ++counts[static_cast<int>(a[i].category)];
  }
  CHECK(counts[static_cast<int>(PointCategory::Above)] == 5);
  CHECK(counts[static_cast<int>(PointCategory::Beside)] == 15);
  CHECK(counts[static_cast<int>(PointCategory::Below)] == 20);
  CHECK(exterior_test_points(D, 40, 4)[0].z.t != a[0].z.t);

  for (const auto& z : interior_test_points(ball, 20, 5)) CHECK(ball_contains(z, ball));
  // z0 = 0 here, so frame and absolute coordinates agree.
  const GroupPointd inside{D.region(0.5 * ball.s_max()).include.front().center(), -0.5 * ball.s_max()};
  REQUIRE(D.contains(inside));
  CHECK(code_of([&] { potential_identity_residual(D, {{inside, PointCategory::Below}}, fast_config()); }) ==
        Errc::TestPointInsideDomain);
}

TEST_CASE("perturbed domains violate the identity") {
  const auto cfg = fast_config();
  const auto ev = make_evaluator(heat1());
  const LBall ball = make_ball(ev, std::sqrt(4 * kPi));
  const double exact = potential_identity_residual(SlicedDomain::exact(ball),
                                                   exterior_test_points(SlicedDomain::exact(ball), 16, 2), cfg)
                           .sup_rel_residual;
  const double hw = ball_bounding_box(ball).half_widths()(0);
  for (const Perturbation& p : std::vector<Perturbation>{SpatialShift{vec({0.2 * hw}), {}},
                                                        RadiusMismatch{1.1 * ball.r(), {}},
                                                        make_perturbation("slice_scale", 0.05, ball),
                                                        make_perturbation("bite", 0.05, ball)}) {
    CAPTURE(perturbation_name(p));
    const auto D = SlicedDomain::perturbed(ball, p);
    const auto rep = potential_identity_residual(D, exterior_test_points(D, 16, 2), cfg);
    CHECK(rep.sup_rel_residual > 100 * exact);
  }
  const auto shifted = SlicedDomain::perturbed(ball, SpatialShift{vec({0.2 * hw}), {}});
  CHECK(potential_identity_residual(shifted, exterior_test_points(shifted, 16, 2), cfg).sup_rel_residual > 1e-2);
}

TEST_CASE("the L^p gluing condition") {
  const auto cfg = fast_config();
  const auto ev = make_evaluator(heat1());  // Q = 3
  const LBall ball = make_ball(ev, std::sqrt(4 * kPi));

  const auto exact = lp_condition_norm(SlicedDomain::exact(ball), 3, cfg);
  CHECK(exact.finite);
  CHECK(exact.value == 0);
  CHECK(exact.certified);
  CHECK_FALSE(lp_condition_norm(SlicedDomain::exact(ball), 1, cfg).certified);

  // Without a taper the difference reaches the pole, where W^p is not integrable.
  const auto untapered = lp_condition_norm(SlicedDomain::perturbed(ball, RadiusMismatch{1.1 * ball.r(), {}}), 3, cfg);
  CHECK_FALSE(untapered.finite);
  CHECK(untapered.pole_ratio > 0.99);
  const auto shift = lp_condition_norm(SlicedDomain::perturbed(ball, SpatialShift{vec({0.1}), {}}), 3, cfg);
  CHECK_FALSE(shift.finite);

  for (const std::string family : {"spatial_shift", "radius_mismatch", "slice_scale", "bite"}) {
    CAPTURE(family);
    const auto lp = lp_condition_norm(SlicedDomain::perturbed(ball, make_perturbation(family, 0.05, ball)), 3, cfg);
    CHECK(lp.finite);
    CHECK(lp.converged);
    CHECK(lp.value > 0);
    CHECK(std::isfinite(lp.value));
  }
  CHECK(code_of([&] { lp_condition_norm(SlicedDomain::exact(ball), 2.5, cfg); }) == Errc::SchemaError);
}

TEST_CASE("interior strict inequality") {
  const auto cfg = fast_config();
  for (const auto& op : {all_operators()[0], all_operators()[2]}) {
    CAPTURE(op.name);
    const auto ev = make_evaluator(op.spec);
    const LBall ball = make_ball(ev, unit_depth_radius(op.spec));
    const auto margins = interior_inequality_margin(ball, interior_test_points(ball, 8, 9), cfg);
    for (const auto& m : margins) {
      CHECK(m.converged);
      CHECK(m.margin > 5 * m.error);
      CHECK(m.potential > 0);
    }
    const GroupPointd outside{Vecd::Zero(op.spec.n()), 0.5};
    CHECK(code_of([&] { interior_inequality_margin(ball, {outside}, cfg); }) == Errc::PointNotInterior);
  }
}

TEST_CASE("future mass detector") {
  const auto cfg = fast_config();
  for (const auto& op : {all_operators()[0], all_operators()[2]}) {
    CAPTURE(op.name);
    const auto ev = make_evaluator(op.spec);
    const LBall ball = make_ball(ev, unit_depth_radius(op.spec));
    const auto f = future_mass_check(ball, 0.3 * ball.s_max(), cfg);
    CHECK(f.u_star_at_z0 == 0);
    CHECK(f.detected);
    CHECK(f.mean_value > 0);
    // A shifted domain meeting t0 away from the pole has a divergent potential
    // at points below it.
    const auto D = SlicedDomain::perturbed(ball, TimeShift{0.3 * ball.s_max()});
    const GroupPointd below{Vecd::Zero(op.spec.n()), -2 * ball.s_max()};
    CHECK(code_of([&] { potential_integral(D, below, cfg); }) == Errc::SingularAtZero);
  }
}

TEST_CASE("report serialization") {
  const auto cfg = fast_config();
  const auto ev = make_evaluator(heat1());
  const LBall ball = make_ball(ev, std::sqrt(4 * kPi));
  const auto D = SlicedDomain::perturbed(ball, make_perturbation("radius_mismatch", 0.1, ball));
  auto rep = potential_identity_residual(D, exterior_test_points(D, 8, 1), cfg);
  rep.lp = lp_condition_norm(D, 3, cfg);
  const nlohmann::json j = rep;
  CHECK(j["domain"] == "radius_mismatch");
  CHECK(j["entries"].size() == 8);
  CHECK(j["entries"][0].contains("rel_residual"));
  CHECK(j["lp"]["finite"] == true);

  LpResult inf;
  inf.finite = false;
  inf.value = std::numeric_limits<double>::infinity();
  CHECK(nlohmann::json(inf)["value"] == "inf");

  std::ostringstream csv;
  write_residuals_csv(csv, rep);
  std::istringstream lines(csv.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header == "index,category,x0,t,lhs,lhs_error,rhs,abs_residual,rel_residual,converged");
  int rows = 0;
  for (std::string line; std::getline(lines, line);) ++rows;
  CHECK(rows == 8);
}
