// Acceptance suite: one line per criterion with the measured worst case, the
// pinned tolerance and the runtime against its budget. Exit status 0 iff every
// criterion passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>

#include "kpot/cli_reporting.hpp"
#include "operators.hpp"

using namespace kpot;
using namespace kpot::testing;

namespace {

const double kPi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

/// Radius whose ball has temporal depth one.
double unit_depth_radius(const OperatorSpecd& spec) {
  return std::pow(4 * kPi, spec.n() / 2.0) * std::sqrt(det_covariance_polynomial(spec)(1.0));
}

/// Tolerances used for the potential experiments (criteria 6 to 8).
QuadratureConfig experiment_config() {
  QuadratureConfig cfg;
  cfg.gauss_order = 8;
  cfg.rel_tol = 1e-8;
  cfg.spatial_rel_tol = 1e-6;
  return cfg;
}

const double kScales[] = {0.1, 1.0, 10.0};

double rel_dist(const GroupPointd& a, const GroupPointd& b) {
  const double diff = std::max((a.x - b.x).lpNorm<Eigen::Infinity>(), std::abs(a.t - b.t));
  const double size = std::max({a.x.lpNorm<Eigen::Infinity>(), std::abs(a.t), b.x.lpNorm<Eigen::Infinity>(),
                                std::abs(b.t), 1.0});
  return diff / size;
}

GroupPointd random_point(Xoshiro256& rng, int n, double t_lo = -1, double t_hi = 1) {
  Vecd x(n);
  for (int i = 0; i < n; ++i) x(i) = 2 * rng.uniform() - 1;
  return {x, t_lo + (t_hi - t_lo) * rng.uniform()};
}

// 1 -------------------------------------------------------------------------
Outcome group_and_homogeneity() {
  const double tol = 1e-10;
  double worst_assoc = 0, worst_inv = 0, worst_dil = 0, worst_gamma = 0;
  for (const auto& op : all_operators()) {
    const auto& S = op.spec;
    const GammaEvaluatord ev(S);
    const int n = S.n(), Q = S.homogeneous_dimension();
    Xoshiro256 rng(2024);
    for (int k = 0; k < 1000; ++k) {
      const auto z = random_point(rng, n), w = random_point(rng, n), v = random_point(rng, n);
      worst_assoc = std::max(worst_assoc, rel_dist(group_compose(group_compose(z, w, S), v, S),
                                                   group_compose(z, group_compose(w, v, S), S)));
      const auto e = GroupPointd::origin(n);
      worst_inv = std::max(worst_inv, rel_dist(group_compose(z, group_inverse(z, S), S), e));
      worst_inv = std::max(worst_inv, rel_dist(group_compose(group_inverse(z, S), z, S), e));
      const double lambda = 0.5 + 1.5 * rng.uniform();
      worst_dil = std::max(worst_dil, rel_dist(dilate(lambda, group_compose(z, w, S), S),
                                               group_compose(dilate(lambda, z, S), dilate(lambda, w, S), S)));
      const GroupPointd zp = random_point(rng, n, 0.05, 2);
      const double g = ev.gamma(dilate(lambda, zp, S));
      if (g > 1e-290) worst_gamma = std::max(worst_gamma, std::abs(g - std::pow(lambda, 2 - Q) * ev.gamma(zp)) / g);
    }
  }
  const double worst = std::max({worst_assoc, worst_inv, worst_dil, worst_gamma});
  return {worst < tol, fmt("associativity %.1e, inverse %.1e", worst_assoc, worst_inv) +
                           fmt(", dilation %.1e, gamma homogeneity %.1e", worst_dil, worst_gamma) +
                           fmt(" over 4x1000 cases (tol %.0e)", tol)};
}

// 2 -------------------------------------------------------------------------
Outcome covariance_exactness() {
  double worst_fd = 0;
  for (const auto& op : all_operators()) {
    const Covariance<double> cov(op.spec);
    for (double t : {-1.5, -0.3, 0.2, 1.0, 2.5}) {
      const double h = 1e-4;
      // Five-point stencil: truncation O(h^4), roundoff O(eps / h).
      const Matd fd = (-cov.at(t + 2 * h) + 8 * cov.at(t + h) - 8 * cov.at(t - h) + cov.at(t - 2 * h)) / (12 * h);
      const Matd E = cov.exponential()(t);
      const Matd exact = E * op.spec.A() * E.transpose();
      worst_fd = std::max(worst_fd, (fd - exact).norm() / exact.norm());
    }
  }
  double worst_proto = 0;
  const Covariance<double> proto(prototype());
  for (double t : {-2.0, -0.5, 0.25, 1.0, 3.0}) {
    Matd hand(2, 2);
    hand << t, -t * t / 2, -t * t / 2, t * t * t / 3;
    const Matd C = proto.at(t);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) worst_proto = std::max(worst_proto, std::abs(C(i, j) - hand(i, j)) / std::abs(hand(i, j)));
  }
  const double eps = std::numeric_limits<double>::epsilon();
  return {worst_fd < 1e-8 && worst_proto <= 4 * eps,
          fmt("dC/dt vs E A E^T %.1e (tol 1e-8); prototype closed form %.1e", worst_fd, worst_proto) +
              fmt(" (tol 4 eps = %.1e)", 4 * eps)};
}

// 3 -------------------------------------------------------------------------
Outcome mass_normalization() {
  double worst = 0;
  for (const auto& op : all_operators()) {
    const GammaEvaluatord ev(op.spec);
    for (double t : {0.1, 1.0, 10.0}) worst = std::max(worst, std::abs(gaussian_mass(ev, t, 60) - 1));
  }
  return {worst < 1e-6, fmt("max |mass - 1| = %.1e (tol 1e-6)", worst)};
}

// 4 -------------------------------------------------------------------------
Outcome mean_value_formula() {
  const QuadratureConfig cfg;
  double worst = 0;
  int checked = 0;
  bool converged = true;
  for (const auto& op : all_operators()) {
    const auto ev = make_evaluator(op.spec);
    const int n = op.spec.n();
    const auto basis = harmonic_basis(op.spec, 4);
    Xoshiro256 rng(77);
    for (const GroupPointd& z0 : {GroupPointd::origin(n), random_point(rng, n)}) {
      for (double scale : kScales) {
        const LBall ball = make_ball(ev, scale * unit_depth_radius(op.spec), z0);
        const auto est = mean_value(basis.elements, ball, cfg);
        converged = converged && est.converged;
        for (std::size_t i = 0; i < basis.elements.size(); ++i) {
          const double u0 = basis.elements[i](z0);
          worst = std::max(worst, std::abs(est.value(static_cast<int>(i)) - u0) / (1 + std::abs(u0)));
          ++checked;
        }
      }
    }
  }
  return {converged && worst < 1e-7,
          fmt("max |M_r u - u(z0)| / (1 + |u(z0)|) = %.1e over %.0f cases (tol 1e-7)", worst, checked)};
}

// 5 -------------------------------------------------------------------------
Outcome kernel_normalization() {
  const QuadratureConfig cfg;
  double worst = 0;
  for (const auto& op : all_operators()) {
    const auto ev = make_evaluator(op.spec);
    const int n = op.spec.n();
    for (double scale : kScales) {
      const double r = scale * unit_depth_radius(op.spec);
      const LBall ball = make_ball(ev, r, {Vecd::LinSpaced(n, 0.5, -1.0), 2.0});
      const auto est = integrate_over_ball(AnisoPolynomial::constant(n, 1), true, ball, cfg);
      worst = std::max(worst, est.converged ? std::abs(est.value - r) / r : 1.0);
    }
  }
  return {worst < 1e-7, fmt("max |int W - r| / r = %.1e (tol 1e-7)", worst)};
}

// 6 -------------------------------------------------------------------------
Outcome potential_identity() {
  const auto cfg = experiment_config();
  double worst = 0;
  bool converged = true;
  for (const auto& op : all_operators()) {
    const auto ev = make_evaluator(op.spec);
    const int n = op.spec.n();
    for (double scale : kScales) {
      const LBall ball = make_ball(ev, scale * unit_depth_radius(op.spec), {Vecd::LinSpaced(n, 0.3, -0.2), 0.7});
      const auto D = SlicedDomain::exact(ball);
      const auto rep = potential_identity_residual(D, exterior_test_points(D, 32, 1), cfg);
      converged = converged && rep.all_converged;
      worst = std::max(worst, rep.sup_rel_residual);
    }
  }
  return {converged && worst < 1e-5,
          fmt("sup relative residual %.1e over 4 operators x 3 radii x 32 points (tol 1e-5)", worst)};
}

// 7 -------------------------------------------------------------------------
Outcome interior_inequality() {
  const auto cfg = experiment_config();
  double worst = std::numeric_limits<double>::infinity();
  bool ok = true;
  for (const auto& op : all_operators()) {
    const auto ev = make_evaluator(op.spec);
    const LBall ball = make_ball(ev, unit_depth_radius(op.spec));
    for (const auto& m : interior_inequality_margin(ball, interior_test_points(ball, 16, 3), cfg)) {
      ok = ok && m.converged && m.margin > 5 * m.error;
      worst = std::min(worst, m.error > 0 ? m.margin / m.error : std::numeric_limits<double>::infinity());
    }
  }
  return {ok, fmt("min margin / error = %.1e over 4 x 16 points (need > 5)", worst)};
}

// 8 -------------------------------------------------------------------------
Outcome rigidity() {
  const auto cfg = experiment_config();
  double worst_ratio = std::numeric_limits<double>::infinity();
  bool ok = true;
  std::string notes;
  for (const auto& op : all_operators()) {
    const auto ev = make_evaluator(op.spec);
    const LBall ball = make_ball(ev, unit_depth_radius(op.spec));
    const double p = std::ceil(op.spec.homogeneous_dimension() / 2.0) + 1;
    for (const std::string family : {"spatial_shift", "radius_mismatch", "slice_scale", "bite"}) {
      const auto D = SlicedDomain::perturbed(ball, make_perturbation(family, 0.05, ball));
      const auto points = exterior_test_points(D, 32, 1);
      const auto exact = potential_identity_residual(SlicedDomain::exact(ball), points, cfg);
      const auto pert = potential_identity_residual(D, points, cfg);
      const auto lp = lp_condition_norm(D, p, cfg);
      const double ratio = pert.sup_rel_residual / exact.sup_rel_residual;
      worst_ratio = std::min(worst_ratio, ratio);
      const bool good = ratio >= 100 && lp.finite && lp.converged && exact.all_converged && pert.all_converged;
      if (!good) notes += std::string(" [") + op.name + " " + family + fmt(": ratio %.1e, L^p %.3g]", ratio, lp.value);
      ok = ok && good;
    }
  }
  return {ok, fmt("min residual ratio perturbed/exact = %.1e (need >= 100); L^p finite at p = ceil(Q/2)+1",
                  worst_ratio) +
                  notes};
}

// 9 -------------------------------------------------------------------------
Outcome future_mass() {
  const auto cfg = experiment_config();
  double smallest = std::numeric_limits<double>::infinity();
  bool ok = true;
  for (const auto& op : all_operators()) {
    const LBall ball = make_ball(make_evaluator(op.spec), unit_depth_radius(op.spec));
    const auto f = future_mass_check(ball, 0.3 * ball.s_max(), cfg);
    ok = ok && f.detected && f.u_star_at_z0 == 0 && f.mean_value > 0;
    smallest = std::min(smallest, f.error > 0 ? f.mean_value / f.error : f.mean_value);
  }
  return {ok, fmt("u*(z0) = 0 and mean value > 0 for all operators; min mean/error = %.1e", smallest)};
}

// 10 ------------------------------------------------------------------------
Outcome determinism() {
  namespace fs = std::filesystem;
  const auto doc = nlohmann::json::parse(R"({
    "operator": {"block_sizes": [1, 1], "A0": [[1.0]], "B1": [[1.0]]},
    "ball": {"radii": [3.6275987284684357, 36.275987284684357]},
    "quadrature": {"gauss_order": 8, "rel_tol": 1e-8, "spatial_rel_tol": 1e-6, "mc_samples": 20000},
    "experiments": [
      {"type": "mvf", "max_degree": 2, "method": "mc"},
      {"type": "potential_identity", "points": 8},
      {"type": "rigidity", "family": "bite", "magnitude": 0.1, "points": 8},
      {"type": "lp_check", "family": "spatial_shift", "magnitude": 0.1}
    ]
  })");
  const fs::path root = fs::temp_directory_path() / "kpot_acceptance_determinism";
  fs::remove_all(root);
  std::vector<std::string> dirs;
  for (int threads : {1, 1, 4}) {
    auto cfg = parse_config(doc, 31);
    cfg.quadrature.threads = threads;
    dirs.push_back((root / ("run" + std::to_string(dirs.size()))).string());
    write_reports(run_experiments(cfg), dirs.back(), ReportFormat::Both);
  }
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  };
  int files = 0, differ = 0;
  for (const auto& entry : fs::directory_iterator(dirs[0])) {
    ++files;
    for (std::size_t k = 1; k < dirs.size(); ++k)
      if (slurp(entry.path()) != slurp(fs::path(dirs[k]) / entry.path().filename())) ++differ;
  }
  fs::remove_all(root);
  return {differ == 0 && files > 0,
          fmt("%.0f report files, %.0f differ across 2 runs at 1 thread and 1 run at 4 threads", files, differ)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "group and homogeneity", 10, group_and_homogeneity},
      {2, "covariance exactness", 1, covariance_exactness},
      {3, "mass normalization", 30, mass_normalization},
      {4, "mean-value formula", 120, mean_value_formula},
      {5, "kernel normalization", 30, kernel_normalization},
      {6, "exterior potential identity", 300, potential_identity},
      {7, "interior strict inequality", 180, interior_inequality},
      {8, "rigidity falsification", 600, rigidity},
      {9, "future-mass detector", 60, future_mass},
      {10, "determinism", 60, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("criterion %2d %s  %s: %s; %.1f s (budget %.0f s)%s\n", c.id, pass ? "PASS" : "FAIL", c.name,
                o.detail.c_str(), secs, c.budget_s, in_time ? "" : " OVER BUDGET");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
