#include "kpot/cli_reporting.hpp"

#include <unistd.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "kpot/harmonic_polynomials.hpp"

namespace kpot {

using nlohmann::json;

const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::MeanValue: return "mvf";
    case ExperimentKind::PotentialIdentity: return "potential_identity";
    case ExperimentKind::InteriorInequality: return "interior_inequality";
    case ExperimentKind::Rigidity: return "rigidity";
    case ExperimentKind::LpCheck: return "lp_check";
  }
  return "unknown";
}

ReportFormat parse_format(const std::string& s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "both") return ReportFormat::Both;
  throw Error(Errc::SchemaError, "format must be json, csv or both, got '" + s + "'");
}

bool ExperimentConfig::needs_seed() const {
  for (const auto& e : experiments)
    if (e.monte_carlo) return true;
  return false;
}

int exit_code(Errc code) {
  switch (code) {
    case Errc::SchemaError:
    case Errc::DimensionMismatch:
    case Errc::NonSymmetricA0:
    case Errc::NotPositiveDefiniteA0:
    case Errc::RankDeficientBlock:
    case Errc::BlockSizeMonotonicityViolated:
    case Errc::NonPositiveLambda: return 2;
    case Errc::ConfigParseError: return 3;
    case Errc::IoError: return 4;
    default: return 1;
  }
}

// ---------------------------------------------------------------------------
// Schema

namespace {

[[noreturn]] void schema_fail(const std::string& msg) { throw Error(Errc::SchemaError, msg); }

/// Key access on one JSON object that remembers which keys were consumed, so
/// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) schema_fail(path_ + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& get(const std::string& key) {
    if (!j_.contains(key)) schema_fail("missing key " + where(key));
    used_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key) {
    const json& v = get(key);
    if (!v.is_number()) schema_fail(where(key) + " must be a number");
    return v.get<double>();
  }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  std::int64_t integer(const std::string& key) {
    const json& v = get(key);
    if (!v.is_number_integer()) schema_fail(where(key) + " must be an integer");
    return v.get<std::int64_t>();
  }
  std::int64_t integer(const std::string& key, std::int64_t fallback) { return has(key) ? integer(key) : fallback; }

  std::string string(const std::string& key) {
    const json& v = get(key);
    if (!v.is_string()) schema_fail(where(key) + " must be a string");
    return v.get<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) {
    return has(key) ? string(key) : fallback;
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = get(key);
    if (!v.is_boolean()) schema_fail(where(key) + " must be true or false");
    return v.get<bool>();
  }

  void reject_unknown() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) schema_fail("unknown key " + where(it.key()));
  }

  std::string where(const std::string& key) const { return path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

Matd parse_matrix(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) schema_fail(where + " must be a non-empty list of rows");
  const int rows = static_cast<int>(v.size());
  if (!v[0].is_array() || v[0].empty()) schema_fail(where + " rows must be non-empty lists");
  const int cols = static_cast<int>(v[0].size());
  Matd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (!v[i].is_array() || static_cast<int>(v[i].size()) != cols) schema_fail(where + " rows must have equal length");
    for (int j = 0; j < cols; ++j) {
      if (!v[i][j].is_number()) schema_fail(where + " entries must be numbers");
      m(i, j) = v[i][j].get<double>();
    }
  }
  return m;
}

json matrix_json(const Matd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Vecd parse_vector(const json& v, const std::string& where) {
  if (!v.is_array()) schema_fail(where + " must be a list of numbers");
  Vecd x(static_cast<int>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) schema_fail(where + " entries must be numbers");
    x(static_cast<int>(i)) = v[i].get<double>();
  }
  return x;
}

void parse_operator(const json& j, ExperimentConfig& cfg) {
  Section s(j, "operator");
  const json& bs = s.get("block_sizes");
  if (!bs.is_array() || bs.empty()) schema_fail("operator.block_sizes must be a non-empty list");
  std::vector<int> blocks;
  for (const auto& b : bs) {
    if (!b.is_number_integer() || b.get<int>() < 1) schema_fail("operator.block_sizes entries must be positive integers");
    blocks.push_back(b.get<int>());
  }
  int n = 0;
  for (int b : blocks) n += b;
  const Matd A0 = parse_matrix(s.get("A0"), "operator.A0");
  std::vector<Matd> B;
  for (std::size_t k = 1; k < blocks.size(); ++k) {
    const std::string key = "B" + std::to_string(k);
    B.push_back(parse_matrix(s.get(key), s.where(key)));
  }
  s.reject_unknown();
  cfg.evaluator = make_evaluator(validate_operator(n, blocks, A0, B));

  json echo{{"block_sizes", blocks}, {"A0", matrix_json(A0)}};
  for (std::size_t k = 0; k < B.size(); ++k) echo["B" + std::to_string(k + 1)] = matrix_json(B[k]);
  cfg.operator_echo = echo;
}

void parse_ball(const json& j, ExperimentConfig& cfg) {
  Section s(j, "ball");
  const int n = cfg.spec().n();
  cfg.z0 = GroupPointd::origin(n);
  if (s.has("z0")) {
    Section z(s.get("z0"), "ball.z0");
    cfg.z0.x = parse_vector(z.get("x"), "ball.z0.x");
    if (cfg.z0.x.size() != n) schema_fail("ball.z0.x must have " + std::to_string(n) + " entries");
    cfg.z0.t = z.number("t");
    z.reject_unknown();
  }
  if (s.has("r") == s.has("radii")) schema_fail("ball needs exactly one of r and radii");
  if (s.has("r")) {
    cfg.radii = {s.number("r")};
  } else {
    const json& v = s.get("radii");
    if (!v.is_array() || v.empty()) schema_fail("ball.radii must be a non-empty list");
    for (const auto& r : v) {
      if (!r.is_number()) schema_fail("ball.radii entries must be numbers");
      cfg.radii.push_back(r.get<double>());
    }
  }
  for (double r : cfg.radii)
    if (!(r > 0) || !std::isfinite(r)) schema_fail("ball radii must be positive and finite");
  s.reject_unknown();
}

void parse_quadrature(const json& j, ExperimentConfig& cfg) {
  Section s(j, "quadrature");
  QuadratureConfig& q = cfg.quadrature;
  q.rel_tol = s.number("rel_tol", q.rel_tol);
  q.abs_tol = s.number("abs_tol", q.abs_tol);
  q.spatial_rel_tol = s.number("spatial_rel_tol", q.spatial_rel_tol);
  q.gauss_order = static_cast<int>(s.integer("gauss_order", q.gauss_order));
  q.endpoint_refinement = static_cast<int>(s.integer("endpoint_refinement", q.endpoint_refinement));
  q.extra_pole_levels = static_cast<int>(s.integer("extra_pole_levels", q.extra_pole_levels));
  q.max_cells = static_cast<int>(s.integer("max_cells", q.max_cells));
  q.mc_samples = s.integer("mc_samples", q.mc_samples);
  q.threads = static_cast<int>(s.integer("threads", q.threads));
  if (s.has("seed")) {
    const std::int64_t seed = s.integer("seed");
    if (seed < 0) schema_fail("quadrature.seed must be non-negative");
    q.seed = static_cast<std::uint64_t>(seed);
  }
  s.reject_unknown();
}

const std::set<std::string> kFamilies = {"spatial_shift", "radius_mismatch", "slice_scale", "bite"};

ExperimentSpec parse_experiment(const json& j, std::size_t index) {
  const std::string path = "experiments[" + std::to_string(index) + "]";
  Section s(j, path);
  ExperimentSpec e;
  const std::string type = s.string("type");
  if (type == "mvf") e.kind = ExperimentKind::MeanValue;
  else if (type == "potential_identity") e.kind = ExperimentKind::PotentialIdentity;
  else if (type == "interior_inequality") e.kind = ExperimentKind::InteriorInequality;
  else if (type == "rigidity") e.kind = ExperimentKind::Rigidity;
  else if (type == "lp_check") e.kind = ExperimentKind::LpCheck;
  else schema_fail(path + ".type: unknown experiment '" + type + "'");

  char prefix[8];
  std::snprintf(prefix, sizeof prefix, "%02zu_", index + 1);
  e.name = s.string("name", prefix + type);
  if (e.name.empty()) schema_fail(s.where("name") + " must not be empty");
  for (char c : e.name)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-')
      schema_fail(s.where("name") + " may only contain letters, digits, '_' and '-'");

  json echo{{"type", type}, {"name", e.name}};
  auto positive_int = [&](const std::string& key, int fallback) {
    const std::int64_t v = s.integer(key, fallback);
    if (v < 1 || v > 100000) schema_fail(s.where(key) + " must be in [1, 100000]");
    echo[key] = v;
    return static_cast<int>(v);
  };
  auto positive = [&](const std::string& key, double fallback) {
    const double v = s.number(key, fallback);
    if (!(v > 0) || !std::isfinite(v)) schema_fail(s.where(key) + " must be positive");
    echo[key] = v;
    return v;
  };
  auto point_seed = [&] {
    const std::int64_t v = s.integer("point_seed", 1);
    if (v < 0) schema_fail(s.where("point_seed") + " must be non-negative");
    echo["point_seed"] = v;
    return static_cast<std::uint64_t>(v);
  };
  auto family = [&](bool allow_exact) {
    e.family = s.string("family");
    if (!kFamilies.count(e.family) && !(allow_exact && e.family == "exact"))
      schema_fail(s.where("family") + ": unknown perturbation family '" + e.family + "'");
    echo["family"] = e.family;
    if (e.family == "exact") return;
    e.magnitude = positive("magnitude", 0.1);
    e.taper = s.number("taper", 0.25);
    if (!(e.taper >= 0 && e.taper < 1)) schema_fail(s.where("taper") + " must be in [0, 1)");
    echo["taper"] = e.taper;
  };
  auto exponent = [&] {
    if (!s.has("p")) return;
    const double p = s.number("p");
    if (p != std::floor(p) || p < 1) schema_fail(s.where("p") + " must be a positive integer");
    e.p = p;
    echo["p"] = p;
  };

  switch (e.kind) {
    case ExperimentKind::MeanValue: {
      e.max_degree = static_cast<int>(s.integer("max_degree", 4));
      if (e.max_degree < 0 || e.max_degree > 8) schema_fail(s.where("max_degree") + " must be in [0, 8]");
      echo["max_degree"] = e.max_degree;
      const std::string method = s.string("method", "slices");
      if (method != "slices" && method != "mc") schema_fail(s.where("method") + " must be slices or mc");
      e.monte_carlo = method == "mc";
      echo["method"] = method;
      e.tolerance = positive("tolerance", 1e-7);
      break;
    }
    case ExperimentKind::PotentialIdentity:
      e.points = positive_int("points", 32);
      e.point_seed = point_seed();
      e.tolerance = positive("tolerance", 1e-5);
      break;
    case ExperimentKind::InteriorInequality:
      e.points = positive_int("points", 16);
      e.point_seed = point_seed();
      e.safety = positive("safety", 5);
      break;
    case ExperimentKind::Rigidity:
      family(false);
      e.points = positive_int("points", 32);
      e.point_seed = point_seed();
      e.factor = positive("factor", 100);
      exponent();
      break;
    case ExperimentKind::LpCheck:
      family(true);
      exponent();
      e.expect_finite = s.boolean("expect_finite", true);
      echo["expect_finite"] = e.expect_finite;
      break;
  }
  s.reject_unknown();
  e.echo = echo;
  return e;
}

void parse_output(const json& j, ExperimentConfig& cfg) {
  Section s(j, "output");
  cfg.out_dir = s.string("dir", cfg.out_dir);
  if (s.has("format")) cfg.format = parse_format(s.string("format"));
  cfg.slices = static_cast<int>(s.integer("slices", cfg.slices));
  if (cfg.slices < 2 || cfg.slices > 100000) schema_fail("output.slices must be in [2, 100000]");
  s.reject_unknown();
}

}  // namespace

ExperimentConfig parse_config(const json& doc, std::optional<std::uint64_t> seed_override) {
  Section top(doc, "config");
  ExperimentConfig cfg;
  parse_operator(top.get("operator"), cfg);
  parse_ball(top.get("ball"), cfg);
  if (top.has("quadrature")) parse_quadrature(top.get("quadrature"), cfg);
  if (seed_override) cfg.quadrature.seed = seed_override;
  cfg.quadrature.validate();

  const json& list = top.get("experiments");
  if (!list.is_array() || list.empty()) schema_fail("experiments must be a non-empty list");
  std::set<std::string> names;
  for (std::size_t i = 0; i < list.size(); ++i) {
    cfg.experiments.push_back(parse_experiment(list[i], i));
    if (!names.insert(cfg.experiments.back().name).second)
      schema_fail("duplicate experiment name '" + cfg.experiments.back().name + "'");
  }
  if (top.has("output")) parse_output(top.get("output"), cfg);
  top.reject_unknown();

  if (cfg.needs_seed() && !cfg.quadrature.seed)
    schema_fail("a Monte Carlo experiment needs quadrature.seed or --seed");
  return cfg;
}

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw Error(Errc::ConfigParseError, path + ": " + e.what());
  }
}

std::string operator_hash(const OperatorSpecd& spec) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::uint64_t word) {
    for (int b = 0; b < 8; ++b) {
      h ^= (word >> (8 * b)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  auto mix_matrix = [&](const Matd& m) {
    mix(static_cast<std::uint64_t>(m.rows()));
    mix(static_cast<std::uint64_t>(m.cols()));
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) mix(std::bit_cast<std::uint64_t>(m(i, j) + 0.0));  // -0 == +0
  };
  mix(spec.block_sizes().size());
  for (int b : spec.block_sizes()) mix(static_cast<std::uint64_t>(b));
  mix_matrix(spec.A0());
  for (const auto& B : spec.B_blocks()) mix_matrix(B);
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

namespace {

json tolerances_json(const QuadratureConfig& q) {
  // threads is left out on purpose: reports must not depend on it.
  return json{{"rel_tol", q.rel_tol},
              {"abs_tol", q.abs_tol},
              {"spatial_rel_tol", q.spatial_rel_tol},
              {"gauss_order", q.gauss_order},
              {"endpoint_refinement", q.endpoint_refinement},
              {"extra_pole_levels", q.extra_pole_levels},
              {"max_cells", q.max_cells},
              {"mc_samples", q.mc_samples}};
}

json seed_json(const QuadratureConfig& q) { return q.seed ? json(*q.seed) : json(nullptr); }

std::string radius_suffix(std::size_t k) { return "_r" + std::to_string(k); }

std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double default_p(const OperatorSpecd& spec) { return std::ceil(spec.homogeneous_dimension() / 2.0) + 1; }

/// Per-radius result plus whether it passed and why not.
struct Piece {
  json report;
  bool passed = true;
  std::string reason;
};

Piece run_mvf(const ExperimentSpec& e, const LBall& ball, const HarmonicBasis& basis, const QuadratureConfig& q,
              std::ostringstream& csv) {
  Piece out;
  const auto& us = basis.elements;
  std::vector<double> values(us.size()), errors(us.size());
  bool converged = true;
  if (e.monte_carlo) {
    for (std::size_t i = 0; i < us.size(); ++i) {
      const auto est = mean_value_mc([&](const GroupPointd& z) { return us[i](z); }, ball, q);
      values[i] = est.value;
      errors[i] = est.error;
    }
  } else {
    const auto est = mean_value(us, ball, q);
    converged = est.converged;
    for (std::size_t i = 0; i < us.size(); ++i) {
      values[i] = est.value(static_cast<int>(i));
      errors[i] = est.error;
    }
  }
  json rows = json::array();
  double worst = 0;
  for (std::size_t i = 0; i < us.size(); ++i) {
    const double u0 = us[i](ball.z0());
    const double diff = std::abs(values[i] - u0);
    // Sampling error is allowed on top of the tolerance for the MC path.
    const double bound = e.tolerance * (1 + std::abs(u0)) + (e.monte_carlo ? 4 * errors[i] : 0.0);
    const bool ok = diff < bound;
    worst = std::max(worst, diff / bound);
    rows.push_back(json{{"polynomial", us[i].to_string()},
                        {"degree", basis.degrees[i]},
                        {"u_z0", u0},
                        {"mean_value", values[i]},
                        {"error", errors[i]},
                        {"abs_diff", diff},
                        {"bound", bound},
                        {"pass", ok}});
    csv << csv_number(ball.r()) << ',' << i << ',' << basis.degrees[i] << ',' << csv_number(u0) << ','
        << csv_number(values[i]) << ',' << csv_number(errors[i]) << ',' << csv_number(diff) << ','
        << csv_number(bound) << ',' << (ok ? 1 : 0) << '\n';
  }
  out.passed = worst < 1 && converged;
  if (!converged) out.reason = "mean values did not converge at r=" + csv_number(ball.r());
  else if (!out.passed) out.reason = "mean value error exceeds tolerance at r=" + csv_number(ball.r());
  out.report = json{{"r", ball.r()}, {"converged", converged}, {"worst_ratio", worst}, {"polynomials", rows}};
  return out;
}

Piece run_identity(const ExperimentSpec& e, const LBall& ball, const QuadratureConfig& q, std::ostringstream& csv) {
  Piece out;
  const auto D = SlicedDomain::exact(ball);
  const auto rep = potential_identity_residual(D, exterior_test_points(D, e.points, e.point_seed), q);
  write_residuals_csv(csv, rep);
  out.passed = rep.all_converged && rep.sup_rel_residual < e.tolerance;
  if (!rep.all_converged) out.reason = "potential quadrature did not converge";
  else if (!out.passed)
    out.reason = "sup relative residual " + csv_number(rep.sup_rel_residual) + " >= " + csv_number(e.tolerance);
  out.report = rep;
  return out;
}

Piece run_interior(const ExperimentSpec& e, const LBall& ball, const QuadratureConfig& q, std::ostringstream& csv) {
  Piece out;
  const auto margins = interior_inequality_margin(ball, interior_test_points(ball, e.points, e.point_seed), q);
  write_margins_csv(csv, margins);
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& m : margins) {
    const bool ok = m.converged && m.margin > e.safety * m.error;
    if (!ok) out.passed = false;
    worst = std::min(worst, m.error > 0 ? m.margin / m.error : std::numeric_limits<double>::infinity());
  }
  if (!out.passed) out.reason = "margin not resolved above " + csv_number(e.safety) + " x quadrature error";
  out.report = json{{"r", ball.r()},
                    {"min_margin_over_error", std::isfinite(worst) ? json(worst) : json("inf")},
                    {"margins", margins}};
  return out;
}

Piece run_rigidity(const ExperimentSpec& e, const LBall& ball, const QuadratureConfig& q, std::ostringstream& csv,
                   std::ostringstream& exact_csv) {
  Piece out;
  const auto D = SlicedDomain::perturbed(ball, make_perturbation(e.family, e.magnitude, ball, e.taper));
  const auto points = exterior_test_points(D, e.points, e.point_seed);
  const auto exact = potential_identity_residual(SlicedDomain::exact(ball), points, q);
  auto rep = potential_identity_residual(D, points, q);
  rep.lp = lp_condition_norm(D, e.p.value_or(default_p(ball.spec())), q);
  write_residuals_csv(csv, rep);
  write_residuals_csv(exact_csv, exact);

  const double ratio = exact.sup_rel_residual > 0 ? rep.sup_rel_residual / exact.sup_rel_residual
                                                  : std::numeric_limits<double>::infinity();
  const bool violated = ratio >= e.factor;
  out.passed = violated && rep.lp->finite && rep.all_converged && exact.all_converged;
  if (!exact.all_converged || !rep.all_converged) out.reason = "potential quadrature did not converge";
  else if (!violated) out.reason = "identity not violated: residual ratio " + csv_number(ratio);
  else if (!rep.lp->finite) out.reason = "L^p condition diverges";
  out.report = json{{"r", ball.r()},
                    {"exact_sup_rel_residual", exact.sup_rel_residual},
                    {"perturbed_sup_rel_residual", rep.sup_rel_residual},
                    {"ratio", std::isfinite(ratio) ? json(ratio) : json("inf")},
                    {"violation", violated},
                    {"perturbed", rep},
                    {"exact", exact}};
  return out;
}

Piece run_lp(const ExperimentSpec& e, const LBall& ball, const QuadratureConfig& q, std::ostringstream& csv) {
  Piece out;
  const auto D = e.family == "exact"
                     ? SlicedDomain::exact(ball)
                     : SlicedDomain::perturbed(ball, make_perturbation(e.family, e.magnitude, ball, e.taper));
  const auto lp = lp_condition_norm(D, e.p.value_or(default_p(ball.spec())), q);
  csv << csv_number(ball.r()) << ',' << csv_number(lp.p) << ',' << (lp.finite ? csv_number(lp.value) : "inf") << ','
      << csv_number(lp.error) << ',' << (lp.finite ? 1 : 0) << ',' << (lp.certified ? 1 : 0) << ','
      << (lp.converged ? 1 : 0) << ',' << csv_number(lp.pole_ratio) << '\n';
  out.passed = lp.finite == e.expect_finite && (!lp.finite || lp.converged);
  if (lp.finite != e.expect_finite) out.reason = std::string("L^p norm is ") + (lp.finite ? "finite" : "infinite");
  else if (!out.passed) out.reason = "L^p quadrature did not converge";
  out.report = json{{"r", ball.r()}, {"domain", D.name()}, {"lp", lp}};
  return out;
}

ExperimentOutcome run_one(const ExperimentSpec& e, const ExperimentConfig& cfg, const json& header) {
  ExperimentOutcome out;
  out.name = e.name;
  out.kind = e.kind;
  out.passed = true;
  std::optional<HarmonicBasis> basis;
  if (e.kind == ExperimentKind::MeanValue) basis = harmonic_basis(cfg.spec(), e.max_degree);

  std::ostringstream table;  // one CSV for mvf and lp_check
  if (e.kind == ExperimentKind::MeanValue) table << "r,index,degree,u_z0,mean_value,error,abs_diff,bound,pass\n";
  if (e.kind == ExperimentKind::LpCheck) table << "r,p,value,error,finite,certified,converged,pole_ratio\n";

  json results = json::array();
  for (std::size_t k = 0; k < cfg.radii.size(); ++k) {
    const LBall ball = make_ball(cfg.evaluator, cfg.radii[k], cfg.z0);
    std::ostringstream csv, exact_csv;
    Piece piece;
    try {
      switch (e.kind) {
        case ExperimentKind::MeanValue: piece = run_mvf(e, ball, *basis, cfg.quadrature, table); break;
        case ExperimentKind::PotentialIdentity: piece = run_identity(e, ball, cfg.quadrature, csv); break;
        case ExperimentKind::InteriorInequality: piece = run_interior(e, ball, cfg.quadrature, csv); break;
        case ExperimentKind::Rigidity: piece = run_rigidity(e, ball, cfg.quadrature, csv, exact_csv); break;
        case ExperimentKind::LpCheck: piece = run_lp(e, ball, cfg.quadrature, table); break;
      }
    } catch (const Error& err) {
      if (err.code() == Errc::SchemaError) throw;
      piece.passed = false;
      piece.reason = err.what();
      piece.report = json{{"r", ball.r()}, {"error", to_string(err.code())}, {"message", err.what()}};
    }
    piece.report["pass"] = piece.passed;
    if (!piece.passed) {
      piece.report["reason"] = piece.reason;
      if (out.passed) out.reason = piece.reason;
      out.passed = false;
    }
    results.push_back(piece.report);
    const std::string suffix = radius_suffix(k);
    if (!csv.str().empty()) out.csv.push_back({e.name + suffix + ".csv", csv.str()});
    if (!exact_csv.str().empty()) out.csv.push_back({e.name + suffix + "_exact.csv", exact_csv.str()});
  }
  if (e.kind == ExperimentKind::MeanValue || e.kind == ExperimentKind::LpCheck)
    out.csv.push_back({e.name + ".csv", table.str()});

  out.report = header;
  out.report["experiment"] = e.echo;
  out.report["pass"] = out.passed;
  if (!out.passed) out.report["reason"] = out.reason;
  out.report["results"] = results;
  return out;
}

}  // namespace

RunResult run_experiments(const ExperimentConfig& cfg) {
  const json header{{"tool", "kpot"},
                    {"version", kToolVersion},
                    {"operator_hash", operator_hash(cfg.spec())},
                    {"seed", seed_json(cfg.quadrature)},
                    {"tolerances", tolerances_json(cfg.quadrature)},
                    {"operator", cfg.operator_echo},
                    {"ball", json{{"z0", cfg.z0}, {"radii", cfg.radii}}}};
  RunResult result;
  json experiments = json::array(), failures = json::array();
  for (const auto& e : cfg.experiments) {
    result.outcomes.push_back(run_one(e, cfg, header));
    const auto& o = result.outcomes.back();
    experiments.push_back(json{{"name", o.name}, {"type", to_string(o.kind)}, {"pass", o.passed}});
    if (!o.passed) {
      result.passed = false;
      failures.push_back(json{{"name", o.name}, {"type", to_string(o.kind)}, {"reason", o.reason}});
    }
  }
  for (std::size_t k = 0; k < cfg.radii.size(); ++k) {
    std::ostringstream os;
    write_slices_csv(os, make_ball(cfg.evaluator, cfg.radii[k], cfg.z0), cfg.slices);
    result.slice_csv.push_back({"slices" + radius_suffix(k) + ".csv", os.str()});
  }
  result.summary = json{{"tool", "kpot"},
                        {"version", kToolVersion},
                        {"operator_hash", operator_hash(cfg.spec())},
                        {"seed", seed_json(cfg.quadrature)},
                        {"tolerances", tolerances_json(cfg.quadrature)},
                        {"status", result.passed ? "pass" : "fail"},
                        {"experiments", experiments},
                        {"failures", failures}};
  return result;
}

// ---------------------------------------------------------------------------
// Output

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(Errc::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(Errc::IoError, "cannot rename into " + target.string());
  }
}

void write_reports(const RunResult& result, const std::string& dir, ReportFormat format) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(Errc::IoError, "cannot create output directory " + dir);
  const fs::path base(dir);
  const bool want_json = format != ReportFormat::Csv, want_csv = format != ReportFormat::Json;
  for (const auto& o : result.outcomes) {
    if (want_json) write_file_atomic((base / (o.name + ".json")).string(), o.report.dump(2) + "\n");
    if (want_csv)
      for (const auto& f : o.csv) write_file_atomic((base / f.name).string(), f.content);
  }
  if (want_csv)
    for (const auto& f : result.slice_csv) write_file_atomic((base / f.name).string(), f.content);
  write_file_atomic((base / "summary.json").string(), result.summary.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// describe

namespace {

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  std::string s = os.str();
  if (s.find_first_of(".einf") == std::string::npos) s += ".0";
  return s;
}

void print_matrix(std::ostream& os, const std::string& name, const Matd& m) {
  os << "  " << name << " =";
  for (int i = 0; i < m.rows(); ++i) {
    os << (i == 0 ? " [" : "       ") << "[";
    for (int j = 0; j < m.cols(); ++j) os << (j ? ", " : "") << num(m(i, j));
    os << "]" << (i + 1 == m.rows() ? "]" : "") << "\n";
  }
}

}  // namespace

void describe(std::ostream& os, const ExperimentConfig& cfg) {
  const auto& spec = cfg.spec();
  os << "operator: n=" << spec.n() << ", blocks=[";
  for (std::size_t j = 0; j < spec.block_sizes().size(); ++j) os << (j ? ", " : "") << spec.block_sizes()[j];
  os << "], hash " << operator_hash(spec) << "\n";
  if (spec.is_heat_like()) os << "  heat operator specialization (B = 0)\n";
  print_matrix(os, "A0", spec.A0());
  for (std::size_t k = 0; k < spec.B_blocks().size(); ++k) print_matrix(os, "B" + std::to_string(k + 1), spec.B_blocks()[k]);
  os << "Q=" << spec.homogeneous_dimension() << "\n";
  os << "z0: x=(";
  for (int i = 0; i < spec.n(); ++i) os << (i ? ", " : "") << num(cfg.z0.x(i));
  os << "), t=" << num(cfg.z0.t) << "\n";
  for (double r : cfg.radii) {
    const LBall ball = make_ball(cfg.evaluator, r, cfg.z0);
    const Box box = ball_bounding_box(ball);
    os << "r=" << num(r) << ": s_max=" << num(ball.s_max()) << "\n  bounding box:";
    for (int i = 0; i < spec.n(); ++i) os << " x" << i + 1 << " in [" << num(box.lo(i)) << ", " << num(box.hi(i)) << "]";
    os << " t in [" << num(box.t_lo) << ", " << num(box.t_hi) << "]\n";
    os << "  slices: " << cfg.slices << "\n";
  }
  os << "experiments:";
  for (const auto& e : cfg.experiments) os << " " << e.name;
  os << "\n";
}

}  // namespace kpot
