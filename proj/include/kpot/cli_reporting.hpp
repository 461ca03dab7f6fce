#pragma once

// Config-driven batch driver. A config is a JSON document with the sections
// operator, ball, quadrature, experiments and output; every experiment runs
// once per radius and produces a JSON report plus CSV tables. Reports depend
// only on (config, seed): no timestamps, paths or thread counts are recorded.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kpot/potential_lab.hpp"

namespace kpot {

inline constexpr const char* kToolVersion = "0.1.0";

enum class ExperimentKind { MeanValue, PotentialIdentity, InteriorInequality, Rigidity, LpCheck };
const char* to_string(ExperimentKind k);

enum class ReportFormat { Json, Csv, Both };
ReportFormat parse_format(const std::string& s);

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::MeanValue;
  std::string name;
  bool monte_carlo = false;  ///< mvf only: estimate the mean values by sampling
  int max_degree = 4;        ///< mvf: anisotropic degree of the harmonic basis
  int points = 32;           ///< test points per radius
  std::uint64_t point_seed = 1;
  double tolerance = 0;      ///< mvf: 1e-7 (times 1 + |u|); identity: 1e-5
  double safety = 5;         ///< interior: margin must exceed safety * error
  std::string family;        ///< rigidity / lp_check perturbation, or "exact"
  double magnitude = 0.1;
  double taper = 0.25;
  double factor = 100;       ///< rigidity: required residual amplification
  std::optional<double> p;   ///< defaults to ceil(Q/2) + 1
  bool expect_finite = true; ///< lp_check
  nlohmann::json echo;       ///< parameters as resolved, for the report
};

struct ExperimentConfig {
  Evaluator evaluator;
  nlohmann::json operator_echo;
  GroupPointd z0;
  std::vector<double> radii;
  QuadratureConfig quadrature;
  std::vector<ExperimentSpec> experiments;
  std::string out_dir = "kpot-out";
  ReportFormat format = ReportFormat::Both;
  int slices = 64;

  const OperatorSpecd& spec() const { return evaluator->spec(); }
  bool needs_seed() const;
};

/// Validates a parsed document. A seed override replaces quadrature.seed
/// before the "Monte Carlo needs a seed" check. Throws SchemaError (or an
/// operator validation error) with the offending key in the message.
ExperimentConfig parse_config(const nlohmann::json& doc, std::optional<std::uint64_t> seed_override = {});
/// Reads and parses a file. Throws IoError or ConfigParseError.
nlohmann::json read_config_file(const std::string& path);

/// FNV-1a over block sizes and the exact bits of A0 and the B blocks.
std::string operator_hash(const OperatorSpecd& spec);

struct OutputFile {
  std::string name;
  std::string content;
};

struct ExperimentOutcome {
  std::string name;
  ExperimentKind kind;
  bool passed = false;
  std::string reason;  ///< empty on pass
  nlohmann::json report;
  std::vector<OutputFile> csv;
};

struct RunResult {
  bool passed = true;
  std::vector<ExperimentOutcome> outcomes;
  std::vector<OutputFile> slice_csv;
  nlohmann::json summary;
};

/// Runs every experiment. Numerical errors inside an experiment mark it
/// failed; SchemaError propagates.
RunResult run_experiments(const ExperimentConfig& cfg);

/// Writes the reports selected by `format` plus summary.json into `dir`.
/// Each file appears atomically (temporary file, then rename).
void write_reports(const RunResult& result, const std::string& dir, ReportFormat format);
void write_file_atomic(const std::string& path, const std::string& content);

/// Geometry only: operator blocks, Q, s_max and bounding box per radius, slice count.
void describe(std::ostream& os, const ExperimentConfig& cfg);

/// Process exit status for an error code: 2 for invalid configs, 3 for
/// unparsable ones, 4 for I/O, 1 otherwise.
int exit_code(Errc code);

}  // namespace kpot
