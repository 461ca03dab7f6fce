#pragma once

#include <stdexcept>
#include <string>

namespace kpot {

enum class Errc {
  DimensionMismatch,
  NonSymmetricA0,
  NotPositiveDefiniteA0,
  RankDeficientBlock,
  BlockSizeMonotonicityViolated,
  NonPositiveLambda,
  SingularAtZero,
  TimeZero,
  RootNotBracketed,
  SliceOutOfRange,
  ToleranceNotMet,
  TestPointInsideDomain,
  PointNotInterior,
  ConfigParseError,
  SchemaError,
  ExperimentFailure,
  IoError,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NonSymmetricA0: return "NonSymmetricA0";
    case Errc::NotPositiveDefiniteA0: return "NotPositiveDefiniteA0";
    case Errc::RankDeficientBlock: return "RankDeficientBlock";
    case Errc::BlockSizeMonotonicityViolated: return "BlockSizeMonotonicityViolated";
    case Errc::NonPositiveLambda: return "NonPositiveLambda";
    case Errc::SingularAtZero: return "SingularAtZero";
    case Errc::TimeZero: return "TimeZero";
    case Errc::RootNotBracketed: return "RootNotBracketed";
    case Errc::SliceOutOfRange: return "SliceOutOfRange";
    case Errc::ToleranceNotMet: return "ToleranceNotMet";
    case Errc::TestPointInsideDomain: return "TestPointInsideDomain";
    case Errc::PointNotInterior: return "PointNotInterior";
    case Errc::ConfigParseError: return "ConfigParseError";
    case Errc::SchemaError: return "SchemaError";
    case Errc::ExperimentFailure: return "ExperimentFailure";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

/// Exception carrying a machine-checkable error code. `detail()` holds an
/// integer payload where one is meaningful (the offending block index for
/// RankDeficientBlock), otherwise -1.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, int detail = -1)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(detail) {}

  Errc code() const noexcept { return code_; }
  int detail() const noexcept { return detail_; }

 private:
  Errc code_;
  int detail_;
};

}  // namespace kpot
