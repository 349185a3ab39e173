#ifndef THERMOPOOL_ERROR_HPP
#define THERMOPOOL_ERROR_HPP

#include <stdexcept>
#include <string>

namespace thermopool {

enum class ErrorCode {
  FileNotFound,
  MissingColumn,
  MalformedRow,
  DuplicateRecord,
  OutOfRangeTemperature,
  InvalidWidth,
  InvertedRange,
  ZeroPopulation,
  NoRetainedHours,
  YearNotCovered,
  NonPositiveValue,
  EmptyPanel,
  DimensionMismatch,
  InvalidCholesky,
  InvalidConfig,
  AdaptationFailed,
  ZeroVariance,
  AllRatiosDegenerate,
  MismatchedObservations,
  NonStationary,
  EmptyDraws,
  WindowTooWide,
  RankDeficient,
  TooFewClusters,
  MalformedDraws,
};

const char* to_string(ErrorCode code) noexcept;

// Validation errors are problems with the inputs (exit code 1 at the CLI);
// everything else is a runtime failure (exit code 2).
bool is_validation_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace thermopool

#endif  // THERMOPOOL_ERROR_HPP
