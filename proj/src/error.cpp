#include "thermopool/error.hpp"

namespace thermopool {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::DuplicateRecord: return "DuplicateRecord";
    case ErrorCode::OutOfRangeTemperature: return "OutOfRangeTemperature";
    case ErrorCode::InvalidWidth: return "InvalidWidth";
    case ErrorCode::InvertedRange: return "InvertedRange";
    case ErrorCode::ZeroPopulation: return "ZeroPopulation";
    case ErrorCode::NoRetainedHours: return "NoRetainedHours";
    case ErrorCode::YearNotCovered: return "YearNotCovered";
    case ErrorCode::NonPositiveValue: return "NonPositiveValue";
    case ErrorCode::EmptyPanel: return "EmptyPanel";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidCholesky: return "InvalidCholesky";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::AdaptationFailed: return "AdaptationFailed";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::AllRatiosDegenerate: return "AllRatiosDegenerate";
    case ErrorCode::MismatchedObservations: return "MismatchedObservations";
    case ErrorCode::NonStationary: return "NonStationary";
    case ErrorCode::EmptyDraws: return "EmptyDraws";
    case ErrorCode::WindowTooWide: return "WindowTooWide";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::TooFewClusters: return "TooFewClusters";
    case ErrorCode::MalformedDraws: return "MalformedDraws";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::AdaptationFailed:
    case ErrorCode::ZeroVariance:
    case ErrorCode::AllRatiosDegenerate:
    case ErrorCode::RankDeficient:
      return false;
    default:
      return true;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code) {}

}  // namespace thermopool
