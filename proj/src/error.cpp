#include "mflsi/error.hpp"

namespace mflsi {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonNormalizable: return "NonNormalizable";
    case ErrorCode::GridFailure: return "GridFailure";
    case ErrorCode::GridTooNarrow: return "GridTooNarrow";
    case ErrorCode::NotGHS: return "NotGHS";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::MultipleMinima: return "MultipleMinima";
    case ErrorCode::NonPositiveCurvature: return "NonPositiveCurvature";
    case ErrorCode::TruncationTooCoarse: return "TruncationTooCoarse";
    case ErrorCode::FixedPointDiverged: return "FixedPointDiverged";
    case ErrorCode::Unsupported: return "Unsupported";
    case ErrorCode::TooManyModes: return "TooManyModes";
    case ErrorCode::NoModes: return "NoModes";
    case ErrorCode::GridExplosion: return "GridExplosion";
    case ErrorCode::InfeasibleDegree: return "InfeasibleDegree";
    case ErrorCode::RestartBudgetExceeded: return "RestartBudgetExceeded";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NumericalBlowup: return "NumericalBlowup";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::SingleWellOnly: return "SingleWellOnly";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

ErrorClass classify(ErrorCode code) {
  switch (code) {
    case ErrorCode::GridFailure:
    case ErrorCode::FixedPointDiverged:
    case ErrorCode::NoConvergence:
    case ErrorCode::NumericalBlowup:
    case ErrorCode::RestartBudgetExceeded:
    case ErrorCode::TruncationTooCoarse:
      return ErrorClass::Numerical;
    case ErrorCode::Io:
      return ErrorClass::Io;
    default:
      return ErrorClass::Precondition;
  }
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace mflsi
