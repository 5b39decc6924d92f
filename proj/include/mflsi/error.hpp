#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mflsi {

enum class ErrorCode {
  InvalidArgument,
  NonNormalizable,
  GridFailure,
  GridTooNarrow,
  NotGHS,
  OutOfRange,
  MultipleMinima,
  NonPositiveCurvature,
  TruncationTooCoarse,
  FixedPointDiverged,
  Unsupported,
  TooManyModes,
  NoModes,
  GridExplosion,
  InfeasibleDegree,
  RestartBudgetExceeded,
  NoConvergence,
  NumericalBlowup,
  InsufficientSamples,
  SingleWellOnly,
  Io,
};

std::string_view to_string(ErrorCode code);

// Broad failure classes; the CLI maps them onto exit codes 2, 3 and 4.
enum class ErrorClass { Precondition, Numerical, Io };

ErrorClass classify(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }
  ErrorClass error_class() const noexcept { return classify(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorCode::InvalidArgument, what);
}

}  // namespace mflsi
