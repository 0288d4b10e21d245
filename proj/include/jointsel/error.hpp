#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace jointsel {

enum class ErrorCode {
  // embedding interchange
  MagicMismatch,
  VersionUnsupported,
  HeaderMalformed,
  SizeMismatch,
  NonFiniteValue,
  DuplicateId,
  IoFailure,
  MalformedLine,
  KindMismatch,
  // geometry
  ZeroNormVector,
  DimensionTooLarge,
  DimensionMismatch,
  DegenerateRow,
  // clustering
  KTooLarge,
  IndexOutOfRange,
  NoMixedCluster,
  // selection
  EmptyCluster,
  SingleCluster,
  IneligibleCluster,
  NoEligibleCluster,
  NoUnlabeledInstance,
  ProviderFailure,
  UnknownClass,
  InvalidConfig,
  // evaluation
  MissingClassToken,
  UnknownGoldLabel,
  // synthetic / pipeline
  InfeasibleSpec,
  MissingOracleLabel,
  // interactive session
  NotPending,
  PendingExists,
  BudgetExhausted,
  SessionNotReady,
  // misc
  Usage,
  InvariantViolation,
};

std::string_view error_code_name(ErrorCode code) noexcept;

/// Exception carrying a machine-readable code. Every failure raised by the
/// library is an Error; the message already includes the code name.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + detail), code_(code), detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

/// 1 usage error, 2 data error, 3 internal invariant violation.
int exit_code_for(ErrorCode code) noexcept;

}  // namespace jointsel
