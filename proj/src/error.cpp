#include "jointsel/error.hpp"

namespace jointsel {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MagicMismatch: return "MagicMismatch";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::HeaderMalformed: return "HeaderMalformed";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::ZeroNormVector: return "ZeroNormVector";
    case ErrorCode::DimensionTooLarge: return "DimensionTooLarge";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateRow: return "DegenerateRow";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::NoMixedCluster: return "NoMixedCluster";
    case ErrorCode::EmptyCluster: return "EmptyCluster";
    case ErrorCode::SingleCluster: return "SingleCluster";
    case ErrorCode::IneligibleCluster: return "IneligibleCluster";
    case ErrorCode::NoEligibleCluster: return "NoEligibleCluster";
    case ErrorCode::NoUnlabeledInstance: return "NoUnlabeledInstance";
    case ErrorCode::ProviderFailure: return "ProviderFailure";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::MissingClassToken: return "MissingClassToken";
    case ErrorCode::UnknownGoldLabel: return "UnknownGoldLabel";
    case ErrorCode::InfeasibleSpec: return "InfeasibleSpec";
    case ErrorCode::MissingOracleLabel: return "MissingOracleLabel";
    case ErrorCode::NotPending: return "NotPending";
    case ErrorCode::PendingExists: return "PendingExists";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::SessionNotReady: return "SessionNotReady";
    case ErrorCode::Usage: return "Usage";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Usage:
    case ErrorCode::InvalidConfig:
      return 1;
    case ErrorCode::InvariantViolation:
      return 3;
    default:
      return 2;
  }
}

}  // namespace jointsel
