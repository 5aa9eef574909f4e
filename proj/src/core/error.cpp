#include "sflga/error.hpp"

namespace sflga {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::NumericOverflow: return "numeric-overflow";
    case ErrorCode::ConstraintViolation: return "constraint-violation";
    case ErrorCode::InfeasibleLatency: return "infeasible-latency";
    case ErrorCode::InfeasibleProblem: return "infeasible-problem";
    case ErrorCode::Parse: return "parse-error";
    case ErrorCode::Validation: return "validation-error";
    case ErrorCode::Io: return "io-error";
    case ErrorCode::Internal: return "internal-error";
  }
  return "unknown";
}

}  // namespace sflga
