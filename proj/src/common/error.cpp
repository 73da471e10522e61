#include "adaudit/common/error.hpp"

namespace adaudit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kUnauthorized: return "unauthorized";
    case ErrorCode::kRefused: return "refused";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kIllegalTransition: return "illegal_transition";
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kPrecondition: return "precondition";
    case ErrorCode::kRankDeficient: return "rank_deficient";
    case ErrorCode::kRetryable: return "retryable";
    case ErrorCode::kRedirectLoop: return "redirect_loop";
    case ErrorCode::kTooManyRedirects: return "too_many_redirects";
    case ErrorCode::kAdapterFailure: return "adapter_failure";
    case ErrorCode::kInvariantViolation: return "invariant_violation";
  }
  return "unknown";
}

}  // namespace adaudit
