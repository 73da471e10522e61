#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace adaudit {

enum class ErrorCode {
  kInvalidArgument,
  kNotFound,
  kUnauthorized,
  kRefused,
  kConflict,
  kIllegalTransition,
  kValidation,
  kPrecondition,
  kRankDeficient,
  kRetryable,
  kRedirectLoop,
  kTooManyRedirects,
  kAdapterFailure,
  kInvariantViolation,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable code alongside the message. Every
/// recoverable failure surfaced by the library uses this type.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Field-level survey validation failure; `field()` is a path such as
/// `per_ad[3].interest`.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& message)
      : Error(ErrorCode::kValidation, field + ": " + message),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace adaudit
