#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lingoq {

/// Closed set of machine-readable error codes. The REST layer publishes
/// these verbatim as ApiError.code.
enum class ErrorCode {
  bad_request,
  unauthorized,
  forbidden,
  not_found,
  method_not_allowed,
  precondition_failed,
  invalid_policy,
  invalid_question,
  invalid_option,
  out_of_order,
  session_inactive,
  no_questions,
  version_conflict,
  duplicate_context,
  unknown_template,
  unbound_placeholder,
  parse_error,
  variant_mismatch,
  partial_batch,
  transport_error,
  timeout,
  fixture_missing,
  storage_error,
  id_mismatch,
  schema_violation,
  internal,
};

inline constexpr std::array<std::string_view, 26> kErrorCodeNames = {
    "bad_request",        "unauthorized",        "forbidden",
    "not_found",          "method_not_allowed",  "precondition_failed",
    "invalid_policy",
    "invalid_question",   "invalid_option",      "out_of_order",
    "session_inactive",   "no_questions",        "version_conflict",
    "duplicate_context",  "unknown_template",    "unbound_placeholder",
    "parse_error",        "variant_mismatch",    "partial_batch",
    "transport_error",    "timeout",             "fixture_missing",
    "storage_error",      "id_mismatch",         "schema_violation",
    "internal",
};

static_assert(kErrorCodeNames.size() == static_cast<std::size_t>(ErrorCode::internal) + 1);

constexpr std::string_view to_string(ErrorCode code) {
  return kErrorCodeNames[static_cast<std::size_t>(code)];
}

/// HTTP status used when an error crosses the REST boundary.
constexpr int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::unauthorized:
      return 401;
    case ErrorCode::forbidden:
      return 403;
    case ErrorCode::not_found:
      return 404;
    case ErrorCode::method_not_allowed:
      return 405;
    case ErrorCode::version_conflict:
    case ErrorCode::duplicate_context:
      return 409;
    case ErrorCode::transport_error:
    case ErrorCode::timeout:
    case ErrorCode::parse_error:
    case ErrorCode::variant_mismatch:
    case ErrorCode::partial_batch:
    case ErrorCode::fixture_missing:
      return 502;
    case ErrorCode::storage_error:
    case ErrorCode::internal:
      return 500;
    default:
      return 400;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, nlohmann::json detail = nullptr)
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const nlohmann::json& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  nlohmann::json detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message,
                              nlohmann::json detail = nullptr) {
  throw Error(code, message, std::move(detail));
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorCode::precondition_failed, message);
}

}  // namespace lingoq
