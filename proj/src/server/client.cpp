#include "adaudit/server/client.hpp"

namespace adaudit::server {

ErrorCode parse_error_code(std::string_view text) {
  for (int c = 0; c <= static_cast<int>(ErrorCode::kInvariantViolation); ++c) {
    if (to_string(static_cast<ErrorCode>(c)) == text) return static_cast<ErrorCode>(c);
  }
  return ErrorCode::kInvalidArgument;
}

Json ApiClient::call(const std::string& method, const std::string& path, const Json& body,
                     const std::map<std::string, std::string>& query) {
  ApiRequest req;
  req.method = method;
  req.path = path;
  req.query = query;
  req.bearer = token_;
  if (!body.is_null()) req.body = body.dump();
  const ApiResponse res = transport_.send(req);
  Json j = res.content_type.rfind("application/json", 0) == 0 ? res.json() : Json::object();
  if (res.status >= 200 && res.status < 300) return j;
  const Json& err = j.contains("error") ? j.at("error") : Json::object();
  const std::string message = err.value("message", "HTTP " + std::to_string(res.status));
  const ErrorCode code = parse_error_code(err.value("code", "invalid_argument"));
  if (code == ErrorCode::kValidation && err.contains("field")) {
    const auto f = err.at("field").get<std::string>();
    // The server message is "<field>: <reason>"; keep only the reason.
    const auto reason = message.rfind(f + ": ", 0) == 0 ? message.substr(f.size() + 2) : message;
    throw ValidationError(f, reason);
  }
  throw Error(code, message);
}

std::string ApiClient::register_client(const std::string& code, const Json& instance) {
  const Json res = call("POST", "/v1/register", {{"code", code}, {"instance", instance}});
  token_ = res.at("token").get<std::string>();
  return res.at("participant_id").get<std::string>();
}

Json ApiClient::swap(int width, int height) {
  return call("GET", "/v1/swap", nullptr,
              {{"w", std::to_string(width)}, {"h", std::to_string(height)}});
}

Json ApiClient::submit_survey(const std::string& survey_id, const Json& answers) {
  return call("POST", "/v1/survey", {{"survey_id", survey_id}, {"answers", answers}});
}

std::int64_t ApiClient::redact(const std::vector<std::string>& ad_ids) {
  return call("POST", "/v1/redact", {{"ad_ids", ad_ids}}).at("redacted").get<std::int64_t>();
}

std::vector<Json> ApiClient::export_rows(std::string_view table, std::optional<std::string> phase,
                                         std::optional<std::string> participant, bool stubs) {
  std::map<std::string, std::string> q{{"table", std::string(table)},
                                       {"stubs", stubs ? "true" : "false"}};
  if (phase) q["phase"] = *phase;
  if (participant) q["participant"] = *participant;
  const Json res = call("GET", "/v1/export", nullptr, q);
  return res.at("rows").get<std::vector<Json>>();
}

}  // namespace adaudit::server
