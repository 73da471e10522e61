#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adaudit/server/api.hpp"

namespace adaudit::server {

ErrorCode parse_error_code(std::string_view text);

/// Typed calls over any Transport. Non-2xx responses are rethrown as the
/// Error (or ValidationError) the server reported.
class ApiClient {
 public:
  explicit ApiClient(Transport& transport, std::string token = {})
      : transport_(transport), token_(std::move(token)) {}

  void set_token(std::string token) { token_ = std::move(token); }
  const std::string& token() const { return token_; }

  Json call(const std::string& method, const std::string& path, const Json& body = nullptr,
            const std::map<std::string, std::string>& query = {});

  /// Registers and keeps the returned token; returns the participant id.
  std::string register_client(const std::string& code, const Json& instance = Json::object());
  Json ingest_ads(const Json& ads) { return call("POST", "/v1/ads", {{"ads", ads}}); }
  Json send_events(const Json& events) { return call("POST", "/v1/events", {{"events", events}}); }
  Json swap(int width, int height);
  Json survey() { return call("GET", "/v1/survey").at("survey"); }
  Json submit_survey(const std::string& survey_id, const Json& answers);
  Json my_ads() { return call("GET", "/v1/ads").at("ads"); }
  std::int64_t redact(const std::vector<std::string>& ad_ids);
  Json ruleset() { return call("GET", "/v1/ruleset").at("ruleset"); }

  std::vector<Json> export_rows(std::string_view table, std::optional<std::string> phase = {},
                                std::optional<std::string> participant = {}, bool stubs = false);
  Json admin(const std::string& method, const std::string& route, const Json& body = nullptr) {
    return call(method, "/v1/admin/" + route, body);
  }

 private:
  Transport& transport_;
  std::string token_;
};

}  // namespace adaudit::server
