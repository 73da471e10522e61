#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "adaudit/common/error.hpp"
#include "adaudit/core/json.hpp"
#include "adaudit/server/study.hpp"

namespace adaudit::pipeline {
class BlobStore;
class Pipeline;
}  // namespace adaudit::pipeline

namespace adaudit::server {

inline constexpr std::string_view kApiVersion = "1";

struct ApiRequest {
  std::string method;  // "GET" / "POST"
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
  std::string bearer;  // token from `Authorization: Bearer ...`, may be empty
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;

  Json json() const { return Json::parse(body); }
};

/// Anything that can carry a request to the API: the router itself
/// (in-process) or an HTTP client.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual ApiResponse send(const ApiRequest& req) = 0;
};

struct ApiOptions {
  /// Canonical compiled ruleset served at /v1/ruleset; empty disables it.
  std::string ruleset_document;
  pipeline::BlobStore* blobs = nullptr;        // enables /v1/images/
  pipeline::Pipeline* pipeline = nullptr;      // enables /v1/admin/pipeline
  std::optional<std::filesystem::path> snapshot_path;  // enables /v1/admin/snapshot
};

int http_status(ErrorCode code);

/// Maps protocol requests onto a Study. Stateless apart from the Study, so
/// one router may serve any number of concurrent requests.
class ApiRouter final : public Transport {
 public:
  ApiRouter(Study& study, ApiOptions options = {});
  ApiResponse send(const ApiRequest& req) override;

 private:
  Json dispatch(const ApiRequest& req, ApiResponse& res);
  Json admin(const ApiRequest& req, const Json& body);
  ApiResponse export_dataset(const ApiRequest& req);
  ApiResponse image(const std::string& hex);
  std::string image_url_for(const AdRecord& ad) const;

  Study& study_;
  ApiOptions options_;
};

// Wire parsing, exposed for tests. Malformed entries raise ValidationError
// with a field path such as `ads[2].slot`.
std::vector<IngestAd> ingest_batch_from_json(const Json& body);
std::vector<TelemetryEvent> events_from_json(const Json& body);
Json swap_response_json(const SwapServed& served, const std::string& image_url);

}  // namespace adaudit::server
