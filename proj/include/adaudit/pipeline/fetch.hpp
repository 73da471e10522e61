#pragma once

#include <chrono>
#include <string>

namespace adaudit::pipeline {

struct HttpResponse {
  int status = 0;
  std::string location;  // Location header, empty if absent
  std::string body;
};

/// Single HTTP GET without following redirects. Implementations throw
/// Error(kRetryable) when no response was obtained.
class Fetcher {
 public:
  virtual ~Fetcher() = default;
  virtual HttpResponse get(const std::string& url) = 0;
};

/// cpp-httplib backed fetcher (http and https). Thread-safe: each call uses
/// its own connection.
class HttpFetcher final : public Fetcher {
 public:
  explicit HttpFetcher(std::chrono::milliseconds timeout = std::chrono::seconds(10));
  HttpResponse get(const std::string& url) override;

 private:
  std::chrono::milliseconds timeout_;
};

}  // namespace adaudit::pipeline
