#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <thread>

#include "adaudit/server/api.hpp"

namespace httplib {
class Server;
}

namespace adaudit::server {

/// Serves an ApiRouter over HTTP on a background thread.
class HttpServer {
 public:
  explicit HttpServer(ApiRouter& router);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Bind (port 0 picks a free port) and start serving. Returns the port.
  int start(const std::string& host, int port);
  void stop();
  /// Block until stop() is called from another thread or a signal handler.
  void wait();

 private:
  ApiRouter& router_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

/// Transport that sends requests to a running server.
class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(std::string base_url,
                         std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~HttpTransport() override;
  ApiResponse send(const ApiRequest& req) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace adaudit::server
