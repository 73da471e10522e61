#include "adaudit/server/http.hpp"

#include <httplib.h>

#include <mutex>

#include "adaudit/common/error.hpp"

namespace adaudit::server {
namespace {

std::string bearer_of(const httplib::Request& req) {
  const auto h = req.get_header_value("Authorization");
  constexpr std::string_view kPrefix = "Bearer ";
  return h.rfind(kPrefix, 0) == 0 ? h.substr(kPrefix.size()) : std::string();
}

}  // namespace

HttpServer::HttpServer(ApiRouter& router)
    : router_(router), server_(std::make_unique<httplib::Server>()) {
  auto handle = [this](const httplib::Request& req, httplib::Response& res) {
    ApiRequest r;
    r.method = req.method;
    r.path = req.path;
    for (const auto& [k, v] : req.params) r.query[k] = v;
    r.body = req.body;
    r.bearer = bearer_of(req);
    const ApiResponse out = router_.send(r);
    res.status = out.status;
    for (const auto& [k, v] : out.headers) res.set_header(k, v);
    res.set_content(out.body, out.content_type);
  };
  server_->Get(R"(/v1/.*)", handle);
  server_->Post(R"(/v1/.*)", handle);
  server_->set_payload_max_length(64 << 20);
  server_->set_keep_alive_timeout(1);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host)
                              : (server_->bind_to_port(host, port) ? port : -1);
  if (bound <= 0) {
    throw Error(ErrorCode::kRetryable, "cannot bind " + host + ":" + std::to_string(port));
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void HttpServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

void HttpServer::wait() {
  if (thread_.joinable()) thread_.join();
}

struct HttpTransport::Impl {
  std::mutex mu;
  httplib::Client client;
  explicit Impl(const std::string& base) : client(base) {}
};

HttpTransport::HttpTransport(std::string base_url, std::chrono::milliseconds timeout)
    : impl_(std::make_unique<Impl>(base_url)) {
  impl_->client.set_connection_timeout(timeout);
  impl_->client.set_read_timeout(timeout);
  impl_->client.set_write_timeout(timeout);
  impl_->client.set_keep_alive(true);
}

HttpTransport::~HttpTransport() = default;

ApiResponse HttpTransport::send(const ApiRequest& req) {
  httplib::Headers headers;
  if (!req.bearer.empty()) headers.emplace("Authorization", "Bearer " + req.bearer);
  std::string target = req.path;
  if (!req.query.empty()) {
    httplib::Params params(req.query.begin(), req.query.end());
    target = httplib::append_query_params(target, params);
  }
  std::lock_guard lock(impl_->mu);
  httplib::Result res = req.method == "POST"
                            ? impl_->client.Post(target, headers, req.body, "application/json")
                            : impl_->client.Get(target, headers);
  if (!res) {
    throw Error(ErrorCode::kRetryable, "request " + req.path + ": " + httplib::to_string(res.error()));
  }
  ApiResponse out;
  out.status = res->status;
  out.body = res->body;
  out.content_type = res->get_header_value("Content-Type");
  for (const auto& [k, v] : res->headers) {
    if (k.rfind("X-", 0) == 0 || k == "ETag") out.headers[k] = v;
  }
  return out;
}

}  // namespace adaudit::server
