#include "adaudit/pipeline/fetch.hpp"

#include <httplib.h>

#include "adaudit/common/error.hpp"
#include "adaudit/common/url.hpp"

namespace adaudit::pipeline {

HttpFetcher::HttpFetcher(std::chrono::milliseconds timeout) : timeout_(timeout) {}

HttpResponse HttpFetcher::get(const std::string& url) {
  const Url u = Url::parse(url);
  if (u.scheme != "http" && u.scheme != "https") {
    throw Error(ErrorCode::kInvalidArgument, "unsupported scheme: " + u.scheme);
  }
  std::string origin = u.scheme + "://" + u.host;
  if (u.port) origin += ":" + std::to_string(*u.port);

  httplib::Client client(origin);
  client.set_follow_location(false);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);

  auto res = client.Get(u.target);
  if (!res) {
    throw Error(ErrorCode::kRetryable,
                "fetch " + url + ": " + httplib::to_string(res.error()));
  }
  HttpResponse out;
  out.status = res->status;
  out.location = res->get_header_value("Location");
  out.body = std::move(res->body);
  return out;
}

}  // namespace adaudit::pipeline
