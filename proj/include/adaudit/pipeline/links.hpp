#pragma once

#include <string>

#include "adaudit/pipeline/fetch.hpp"

namespace adaudit::pipeline {

struct ResolvedLink {
  std::string final_url;
  int hops = 0;
};

/// Follow 3xx responses (relative Location resolved against the current
/// URL). A 3xx without Location ends the chain. Scripts and meta refresh are
/// not interpreted.
/// Errors: kRedirectLoop on revisiting a URL, kTooManyRedirects past
/// `max_hops`, kRetryable on network failure, kInvalidArgument for a
/// non-absolute URL.
ResolvedLink resolve_link(const std::string& url, Fetcher& fetcher, int max_hops = 10);

}  // namespace adaudit::pipeline
