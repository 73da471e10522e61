#include "adaudit/pipeline/links.hpp"

#include <unordered_set>

#include "adaudit/common/error.hpp"
#include "adaudit/common/url.hpp"

namespace adaudit::pipeline {

ResolvedLink resolve_link(const std::string& url, Fetcher& fetcher, int max_hops) {
  Url current = Url::parse(url);
  std::unordered_set<std::string> visited{current.str()};
  int hops = 0;
  while (true) {
    const std::string here = current.str();
    const HttpResponse res = fetcher.get(here);
    if (res.status < 300 || res.status >= 400 || res.location.empty()) {
      return {here, hops};
    }
    Url next = current.resolve(res.location);
    const std::string there = next.str();
    if (!visited.insert(there).second) {
      throw Error(ErrorCode::kRedirectLoop, "redirect loop at " + there);
    }
    if (++hops > max_hops) {
      throw Error(ErrorCode::kTooManyRedirects,
                  "more than " + std::to_string(max_hops) + " redirects from " + url);
    }
    current = std::move(next);
  }
}

}  // namespace adaudit::pipeline
