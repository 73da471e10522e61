#include <algorithm>

#include "adaudit/common/error.hpp"
#include "adaudit/common/public_suffix.hpp"
#include "adaudit/common/url.hpp"
#include "adaudit/filter/rules.hpp"
#include "token.hpp"

namespace adaudit::filter {

bool is_common_token(std::string_view token) {
  static constexpr std::string_view kCommon[] = {"http", "https", "www", "com", "net", "org"};
  return std::find(std::begin(kCommon), std::end(kCommon), token) != std::end(kCommon);
}

std::vector<std::string_view> pattern_tokens(std::string_view pattern, bool start_anchored,
                                             bool end_anchored) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < pattern.size()) {
    if (!is_token_char(pattern[i])) {
      ++i;
      continue;
    }
    const std::size_t b = i;
    while (i < pattern.size() && is_token_char(pattern[i])) ++i;
    const std::size_t e = i;
    const bool left_ok = b == 0 ? start_anchored : pattern[b - 1] != '*';
    const bool right_ok = e == pattern.size() ? end_anchored : pattern[e] != '*';
    if (left_ok && right_ok) out.push_back(pattern.substr(b, e - b));
  }
  return out;
}

std::vector<std::string_view> url_tokens(std::string_view url) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < url.size()) {
    if (!is_token_char(url[i])) {
      ++i;
      continue;
    }
    const std::size_t b = i;
    while (i < url.size() && is_token_char(url[i])) ++i;
    const auto tok = url.substr(b, i - b);
    if (std::find(out.begin(), out.end(), tok) == out.end()) out.push_back(tok);
  }
  return out;
}

bool glob_match(std::string_view p, std::string_view s, bool end_anchored) {
  std::size_t pi = 0, si = 0;
  std::size_t star = std::string_view::npos, mark = 0;
  while (true) {
    if (pi < p.size() && p[pi] == '*') {
      star = pi++;
      mark = si;
      continue;
    }
    if (pi == p.size()) {
      if (!end_anchored || si == s.size()) return true;
    } else if (si < s.size() &&
               (p[pi] == '^' ? is_separator(s[si]) : p[pi] == s[si])) {
      ++pi;
      ++si;
      continue;
    } else if (si == s.size() && p[pi] == '^') {
      ++pi;  // end of address satisfies the separator
      continue;
    }
    if (star == std::string_view::npos || mark >= s.size()) return false;
    pi = star + 1;
    si = ++mark;
  }
}

namespace {

/// Offsets of the hostname inside a lowercase absolute URL.
struct HostSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

HostSpan host_span(std::string_view url) {
  const auto scheme_end = url.find("://");
  std::size_t begin = scheme_end + 3;
  auto end = url.find_first_of("/?#", begin);
  if (end == std::string_view::npos) end = url.size();
  if (const auto at = url.substr(begin, end - begin).rfind('@'); at != std::string_view::npos) {
    begin += at + 1;
  }
  auto host_end = begin;
  if (host_end < end && url[host_end] == '[') {
    host_end = url.find(']', host_end);
    host_end = host_end == std::string_view::npos ? end : host_end + 1;
  } else {
    while (host_end < end && url[host_end] != ':') ++host_end;
  }
  return {begin, host_end};
}

std::string site_of(const std::string& host) {
  try {
    return SuffixRules::embedded().registrable_domain(host);
  } catch (const Error&) {
    return host;
  }
}

bool pattern_matches(const FilterRule& rule, std::string_view url, const HostSpan& host) {
  switch (rule.anchor) {
    case Anchor::kStart:
      return glob_match(rule.pattern, url, rule.end_anchor);
    case Anchor::kHost: {
      if (glob_match(rule.pattern, url.substr(host.begin), rule.end_anchor)) return true;
      for (auto i = host.begin; i < host.end; ++i) {
        if (url[i] == '.' && glob_match(rule.pattern, url.substr(i + 1), rule.end_anchor)) {
          return true;
        }
      }
      return false;
    }
    case Anchor::kNone:
      for (std::size_t i = 0; i <= url.size(); ++i) {
        if (glob_match(rule.pattern, url.substr(i), rule.end_anchor)) return true;
        // A leading wildcard already scans every offset.
        if (!rule.pattern.empty() && rule.pattern.front() == '*') break;
      }
      return false;
  }
  return false;
}

struct Request {
  std::string url;  // lowercase
  HostSpan host;
  std::vector<std::string_view> tokens;
  ResourceType type;
  bool third_party;
};

bool options_allow(const FilterRule& rule, const Request& req) {
  if (rule.third_party && *rule.third_party != req.third_party) return false;
  if (!rule.include_types.empty() && !rule.include_types.contains(req.type)) return false;
  if (rule.exclude_types.contains(req.type)) return false;
  return true;
}

}  // namespace

class Matcher {
 public:
  /// Index (within `rules`) of the first rule in list order matching `req`.
  static std::optional<std::uint32_t> first_match(const std::vector<FilterRule>& rules,
                                                  const RuleSet::TokenIndex& index,
                                                  const Request& req) {
    std::vector<std::uint32_t> candidates(index.untokenized);
    for (const auto tok : req.tokens) {
      if (auto it = index.by_token.find(std::string(tok)); it != index.by_token.end()) {
        candidates.insert(candidates.end(), it->second.begin(), it->second.end());
      }
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    for (auto pos : candidates) {
      const auto& rule = rules[pos];
      if (options_allow(rule, req) && pattern_matches(rule, req.url, req.host)) return pos;
    }
    return std::nullopt;
  }

  static Decision decide(const RuleSet& rs, const Request& req) {
    Decision d;
    const auto block = first_match(rs.network_, rs.network_index_, req);
    if (!block) return d;
    if (const auto ex = first_match(rs.exceptions_, rs.exception_index_, req)) {
      d.verdict = Verdict::kExempted;
      d.rule_id = rs.exceptions_[*ex].id;
      d.rule_text = rs.exceptions_[*ex].text;
      return d;
    }
    d.verdict = Verdict::kBlocked;
    d.rule_id = rs.network_[*block].id;
    d.rule_text = rs.network_[*block].text;
    return d;
  }
};

Decision match_network(const RuleSet& rules, std::string_view request_url,
                       std::string_view page_url, ResourceType type) {
  const auto request = Url::parse(request_url);
  const auto page = Url::parse(page_url);
  Request req;
  req.url = to_lower(request_url);
  req.host = host_span(req.url);
  req.tokens = url_tokens(req.url);
  req.type = type;
  req.third_party = site_of(request.host) != site_of(page.host);
  return Matcher::decide(rules, req);
}

namespace {

bool domain_covers(std::string_view domain, std::string_view host) {
  if (host == domain) return true;
  return host.size() > domain.size() && host.ends_with(domain) &&
         host[host.size() - domain.size() - 1] == '.';
}

}  // namespace

std::vector<std::string> cosmetic_selectors_for(const RuleSet& rules, std::string_view hostname) {
  std::vector<std::string> out;
  for (const auto& rule : rules.cosmetic_rules()) {
    const bool included =
        rule.include_domains.empty() ||
        std::any_of(rule.include_domains.begin(), rule.include_domains.end(),
                    [&](const auto& d) { return domain_covers(d, hostname); });
    const bool excluded =
        std::any_of(rule.exclude_domains.begin(), rule.exclude_domains.end(),
                    [&](const auto& d) { return domain_covers(d, hostname); });
    if (included && !excluded &&
        std::find(out.begin(), out.end(), rule.selector) == out.end()) {
      out.push_back(rule.selector);
    }
  }
  return out;
}

}  // namespace adaudit::filter
