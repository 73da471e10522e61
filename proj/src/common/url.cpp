#include "adaudit/common/url.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "adaudit/common/error.hpp"

namespace adaudit {

std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_ip_literal(std::string_view host) {
  if (!host.empty() && host.front() == '[') return true;
  int dots = 0;
  int digits = 0;
  for (char c : host) {
    if (c == '.') {
      if (digits == 0) return false;
      ++dots;
      digits = 0;
    } else if (c >= '0' && c <= '9') {
      if (++digits > 3) return false;
    } else {
      return false;
    }
  }
  return dots == 3 && digits > 0;
}

std::optional<Url> Url::try_parse(std::string_view text) {
  const auto colon = text.find("://");
  if (colon == std::string_view::npos || colon == 0) return std::nullopt;
  Url url;
  url.scheme = to_lower(text.substr(0, colon));
  for (char c : url.scheme) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '+' && c != '-' && c != '.') {
      return std::nullopt;
    }
  }
  auto rest = text.substr(colon + 3);
  const auto end = rest.find_first_of("/?#");
  auto authority = rest.substr(0, end);
  url.target = end == std::string_view::npos ? "/" : std::string(rest.substr(end));
  if (!url.target.empty() && url.target.front() != '/') url.target.insert(0, "/");

  if (const auto at = authority.rfind('@'); at != std::string_view::npos) {
    authority = authority.substr(at + 1);
  }
  std::string_view host = authority;
  if (!authority.empty() && authority.front() == '[') {
    const auto close = authority.find(']');
    if (close == std::string_view::npos) return std::nullopt;
    host = authority.substr(0, close + 1);
    authority = authority.substr(close + 1);
    if (!authority.empty() && authority.front() != ':') return std::nullopt;
  } else if (const auto pc = authority.rfind(':'); pc != std::string_view::npos) {
    host = authority.substr(0, pc);
    authority = authority.substr(pc);
  } else {
    authority = {};
  }
  if (!authority.empty()) {
    const auto digits = authority.substr(1);
    if (!digits.empty()) {
      int port = 0;
      const auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
      if (ec != std::errc{} || p != digits.data() + digits.size() || port <= 0 || port > 65535) {
        return std::nullopt;
      }
      url.port = port;
    }
  }
  if (host.empty()) return std::nullopt;
  url.host = to_lower(host);
  for (char c : url.host) {
    if (std::isspace(static_cast<unsigned char>(c))) return std::nullopt;
  }
  return url;
}

Url Url::parse(std::string_view text) {
  auto url = try_parse(text);
  if (!url) throw Error(ErrorCode::kInvalidArgument, "unparseable URL: " + std::string(text));
  return *url;
}

std::string Url::str() const {
  std::string out = scheme + "://" + host;
  if (port) out += ":" + std::to_string(*port);
  out += target;
  return out;
}

Url Url::resolve(std::string_view reference) const {
  if (auto abs = try_parse(reference)) return *abs;
  Url out = *this;
  if (reference.starts_with("//")) {
    return parse(scheme + ":" + std::string(reference));
  }
  if (reference.starts_with("/")) {
    out.target = std::string(reference);
    return out;
  }
  if (reference.starts_with("?")) {
    out.target = target.substr(0, target.find_first_of("?#")) + std::string(reference);
    return out;
  }
  auto path = target.substr(0, target.find_first_of("?#"));
  path = path.substr(0, path.rfind('/') + 1);
  out.target = path + std::string(reference);
  return out;
}

}  // namespace adaudit
