#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace adaudit {

/// Minimal absolute-URL split: `scheme://[userinfo@]host[:port][/path?query#frag]`.
/// Scheme and host are lowercased; the remainder is kept verbatim.
struct Url {
  std::string scheme;
  std::string host;
  std::optional<int> port;
  std::string target;  // path + query + fragment, at least "/"

  /// Throws Error(kInvalidArgument) when `text` is not an absolute URL.
  static Url parse(std::string_view text);
  static std::optional<Url> try_parse(std::string_view text);

  std::string str() const;
  /// Resolve a redirect `Location` value against this URL.
  Url resolve(std::string_view reference) const;
};

std::string to_lower(std::string_view text);
bool is_ip_literal(std::string_view host);

}  // namespace adaudit
