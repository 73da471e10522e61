#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace adaudit::filter {

inline bool is_token_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
}

/// `^` class: anything but letters, digits and `_ - . %`.
inline bool is_separator(char c) {
  if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9')) return false;
  if (c == '_' || c == '-' || c == '.' || c == '%') return false;
  return true;
}

/// Alphanumeric runs of `pattern` that must appear as complete tokens in
/// any matching URL: they cannot touch a `*`, nor an unanchored end of the
/// pattern.
std::vector<std::string_view> pattern_tokens(std::string_view pattern, bool start_anchored,
                                             bool end_anchored);

/// Tokens so frequent in URLs that they make poor index keys.
bool is_common_token(std::string_view token);

/// Distinct maximal alphanumeric runs of a lowercase URL.
std::vector<std::string_view> url_tokens(std::string_view url);

/// Wildcard match of `pattern` against `text` starting exactly at `text[0]`.
bool glob_match(std::string_view pattern, std::string_view text, bool end_anchored);

}  // namespace adaudit::filter
