#pragma once

#include <string>
#include <string_view>
#include <unordered_set>

namespace adaudit {

/// Public-suffix rules in the publicsuffix.org text format: one rule per
/// line, `//` comments, `*.` wildcard labels, `!` exception rules.
///
/// Unlike the upstream algorithm there is no implicit `*` rule for
/// single-label hosts: a host that matches no rule and has one label
/// (`localhost`, intranet names) is its own registrable domain.
class SuffixRules {
 public:
  static SuffixRules parse(std::string_view text);
  /// Pinned snapshot compiled into the library (see docs/suffix-rules.md).
  static const SuffixRules& embedded();
  static std::string_view embedded_text();

  /// eTLD+1 of a lowercase hostname. IP literals are returned verbatim.
  /// Throws Error(kInvalidArgument) for a host that is itself a public suffix.
  std::string registrable_domain(std::string_view host) const;
  /// Length in labels of the public suffix of `host`; 0 when no rule applies.
  std::size_t suffix_labels(std::string_view host) const;

  std::size_t size() const { return rules_.size() + wildcards_.size() + exceptions_.size(); }

 private:
  std::unordered_set<std::string> rules_;
  std::unordered_set<std::string> wildcards_;   // stored without the "*." prefix
  std::unordered_set<std::string> exceptions_;  // stored without the "!" prefix
};

}  // namespace adaudit
