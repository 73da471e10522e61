#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace adaudit::filter {

enum class RuleKind { kNetwork, kNetworkException, kCosmetic };

/// Request categories understood by the type options.
enum class ResourceType { kImage, kScript, kOther };

std::string_view to_string(ResourceType t);
ResourceType parse_resource_type(std::string_view text);

enum class Anchor { kNone, kHost, kStart };

/// One accepted filter. Network fields are empty for cosmetic rules and
/// vice versa.
struct FilterRule {
  std::uint32_t id = 0;  // position among accepted rules, in input order
  int line = 0;          // 1-based source line
  RuleKind kind = RuleKind::kNetwork;
  std::string text;      // the filter as written, trimmed

  // network
  std::string pattern;  // lowercase, anchors stripped; may contain * and ^
  Anchor anchor = Anchor::kNone;
  bool end_anchor = false;
  std::optional<bool> third_party;  // true: third-party only, false: first-party only
  std::set<ResourceType> include_types;
  std::set<ResourceType> exclude_types;

  // cosmetic
  std::vector<std::string> include_domains;
  std::vector<std::string> exclude_domains;
  std::string selector;
};

struct ParseWarning {
  int line = 0;
  std::string text;
  std::string message;
};

/// Compiled, immutable rule set. Safe for concurrent queries.
class RuleSet {
 public:
  RuleSet() = default;

  std::int64_t version() const { return version_; }
  const std::string& source_digest() const { return digest_; }
  const std::vector<FilterRule>& network_rules() const { return network_; }
  const std::vector<FilterRule>& exception_rules() const { return exceptions_; }
  const std::vector<FilterRule>& cosmetic_rules() const { return cosmetic_; }
  std::size_t size() const { return network_.size() + exceptions_.size() + cosmetic_.size(); }

 private:
  friend struct RuleSetBuilder;
  friend class Matcher;
  friend RuleSet load_client_ruleset(std::string_view document);

  struct TokenIndex {
    std::unordered_map<std::string, std::vector<std::uint32_t>> by_token;
    std::vector<std::uint32_t> untokenized;
  };

  std::int64_t version_ = 0;
  std::string digest_;
  std::vector<FilterRule> network_;
  std::vector<FilterRule> exceptions_;
  std::vector<FilterRule> cosmetic_;
  TokenIndex network_index_;
  TokenIndex exception_index_;
};

struct ParseResult {
  RuleSet rules;
  std::vector<ParseWarning> warnings;
};

/// Parse an EasyList-style list (grammar in docs/filter-grammar.md).
/// Malformed or unsupported lines become warnings; nothing is fatal.
ParseResult parse_filter_list(std::string_view text, std::int64_t version = 1);

enum class Verdict { kBlocked, kExempted, kNoMatch };

std::string_view to_string(Verdict v);

struct Decision {
  Verdict verdict = Verdict::kNoMatch;
  /// Winning rule: the blocking rule, or the exception that overrode it.
  std::optional<std::uint32_t> rule_id;
  std::string rule_text;
};

/// Decide a request. A block is reported only when no exception matches.
/// Throws Error(kInvalidArgument) for unparseable URLs.
Decision match_network(const RuleSet& rules, std::string_view request_url,
                       std::string_view page_url, ResourceType type);

/// Canonical client document: `{version, digest, network, exceptions,
/// cosmetic}` in that order, compact JSON, byte-identical for equal inputs.
std::string compile_ruleset(const RuleSet& rules);

/// Rebuild a rule set from a client document by re-parsing its embedded
/// filters. The version and digest are carried over.
RuleSet load_client_ruleset(std::string_view document);

/// Selectors applicable on `hostname` (lowercase), in rule order, without
/// duplicates.
std::vector<std::string> cosmetic_selectors_for(const RuleSet& rules, std::string_view hostname);

}  // namespace adaudit::filter
