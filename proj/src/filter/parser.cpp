#include <algorithm>
#include <cctype>
#include <tuple>

#include "adaudit/common/digest.hpp"
#include "adaudit/common/error.hpp"
#include "adaudit/common/url.hpp"
#include "adaudit/filter/rules.hpp"
#include "token.hpp"

namespace adaudit::filter {

std::string_view to_string(ResourceType t) {
  switch (t) {
    case ResourceType::kImage: return "image";
    case ResourceType::kScript: return "script";
    case ResourceType::kOther: return "other";
  }
  return "other";
}

ResourceType parse_resource_type(std::string_view text) {
  if (text == "image") return ResourceType::kImage;
  if (text == "script") return ResourceType::kScript;
  if (text == "other") return ResourceType::kOther;
  throw Error(ErrorCode::kInvalidArgument, "unknown resource type: " + std::string(text));
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kBlocked: return "blocked_by";
    case Verdict::kExempted: return "exempted_by";
    case Verdict::kNoMatch: return "no_match";
  }
  return "no_match";
}

struct RuleSetBuilder {
  RuleSet rs;
  std::vector<ParseWarning> warnings;
  std::uint32_t next_id = 0;

  void warn(int line, std::string_view text, std::string message) {
    warnings.push_back({line, std::string(text), std::move(message)});
  }

  // Key each rule by its least-populated token so no bucket grows with the
  // list; common tokens only when nothing else qualifies, then longer wins.
  static void index(RuleSet::TokenIndex& idx, const FilterRule& rule, std::uint32_t pos) {
    const auto tokens =
        pattern_tokens(rule.pattern, rule.anchor != Anchor::kNone, rule.end_anchor);
    std::string_view best;
    std::tuple<bool, std::size_t, std::size_t> best_key;
    for (const auto tok : tokens) {
      const auto it = idx.by_token.find(std::string(tok));
      const std::size_t load = it == idx.by_token.end() ? 0 : it->second.size();
      const std::tuple<bool, std::size_t, std::size_t> key{is_common_token(tok), load,
                                                           ~tok.size()};
      if (best.empty() || key < best_key) {
        best = tok;
        best_key = key;
      }
    }
    if (best.empty()) {
      idx.untokenized.push_back(pos);
    } else {
      idx.by_token[std::string(best)].push_back(pos);
    }
  }

  void add_network(FilterRule rule) {
    rule.id = next_id++;
    if (rule.kind == RuleKind::kNetworkException) {
      index(rs.exception_index_, rule, static_cast<std::uint32_t>(rs.exceptions_.size()));
      rs.exceptions_.push_back(std::move(rule));
    } else {
      index(rs.network_index_, rule, static_cast<std::uint32_t>(rs.network_.size()));
      rs.network_.push_back(std::move(rule));
    }
  }

  bool parse_cosmetic(int line_no, std::string_view line, std::size_t marker) {
    FilterRule rule;
    rule.kind = RuleKind::kCosmetic;
    rule.line = line_no;
    rule.text = std::string(line);
    rule.selector = std::string(line.substr(marker + 2));
    while (!rule.selector.empty() && std::isspace(static_cast<unsigned char>(rule.selector.back()))) {
      rule.selector.pop_back();
    }
    if (rule.selector.empty()) {
      warn(line_no, line, "cosmetic rule without selector");
      return false;
    }
    const auto domains = line.substr(0, marker);
    std::size_t pos = 0;
    while (pos < domains.size()) {
      auto comma = domains.find(',', pos);
      if (comma == std::string_view::npos) comma = domains.size();
      auto d = to_lower(domains.substr(pos, comma - pos));
      pos = comma + 1;
      if (d.empty()) continue;
      if (d.front() == '~') {
        d.erase(0, 1);
        if (d.empty()) {
          warn(line_no, line, "empty excluded domain");
          return false;
        }
        rule.exclude_domains.push_back(std::move(d));
      } else {
        rule.include_domains.push_back(std::move(d));
      }
    }
    rule.id = next_id++;
    rs.cosmetic_.push_back(std::move(rule));
    return true;
  }

  static bool looks_like_options(std::string_view s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](unsigned char c) {
      return std::isalnum(c) || c == '~' || c == ',' || c == '-' || c == '_' || c == '=' ||
             c == '.' || c == '|';
    });
  }

  void parse_network(int line_no, std::string_view line) {
    FilterRule rule;
    rule.line = line_no;
    rule.text = std::string(line);
    std::string_view body = line;
    if (body.starts_with("@@")) {
      rule.kind = RuleKind::kNetworkException;
      body.remove_prefix(2);
    }
    if (const auto dollar = body.rfind('$');
        dollar != std::string_view::npos && looks_like_options(body.substr(dollar + 1))) {
      const auto options = body.substr(dollar + 1);
      body = body.substr(0, dollar);
      std::size_t pos = 0;
      while (pos <= options.size()) {
        auto comma = options.find(',', pos);
        if (comma == std::string_view::npos) comma = options.size();
        auto opt = to_lower(options.substr(pos, comma - pos));
        pos = comma + 1;
        const bool negated = !opt.empty() && opt.front() == '~';
        if (negated) opt.erase(0, 1);
        if (opt == "third-party") {
          rule.third_party = !negated;
        } else if (opt == "image" || opt == "script") {
          const auto t = opt == "image" ? ResourceType::kImage : ResourceType::kScript;
          (negated ? rule.exclude_types : rule.include_types).insert(t);
        } else {
          warn(line_no, line, "unsupported option '" + opt + "'");
          return;
        }
      }
    }
    if (body.size() > 2 && body.front() == '/' && body.back() == '/') {
      warn(line_no, line, "regular-expression rules are not supported");
      return;
    }
    if (body.starts_with("||")) {
      rule.anchor = Anchor::kHost;
      body.remove_prefix(2);
    } else if (body.starts_with("|")) {
      rule.anchor = Anchor::kStart;
      body.remove_prefix(1);
    }
    if (body.ends_with("|")) {
      rule.end_anchor = true;
      body.remove_suffix(1);
    }
    if (body.empty()) {
      warn(line_no, line, "empty pattern");
      return;
    }
    if (body.find('|') != std::string_view::npos) {
      warn(line_no, line, "anchor inside pattern");
      return;
    }
    rule.pattern = to_lower(body);
    add_network(std::move(rule));
  }

  void set_source(std::int64_t version, std::string_view text) {
    rs.version_ = version;
    rs.digest_ = sha256_hex(text);
  }

  void parse_line(int line_no, std::string_view raw) {
    std::string_view line = raw;
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) {
      line.remove_prefix(1);
    }
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) {
      line.remove_suffix(1);
    }
    if (line.empty() || line.front() == '!' || line.front() == '[') return;

    for (std::string_view unsupported : {"#@#", "#?#", "#$#", "#@$#", "#@?#"}) {
      if (line.find(unsupported) != std::string_view::npos) {
        warn(line_no, line, "unsupported cosmetic variant '" + std::string(unsupported) + "'");
        return;
      }
    }
    if (const auto marker = line.find("##"); marker != std::string_view::npos) {
      parse_cosmetic(line_no, line, marker);
      return;
    }
    parse_network(line_no, line);
  }
};

ParseResult parse_filter_list(std::string_view text, std::int64_t version) {
  RuleSetBuilder b;
  b.set_source(version, text);
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    b.parse_line(++line_no, text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return {std::move(b.rs), std::move(b.warnings)};
}

}  // namespace adaudit::filter
