#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <regex>
#include <sstream>

#include "adaudit/common/error.hpp"
#include "adaudit/common/public_suffix.hpp"
#include "adaudit/common/rng.hpp"
#include "adaudit/common/url.hpp"
#include "adaudit/filter/rules.hpp"
#include "synthetic_filters.hpp"

using namespace adaudit;
using namespace adaudit::filter;

namespace {

std::string decision_str(const Decision& d) {
  std::string s(to_string(d.verdict));
  if (d.verdict != Verdict::kNoMatch) s += " " + d.rule_text;
  return s;
}

std::vector<std::string> split(const std::string& s, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto at = s.find(sep, pos);
    out.push_back(s.substr(pos, at == std::string::npos ? std::string::npos : at - pos));
    if (at == std::string::npos) break;
    pos = at + sep.size();
  }
  return out;
}

}  // namespace

TEST(FilterParse, CommentAndNetworkRule) {
  const auto r = parse_filter_list("! comment\n||ads.example.com^");
  EXPECT_EQ(r.rules.network_rules().size(), 1u);
  EXPECT_TRUE(r.warnings.empty());
  const auto& rule = r.rules.network_rules()[0];
  EXPECT_EQ(rule.anchor, Anchor::kHost);
  EXPECT_EQ(rule.pattern, "ads.example.com^");
  EXPECT_EQ(rule.line, 2);
}

TEST(FilterParse, ExceptionWithImageOption) {
  const auto r = parse_filter_list("@@||cdn.example.com^$image");
  ASSERT_EQ(r.rules.exception_rules().size(), 1u);
  EXPECT_TRUE(r.rules.network_rules().empty());
  const auto& rule = r.rules.exception_rules()[0];
  EXPECT_EQ(rule.kind, RuleKind::kNetworkException);
  EXPECT_EQ(rule.include_types, std::set<ResourceType>{ResourceType::kImage});
  EXPECT_EQ(rule.pattern, "cdn.example.com^");
}

TEST(FilterParse, ScopedCosmetic) {
  const auto r = parse_filter_list("example.com##.ad-banner");
  ASSERT_EQ(r.rules.cosmetic_rules().size(), 1u);
  const auto& rule = r.rules.cosmetic_rules()[0];
  EXPECT_EQ(rule.selector, ".ad-banner");
  EXPECT_EQ(rule.include_domains, std::vector<std::string>{"example.com"});
}

TEST(FilterParse, WarningsSkipRules) {
  const auto r = parse_filter_list(
      "[Adblock Plus 2.0]\n"
      "||a.com^$popup\n"
      "/ads[0-9]+/\n"
      "example.com#@#.ad\n"
      "example.com##\n"
      "|\n"
      "a|b\n"
      "||ok.com^\n");
  EXPECT_EQ(r.rules.size(), 1u);
  ASSERT_EQ(r.warnings.size(), 6u);
  EXPECT_EQ(r.warnings[0].line, 2);
  EXPECT_NE(r.warnings[0].message.find("popup"), std::string::npos);
  EXPECT_EQ(r.rules.network_rules()[0].id, 0u);
}

TEST(FilterParse, OptionNegationAndThirdParty) {
  const auto r = parse_filter_list("||t.net^$~third-party,~script\n");
  const auto& rule = r.rules.network_rules().at(0);
  ASSERT_TRUE(rule.third_party.has_value());
  EXPECT_FALSE(*rule.third_party);
  EXPECT_EQ(rule.exclude_types, std::set<ResourceType>{ResourceType::kScript});
}

TEST(FilterParse, IdsFollowInputOrderAcrossKinds) {
  const auto r = parse_filter_list("##.a\n||b.com^\n@@||b.com/x\n||c.com^\n");
  EXPECT_EQ(r.rules.cosmetic_rules()[0].id, 0u);
  EXPECT_EQ(r.rules.network_rules()[0].id, 1u);
  EXPECT_EQ(r.rules.exception_rules()[0].id, 2u);
  EXPECT_EQ(r.rules.network_rules()[1].id, 3u);
}

TEST(FilterParse, DigestIsSha256OfText) {
  const auto r = parse_filter_list("abc");
  EXPECT_EQ(r.rules.source_digest(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(FilterMatch, SpecExamples) {
  const auto rs = parse_filter_list("||ads.example.com^").rules;
  const auto d = match_network(rs, "https://ads.example.com/b.js", "https://news.site/",
                               ResourceType::kScript);
  EXPECT_EQ(d.verdict, Verdict::kBlocked);
  EXPECT_EQ(d.rule_id, 0u);

  RuleSet empty;
  EXPECT_EQ(match_network(empty, "https://x.y/z", "https://a.b/", ResourceType::kOther).verdict,
            Verdict::kNoMatch);

  const auto both = parse_filter_list("||ads.example.com^\n@@||ads.example.com^").rules;
  const auto e = match_network(both, "https://ads.example.com/b.js", "https://news.site/",
                               ResourceType::kScript);
  EXPECT_EQ(e.verdict, Verdict::kExempted);
  EXPECT_EQ(e.rule_text, "@@||ads.example.com^");
}

TEST(FilterMatch, BadUrlThrows) {
  const auto rs = parse_filter_list("||a.com^").rules;
  EXPECT_THROW(match_network(rs, "not a url", "https://a.b/", ResourceType::kOther), Error);
  EXPECT_THROW(match_network(rs, "https://a.com/", "relative/page", ResourceType::kOther), Error);
}

TEST(FilterMatch, GoldenTable) {
  std::ifstream in(ADAUDIT_FIXTURE_DIR "/filter_golden.tsv");
  ASSERT_TRUE(in);
  std::string line;
  int cases = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto cols = split(line, "\t");
    ASSERT_EQ(cols.size(), 5u) << line;
    std::string text;
    if (!cols[0].empty()) {
      for (const auto& r : split(cols[0], " ;; ")) text += r + "\n";
    }
    const auto rs = parse_filter_list(text).rules;
    const auto d = match_network(rs, cols[1], cols[2], parse_resource_type(cols[3]));
    EXPECT_EQ(decision_str(d), cols[4]) << "rules: " << cols[0] << " request: " << cols[1];
    ++cases;
  }
  EXPECT_EQ(cases, 30);
}

// Independent reference: each rule becomes a std::regex, evaluated by a
// linear scan in list order.
namespace {

std::string rule_regex(const FilterRule& r) {
  std::string re;
  if (r.anchor == Anchor::kHost) {
    re = "^[a-z][a-z0-9+.-]*://([^/?#]*@)?([^/?#:@]*\\.)?";
  } else if (r.anchor == Anchor::kStart) {
    re = "^";
  }
  for (char c : r.pattern) {
    if (c == '*') {
      re += ".*";
    } else if (c == '^') {
      re += "([^a-z0-9_.%-]|$)";
    } else if (std::isalnum(static_cast<unsigned char>(c))) {
      re += c;
    } else {
      re += '\\';
      re += c;
    }
  }
  if (r.end_anchor) re += "$";
  return re;
}

struct Oracle {
  std::vector<std::pair<const FilterRule*, std::regex>> blocks, exceptions;

  explicit Oracle(const RuleSet& rs) {
    for (const auto& r : rs.network_rules()) blocks.emplace_back(&r, std::regex(rule_regex(r)));
    for (const auto& r : rs.exception_rules()) {
      exceptions.emplace_back(&r, std::regex(rule_regex(r)));
    }
  }

  static const FilterRule* first(const std::vector<std::pair<const FilterRule*, std::regex>>& rules,
                                 const std::string& url, ResourceType type, bool third) {
    for (const auto& [rule, re] : rules) {
      if (rule->third_party && *rule->third_party != third) continue;
      if (!rule->include_types.empty() && !rule->include_types.contains(type)) continue;
      if (rule->exclude_types.contains(type)) continue;
      if (std::regex_search(url, re)) return rule;
    }
    return nullptr;
  }

  std::string decide(const std::string& req, const std::string& page, ResourceType type) const {
    const auto site = [](const std::string& u) {
      const auto host = Url::parse(u).host;
      try {
        return SuffixRules::embedded().registrable_domain(host);
      } catch (const Error&) {
        return host;
      }
    };
    const bool third = site(req) != site(page);
    const auto url = to_lower(req);
    const auto* b = first(blocks, url, type, third);
    if (!b) return "no_match";
    if (const auto* e = first(exceptions, url, type, third)) return "exempted_by " + e->text;
    return "blocked_by " + b->text;
  }
};

std::string random_rule(Rng& rng) {
  static const char* pieces[] = {"ads", "ad", ".", "/", "*", "^", "x", "example", "com", "-",
                                 "track", "b", "js", "_", "1"};
  static const char* options[] = {"", "", "", "$image", "$script", "$~image", "$third-party",
                                  "$~third-party", "$image,third-party"};
  std::string body;
  const int n = 1 + static_cast<int>(rng.below(4));
  for (int i = 0; i < n; ++i) body += pieces[rng.below(std::size(pieces))];
  if (body == "*" || body == "^") body = "ad";
  std::string rule;
  const auto a = rng.below(4);
  if (a == 0) rule = "||";
  if (a == 1) rule = "|https://";
  rule += body;
  if (rng.below(6) == 0) rule += "|";
  rule += options[rng.below(std::size(options))];
  if (rng.below(4) == 0) rule = "@@" + rule;
  return rule;
}

std::string random_url(Rng& rng) {
  static const char* hosts[] = {"ads.example.com", "example.com", "x.ads.net", "track.b.io",
                                "cdn.example.co.uk", "adx.com", "b.example.com"};
  static const char* paths[] = {"", "/", "/ads/x.js", "/ad_1.png", "/a-d/track?x=1", "/x/b.js",
                                "/example.com/ads", "/ad^x", "/1/ads%20b"};
  std::string url = rng.below(2) ? "https://" : "http://";
  url += hosts[rng.below(std::size(hosts))];
  if (rng.below(5) == 0) url += ":8080";
  url += paths[rng.below(std::size(paths))];
  return url;
}

}  // namespace

TEST(FilterMatch, AgreesWithRegexOracle) {
  Rng rng(20240611);
  const ResourceType types[] = {ResourceType::kImage, ResourceType::kScript, ResourceType::kOther};
  int blocked = 0, exempted = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::string text;
    const int n = 1 + static_cast<int>(rng.below(8));
    for (int i = 0; i < n; ++i) text += random_rule(rng) + "\n";
    const auto rs = parse_filter_list(text).rules;
    const Oracle oracle(rs);
    for (int q = 0; q < 30; ++q) {
      const auto req = random_url(rng);
      const auto page = random_url(rng);
      const auto type = types[rng.below(3)];
      const auto got = decision_str(match_network(rs, req, page, type));
      ASSERT_EQ(got, oracle.decide(req, page, type)) << text << "request " << req << " page " << page;
      blocked += got.starts_with("blocked_by");
      exempted += got.starts_with("exempted_by");
    }
  }
  // The generator must actually exercise both outcomes.
  EXPECT_GT(blocked, 200);
  EXPECT_GT(exempted, 50);
}

TEST(FilterMatch, ExceptionDominance) {
  Rng rng(7);
  const ResourceType types[] = {ResourceType::kImage, ResourceType::kScript, ResourceType::kOther};
  for (int trial = 0; trial < 300; ++trial) {
    std::string text;
    for (int i = 0; i < 6; ++i) text += random_rule(rng) + "\n";
    const auto rs = parse_filter_list(text).rules;
    const Oracle oracle(rs);
    for (int q = 0; q < 20; ++q) {
      const auto req = random_url(rng);
      const auto page = random_url(rng);
      const auto type = types[rng.below(3)];
      const auto d = match_network(rs, req, page, type);
      const std::string page_site = Url::parse(page).host;
      bool third;
      try {
        third = SuffixRules::embedded().registrable_domain(Url::parse(req).host) !=
                SuffixRules::embedded().registrable_domain(page_site);
      } catch (const Error&) {
        third = true;
      }
      if (Oracle::first(oracle.exceptions, to_lower(req), type, third)) {
        EXPECT_NE(d.verdict, Verdict::kBlocked) << text << req;
      }
    }
  }
}

TEST(FilterMatch, SeparatorClass) {
  const auto rs = parse_filter_list("ad^").rules;
  const auto check = [&](const char* url) {
    return match_network(rs, url, "https://p.com/", ResourceType::kOther).verdict;
  };
  EXPECT_EQ(check("https://a.com/ad/x"), Verdict::kBlocked);
  EXPECT_EQ(check("https://a.com/ad?x"), Verdict::kBlocked);
  EXPECT_EQ(check("https://a.com/ad"), Verdict::kBlocked);
  EXPECT_EQ(check("https://a.com/ad_x"), Verdict::kNoMatch);
  EXPECT_EQ(check("https://a.com/ad-x"), Verdict::kNoMatch);
  EXPECT_EQ(check("https://a.com/ad.x"), Verdict::kNoMatch);
  EXPECT_EQ(check("https://a.com/ad%20"), Verdict::kNoMatch);
}

TEST(FilterCompile, EmptyRuleSetKeepsVersion) {
  const auto rs = parse_filter_list("", 42).rules;
  const auto doc = compile_ruleset(rs);
  EXPECT_EQ(doc.rfind("{\"version\":42,\"digest\":\"", 0), 0u);
  EXPECT_NE(doc.find("\"network\":[],\"exceptions\":[],\"cosmetic\":[]}"), std::string::npos);
  EXPECT_EQ(load_client_ruleset(doc).version(), 42);
}

TEST(FilterCompile, FieldOrderAndShape) {
  const auto rs = parse_filter_list("||a.com^$image,~third-party\n~b.com,c.com##.ad\n", 3).rules;
  const auto doc = compile_ruleset(rs);
  EXPECT_NE(doc.find("{\"id\":0,\"filter\":\"||a.com^$image,~third-party\",\"pattern\":\"a.com^\","
                     "\"anchor\":\"host\",\"end_anchor\":false,\"third_party\":false,"
                     "\"types\":[\"image\"],\"not_types\":[]}"),
            std::string::npos)
      << doc;
  EXPECT_NE(doc.find("{\"id\":1,\"filter\":\"~b.com,c.com##.ad\",\"selector\":\".ad\","
                     "\"domains\":[\"c.com\"],\"not_domains\":[\"b.com\"]}"),
            std::string::npos)
      << doc;
}

TEST(FilterCompile, ByteStableAndRoundTrip) {
  const auto text = fixtures::synthetic_filter_list(2000, 5);
  const auto a = parse_filter_list(text, 9);
  const auto b = parse_filter_list(text, 9);
  EXPECT_EQ(compile_ruleset(a.rules), compile_ruleset(b.rules));
  EXPECT_EQ(a.rules.source_digest(), b.rules.source_digest());

  const auto back = load_client_ruleset(compile_ruleset(a.rules));
  EXPECT_EQ(back.version(), 9);
  EXPECT_EQ(back.source_digest(), a.rules.source_digest());
  EXPECT_EQ(compile_ruleset(back), compile_ruleset(a.rules));
  ASSERT_EQ(back.size(), a.rules.size());
  const auto same_order = [](const std::vector<FilterRule>& x, const std::vector<FilterRule>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].text != y[i].text || x[i].id != y[i].id) return false;
    }
    return true;
  };
  EXPECT_TRUE(same_order(back.network_rules(), a.rules.network_rules()));
  EXPECT_TRUE(same_order(back.exception_rules(), a.rules.exception_rules()));
  EXPECT_TRUE(same_order(back.cosmetic_rules(), a.rules.cosmetic_rules()));
  // A reloaded set decides identically.
  for (const auto& r : fixtures::synthetic_requests(500, 2000, 3)) {
    EXPECT_EQ(decision_str(match_network(back, r.url, r.page, r.type)),
              decision_str(match_network(a.rules, r.url, r.page, r.type)));
  }
}

TEST(FilterCompile, RejectsMalformedDocument) {
  EXPECT_THROW(load_client_ruleset("{not json"), Error);
}

TEST(FilterCosmetic, Examples) {
  const auto rs = parse_filter_list("example.com##.ad\n###ad-slot\n").rules;
  EXPECT_EQ(cosmetic_selectors_for(rs, "sub.example.com"),
            (std::vector<std::string>{".ad", "#ad-slot"}));
  EXPECT_EQ(cosmetic_selectors_for(rs, "other.org"), std::vector<std::string>{"#ad-slot"});
  EXPECT_EQ(cosmetic_selectors_for(rs, "notexample.com"), std::vector<std::string>{"#ad-slot"});
  RuleSet empty;
  EXPECT_TRUE(cosmetic_selectors_for(empty, "a.com").empty());
}

TEST(FilterCosmetic, ExclusionsAndDuplicates) {
  const auto rs =
      parse_filter_list("example.com,~shop.example.com##.ad\n##.ad\n~news.org##.promo\n").rules;
  EXPECT_EQ(cosmetic_selectors_for(rs, "shop.example.com"), (std::vector<std::string>{".ad", ".promo"}));
  EXPECT_EQ(cosmetic_selectors_for(rs, "www.example.com"),
            (std::vector<std::string>{".ad", ".promo"}));
  EXPECT_EQ(cosmetic_selectors_for(rs, "a.news.org"), std::vector<std::string>{".ad"});
}

TEST(FilterPerformance, TenThousandRules) {
  const auto text = fixtures::synthetic_filter_list(10000, 1);
  const auto t0 = std::chrono::steady_clock::now();
  const auto parsed = parse_filter_list(text);
  const auto doc = compile_ruleset(parsed.rules);
  const double compile_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(parsed.rules.size(), 10000u);
  EXPECT_LT(compile_s, 1.0);

  const auto reqs = fixtures::synthetic_requests(200000, 10000, 2);
  std::size_t blocked = 0;
  const auto t1 = std::chrono::steady_clock::now();
  for (const auto& r : reqs) {
    blocked += match_network(parsed.rules, r.url, r.page, r.type).verdict == Verdict::kBlocked;
  }
  const double match_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
  const double rate = reqs.size() / match_s;
  EXPECT_GE(rate, 1e5) << "matches/s";
  EXPECT_GT(blocked, 0u);
  RecordProperty("matches_per_second", std::to_string(static_cast<long>(rate)));
}
