#include <json.hpp>

#include "adaudit/common/error.hpp"
#include "adaudit/filter/rules.hpp"

namespace adaudit::filter {

namespace {

using Json = nlohmann::ordered_json;

std::string_view anchor_name(Anchor a) {
  switch (a) {
    case Anchor::kHost: return "host";
    case Anchor::kStart: return "start";
    case Anchor::kNone: return "none";
  }
  return "none";
}

Json types_json(const std::set<ResourceType>& types) {
  Json arr = Json::array();
  for (auto t : types) arr.push_back(to_string(t));
  return arr;
}

Json network_json(const FilterRule& r) {
  Json j;
  j["id"] = r.id;
  j["filter"] = r.text;
  j["pattern"] = r.pattern;
  j["anchor"] = anchor_name(r.anchor);
  j["end_anchor"] = r.end_anchor;
  j["third_party"] = r.third_party ? Json(*r.third_party) : Json(nullptr);
  j["types"] = types_json(r.include_types);
  j["not_types"] = types_json(r.exclude_types);
  return j;
}

Json cosmetic_json(const FilterRule& r) {
  Json j;
  j["id"] = r.id;
  j["filter"] = r.text;
  j["selector"] = r.selector;
  j["domains"] = r.include_domains;
  j["not_domains"] = r.exclude_domains;
  return j;
}

}  // namespace

std::string compile_ruleset(const RuleSet& rules) {
  Json doc;
  doc["version"] = rules.version();
  doc["digest"] = rules.source_digest();
  doc["network"] = Json::array();
  for (const auto& r : rules.network_rules()) doc["network"].push_back(network_json(r));
  doc["exceptions"] = Json::array();
  for (const auto& r : rules.exception_rules()) doc["exceptions"].push_back(network_json(r));
  doc["cosmetic"] = Json::array();
  for (const auto& r : rules.cosmetic_rules()) doc["cosmetic"].push_back(cosmetic_json(r));
  return doc.dump();
}

RuleSet load_client_ruleset(std::string_view document) {
  Json doc;
  try {
    doc = Json::parse(document);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("ruleset document: ") + e.what());
  }
  // Re-parse in original id order so ids and list order survive.
  std::vector<std::pair<std::uint32_t, std::string>> filters;
  for (const char* section : {"network", "exceptions", "cosmetic"}) {
    for (const auto& r : doc.at(section)) {
      filters.emplace_back(r.at("id").get<std::uint32_t>(), r.at("filter").get<std::string>());
    }
  }
  std::sort(filters.begin(), filters.end());
  std::string text;
  for (const auto& [id, filter] : filters) {
    text += filter;
    text += '\n';
  }
  auto rules = parse_filter_list(text, doc.at("version").get<std::int64_t>()).rules;
  // The digest names the original list, not the rebuilt text.
  rules.digest_ = doc.at("digest").get<std::string>();
  return rules;
}

}  // namespace adaudit::filter
