#include "adaudit/pipeline/domains.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "adaudit/common/error.hpp"
#include "adaudit/common/url.hpp"

namespace adaudit::pipeline {

std::string registrable_domain(std::string_view url, const SuffixRules& rules) {
  const Url u = Url::parse(url);
  if (u.host.empty()) throw Error(ErrorCode::kInvalidArgument, "URL has no host");
  return rules.registrable_domain(u.host);
}

std::string_view to_string(DomainKind k) {
  switch (k) {
    case DomainKind::kSource: return "source";
    case DomainKind::kTarget: return "target";
    case DomainKind::kResolvedTarget: return "resolved_target";
  }
  return "source";
}

DomainKind parse_domain_kind(std::string_view text) {
  if (text == "source") return DomainKind::kSource;
  if (text == "target") return DomainKind::kTarget;
  if (text == "resolved_target") return DomainKind::kResolvedTarget;
  throw Error(ErrorCode::kInvalidArgument, "unknown domain kind: " + std::string(text));
}

DomainTable aggregate_domains(std::span<const AdRecord> ads, DomainKind kind,
                              const SuffixRules& rules) {
  DomainTable table;
  table.kind = kind;
  std::map<std::string, std::size_t> counts;
  std::map<std::string, std::set<ParticipantId>> owners;
  std::set<ParticipantId> counted;
  std::size_t total = 0;

  for (const auto& ad : ads) {
    if (ad.redacted) continue;
    const std::string* url = nullptr;
    switch (kind) {
      case DomainKind::kSource: url = &ad.source_page_url; break;
      case DomainKind::kTarget: url = &ad.target_url; break;
      case DomainKind::kResolvedTarget:
        url = ad.resolved_target_url ? &*ad.resolved_target_url : nullptr;
        break;
    }
    if (!url || url->empty()) {
      ++table.errors;
      continue;
    }
    std::string domain;
    try {
      domain = registrable_domain(*url, rules);
    } catch (const Error&) {
      ++table.errors;
      continue;
    }
    ++counts[domain];
    owners[domain].insert(ad.participant_id);
    counted.insert(ad.participant_id);
    ++total;
  }

  for (const auto& [domain, n] : counts) {
    table.rows.push_back({domain, n, static_cast<double>(n) / static_cast<double>(total)});
  }
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const DomainRow& a, const DomainRow& b) { return a.count > b.count; });
  for (const auto& [domain, who] : owners) {
    table.presence.push_back(
        {domain, who.size(), static_cast<double>(who.size()) / static_cast<double>(counted.size())});
  }
  std::stable_sort(table.presence.begin(), table.presence.end(),
                   [](const PresenceRow& a, const PresenceRow& b) {
                     return a.participants > b.participants;
                   });
  return table;
}

}  // namespace adaudit::pipeline
