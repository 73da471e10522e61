#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adaudit/common/public_suffix.hpp"
#include "adaudit/core/types.hpp"

namespace adaudit::pipeline {

/// eTLD+1 of the URL's host; IP hosts verbatim. Throws Error(kInvalidArgument)
/// for hostless URLs or hosts that are themselves public suffixes.
std::string registrable_domain(std::string_view url,
                               const SuffixRules& rules = SuffixRules::embedded());

enum class DomainKind { kSource, kTarget, kResolvedTarget };

std::string_view to_string(DomainKind k);
DomainKind parse_domain_kind(std::string_view text);

struct DomainRow {
  std::string domain;
  std::size_t count = 0;
  double share = 0;  // of non-error rows
};

struct PresenceRow {
  std::string domain;
  std::size_t participants = 0;
  double share = 0;  // of participants with at least one counted ad
};

struct DomainTable {
  DomainKind kind = DomainKind::kSource;
  std::vector<DomainRow> rows;          // count descending, then domain
  std::vector<PresenceRow> presence;    // participants descending, then domain
  std::size_t errors = 0;               // missing URL or unparseable host
};

/// Redacted ads are skipped.
DomainTable aggregate_domains(std::span<const AdRecord> ads, DomainKind kind,
                              const SuffixRules& rules = SuffixRules::embedded());

}  // namespace adaudit::pipeline
