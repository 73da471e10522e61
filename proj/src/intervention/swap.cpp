#include "adaudit/intervention/swap.hpp"

#include <algorithm>
#include <cmath>

#include "adaudit/common/error.hpp"

namespace adaudit::intervention {

SwapPool::SwapPool(ParticipantId owner, std::vector<PoolEntry> entries)
    : owner_(std::move(owner)), entries_(std::move(entries)) {
  reindex();
}

void SwapPool::reindex() {
  by_geometry_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) by_geometry_[entries_[i].slot].push_back(i);
}

bool SwapPool::contains(const AdId& id) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.id == id; });
}

bool SwapPool::remove(const AdId& id) {
  const auto it = std::find_if(entries_.begin(), entries_.end(),
                               [&](const auto& e) { return e.id == id; });
  if (it == entries_.end()) return false;
  entries_.erase(it);
  reindex();
  return true;
}

std::pair<std::vector<std::size_t>, Tier> SwapPool::candidates(Geometry slot) const {
  if (const auto it = by_geometry_.find(slot); it != by_geometry_.end()) {
    return {it->second, Tier::kExact};
  }
  std::vector<std::size_t> out;
  if (slot.width > 0 && slot.height > 0) {
    const double want = slot.aspect();
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& g = entries_[i].slot;
      if (g.width <= 0 || g.height <= 0) continue;
      if (std::fabs(g.aspect() / want - 1) <= kAspectTolerance) out.push_back(i);
    }
  }
  if (!out.empty()) return {out, Tier::kAspect};
  out.resize(entries_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return {out, Tier::kAny};
}

SwapPool eligible_pool(const Participant& recipient, std::span<const AdRecord> ads) {
  if (!recipient.partner_id) {
    throw Error(ErrorCode::kPrecondition, "participant " + recipient.id.str() + " is unpaired");
  }
  const auto& partner = *recipient.partner_id;
  std::vector<PoolEntry> entries;
  for (const auto& ad : ads) {
    if (ad.participant_id == partner && ad.phase == AdPhase::kObservational && !ad.redacted) {
      entries.push_back({ad.id, ad.slot});
    }
  }
  return SwapPool(partner, std::move(entries));
}

SwapSelection select_swap_ad(const SwapPool& pool, Geometry slot, Rng& rng) {
  if (pool.empty()) {
    throw Error(ErrorCode::kPrecondition, "swap pool of " + pool.owner().str() + " is empty");
  }
  const auto [cands, tier] = pool.candidates(slot);
  const auto pick = cands[static_cast<std::size_t>(rng.below(cands.size()))];
  return {pool.entries()[pick].id, tier, cands.size()};
}

}  // namespace adaudit::intervention
