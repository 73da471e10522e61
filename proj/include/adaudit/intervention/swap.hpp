#pragma once

#include <map>
#include <span>
#include <utility>
#include <vector>

#include "adaudit/common/rng.hpp"
#include "adaudit/core/types.hpp"

namespace adaudit::intervention {

/// Geometry tiers tried in order when choosing a swap ad.
enum class Tier { kExact = 0, kAspect = 1, kAny = 2 };

/// Aspect ratios within this relative distance count as compatible.
inline constexpr double kAspectTolerance = 0.10;

struct PoolEntry {
  AdId id;
  Geometry slot;
};

/// Snapshot of the partner ads a recipient may be shown: the owner's
/// observational, unredacted ads, indexed by geometry.
class SwapPool {
 public:
  SwapPool(ParticipantId owner, std::vector<PoolEntry> entries);

  const ParticipantId& owner() const { return owner_; }
  const std::vector<PoolEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  bool contains(const AdId& id) const;

  /// Drop a redacted ad. Returns whether it was present.
  bool remove(const AdId& id);

  /// Positions in `entries()` compatible with `slot` at the first
  /// non-empty tier, and that tier.
  std::pair<std::vector<std::size_t>, Tier> candidates(Geometry slot) const;

 private:
  void reindex();

  ParticipantId owner_;
  std::vector<PoolEntry> entries_;
  std::map<Geometry, std::vector<std::size_t>> by_geometry_;
};

/// The partner's pool for `recipient`. `ads` may hold any records; only the
/// partner's observational, unredacted ones are kept, in input order.
/// Throws Error(kPrecondition) if the recipient is unpaired.
SwapPool eligible_pool(const Participant& recipient, std::span<const AdRecord> ads);

struct SwapSelection {
  AdId ad;
  Tier tier = Tier::kExact;
  std::size_t candidates = 0;
};

/// Uniform draw, with replacement, from the first non-empty tier.
/// Throws Error(kPrecondition) on an empty pool.
SwapSelection select_swap_ad(const SwapPool& pool, Geometry slot, Rng& rng);

}  // namespace adaudit::intervention
