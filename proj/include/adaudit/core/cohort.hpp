#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "adaudit/core/types.hpp"

namespace adaudit {

/// Pick `quota` waitlist members: every member who does not identify as
/// white only, then white-identifying members sampled uniformly to bring
/// the count of men as close as possible to women plus non-binary.
///
/// Slot allocation is greedy: each remaining slot goes to the gender group
/// with the lower running count (marginalized group on ties), falling back
/// to the other group and then to undisclosed gender when a group runs out.
/// Each group is then sampled with `sample_indices` over waitlist order, in
/// the group order men, marginalized, undisclosed, from one `Rng(seed)`.
std::vector<Participant> select_balanced_cohort(const std::vector<Participant>& waitlist,
                                                std::size_t quota, std::uint64_t seed);

struct Pairing {
  std::vector<std::pair<ParticipantId, ParticipantId>> pairs;
  std::optional<ParticipantId> unpaired;
};

/// Uniform random perfect matching: a uniform shuffle paired off in
/// consecutive positions; with an odd count the last shuffled participant
/// is left unpaired.
Pairing assign_swap_pairs(const std::vector<ParticipantId>& participants, std::uint64_t seed);

/// Write partner links (and the exclusion flag) onto the participants named
/// in `pairing`. Throws if a participant is missing or already paired.
void apply_pairing(const Pairing& pairing, std::vector<Participant*> participants);

}  // namespace adaudit
