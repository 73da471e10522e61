#include "adaudit/core/cohort.hpp"

#include <algorithm>
#include <unordered_set>

#include "adaudit/common/error.hpp"
#include "adaudit/common/rng.hpp"

namespace adaudit {

namespace {

bool is_marginalized_gender(Gender g) { return g == Gender::kWoman || g == Gender::kNonBinary; }

}  // namespace

std::vector<Participant> select_balanced_cohort(const std::vector<Participant>& waitlist,
                                                std::size_t quota, std::uint64_t seed) {
  if (quota == 0) throw Error(ErrorCode::kInvalidArgument, "quota must be positive");
  if (quota > waitlist.size()) {
    throw Error(ErrorCode::kPrecondition, "quota " + std::to_string(quota) +
                                              " exceeds waitlist size " +
                                              std::to_string(waitlist.size()));
  }
  std::vector<std::size_t> keep;
  std::vector<std::size_t> men, marginalized, undisclosed;
  std::int64_t m = 0, g = 0;
  for (std::size_t i = 0; i < waitlist.size(); ++i) {
    const auto& p = waitlist[i];
    if (p.state != LifecycleState::kWaitlisted) {
      throw Error(ErrorCode::kPrecondition, "participant " + p.id.str() + " is not waitlisted");
    }
    const auto gender = p.demographics.gender;
    if (!p.demographics.identifies_white_only()) {
      keep.push_back(i);
      if (gender == Gender::kMan) ++m;
      else if (is_marginalized_gender(gender)) ++g;
    } else if (gender == Gender::kMan) {
      men.push_back(i);
    } else if (is_marginalized_gender(gender)) {
      marginalized.push_back(i);
    } else {
      undisclosed.push_back(i);
    }
  }
  if (keep.size() > quota) {
    throw Error(ErrorCode::kPrecondition,
                "quota " + std::to_string(quota) + " cannot hold all " +
                    std::to_string(keep.size()) + " non-white members (overflow " +
                    std::to_string(keep.size() - quota) + ")");
  }

  std::size_t take_m = 0, take_g = 0, take_u = 0;
  for (std::size_t slot = keep.size(); slot < quota; ++slot) {
    const bool want_g = g <= m;
    const bool g_left = take_g < marginalized.size();
    const bool m_left = take_m < men.size();
    if ((want_g && g_left) || (!want_g && !m_left && g_left)) {
      ++take_g;
      ++g;
    } else if (m_left) {
      ++take_m;
      ++m;
    } else {
      ++take_u;
    }
  }

  Rng rng(seed);
  for (auto* group : {&men, &marginalized, &undisclosed}) {
    const std::size_t k = group == &men ? take_m : group == &marginalized ? take_g : take_u;
    for (auto pick : sample_indices(group->size(), k, rng)) keep.push_back((*group)[pick]);
  }
  std::sort(keep.begin(), keep.end());

  std::vector<Participant> out;
  out.reserve(keep.size());
  for (auto i : keep) {
    out.push_back(waitlist[i]);
    out.back().state = LifecycleState::kSelected;
  }
  return out;
}

Pairing assign_swap_pairs(const std::vector<ParticipantId>& participants, std::uint64_t seed) {
  if (participants.size() < 2) {
    throw Error(ErrorCode::kPrecondition, "pairing needs at least 2 participants");
  }
  std::unordered_set<ParticipantId> distinct(participants.begin(), participants.end());
  if (distinct.size() != participants.size()) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate participant in pairing request");
  }
  auto order = participants;
  Rng rng(seed);
  shuffle(order, rng);
  Pairing out;
  for (std::size_t i = 0; i + 1 < order.size(); i += 2) {
    out.pairs.emplace_back(order[i], order[i + 1]);
  }
  if (order.size() % 2 == 1) out.unpaired = order.back();
  return out;
}

void apply_pairing(const Pairing& pairing, std::vector<Participant*> participants) {
  auto find = [&](const ParticipantId& id) -> Participant& {
    for (auto* p : participants) {
      if (p->id == id) return *p;
    }
    throw Error(ErrorCode::kNotFound, "participant " + id.str() + " not in cohort");
  };
  for (const auto& [a, b] : pairing.pairs) {
    if (a == b) throw Error(ErrorCode::kInvariantViolation, "self-pairing of " + a.str());
    auto& pa = find(a);
    auto& pb = find(b);
    if (pa.partner_id || pb.partner_id) {
      throw Error(ErrorCode::kConflict, "participant already paired; re-pairing is not supported");
    }
    pa.partner_id = b;
    pb.partner_id = a;
  }
  if (pairing.unpaired) find(*pairing.unpaired).excluded_from_intervention = true;
}

}  // namespace adaudit
