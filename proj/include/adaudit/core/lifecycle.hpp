#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "adaudit/core/config.hpp"
#include "adaudit/core/types.hpp"

namespace adaudit {

/// Whether `from -> to` is an edge of the lifecycle graph:
///
///   waitlisted -> selected -> onboarding -> observational -> midpoint_survey
///     -> intervention -> final_survey -> offboarded
///
/// plus midpoint_survey -> offboarded (participants left out of the
/// intervention) and any non-terminal state -> dropped.
bool is_legal_transition(LifecycleState from, LifecycleState to);

/// Move `p` to `to` at `now`. Throws Error(kIllegalTransition) naming the
/// current state when the edge does not exist.
void transition(Participant& p, LifecycleState to, Instant now);

struct GateResult {
  bool pass = false;
  std::string reason;  // "insufficient_ads" on failure

  static GateResult passed() { return {true, {}}; }
};

/// Activity gate for a concluded phase. A failing gate drops the participant.
GateResult check_activity_gate(Participant& p, AdPhase phase, std::int64_t unredacted_ads,
                               const StudyConfig& config, Instant now);

/// Facts about the participant's data that the phase rules need; the caller
/// gathers them from the store.
struct PhaseActivity {
  /// Unredacted ads collected in the phase the participant is currently in.
  std::int64_t ads_in_phase = 0;
  /// Unredacted observational ads of the swap partner.
  std::int64_t partner_pool_size = 0;
};

struct AdvanceOutcome {
  LifecycleState state;
  bool changed = false;
  /// Zero-ads reminder due (signalled once per phase).
  bool reminder_needed = false;
  std::optional<GateResult> gate;
};

/// Time- and gate-driven transitions. Phase day numbers count whole elapsed
/// days since the phase was entered, so with 7-day phases the transition
/// happens once day 7 is reached and the reminder fires on day `reminder_day`.
///
/// Throws Error(kIllegalTransition) for terminal participants.
AdvanceOutcome advance_phase(Participant& p, Instant now, const StudyConfig& config,
                             const PhaseActivity& activity);

}  // namespace adaudit
