#include "adaudit/core/lifecycle.hpp"

#include "adaudit/common/error.hpp"

namespace adaudit {

using S = LifecycleState;

bool is_legal_transition(LifecycleState from, LifecycleState to) {
  if (is_terminal(from)) return false;
  if (to == S::kDropped) return true;
  switch (from) {
    case S::kWaitlisted: return to == S::kSelected;
    case S::kSelected: return to == S::kOnboarding;
    case S::kOnboarding: return to == S::kObservational;
    case S::kObservational: return to == S::kMidpointSurvey;
    case S::kMidpointSurvey: return to == S::kIntervention || to == S::kOffboarded;
    case S::kIntervention: return to == S::kFinalSurvey;
    case S::kFinalSurvey: return to == S::kOffboarded;
    default: return false;
  }
}

void transition(Participant& p, LifecycleState to, Instant now) {
  if (!is_legal_transition(p.state, to)) {
    throw Error(ErrorCode::kIllegalTransition,
                "participant " + p.id.str() + " in state " + std::string(to_string(p.state)) +
                    " cannot move to " + std::string(to_string(to)));
  }
  p.state = to;
  p.entered_at[to] = now;
}

GateResult check_activity_gate(Participant& p, AdPhase phase, std::int64_t unredacted_ads,
                               const StudyConfig& config, Instant now) {
  (void)phase;
  if (unredacted_ads >= config.min_ads_gate) return GateResult::passed();
  if (!is_terminal(p.state)) transition(p, S::kDropped, now);
  return {false, "insufficient_ads"};
}

AdvanceOutcome advance_phase(Participant& p, Instant now, const StudyConfig& config,
                             const PhaseActivity& activity) {
  if (is_terminal(p.state)) {
    throw Error(ErrorCode::kIllegalTransition,
                "participant " + p.id.str() + " is in terminal state " +
                    std::string(to_string(p.state)));
  }
  AdvanceOutcome out{p.state};
  const auto day = p.days_in_state(now);

  auto maybe_remind = [&] {
    if (day == config.reminder_day && activity.ads_in_phase == 0 &&
        !p.reminded_in.contains(p.state)) {
      p.reminded_in.insert(p.state);
      out.reminder_needed = true;
    }
  };
  auto go = [&](S to) {
    transition(p, to, now);
    out.changed = true;
  };

  switch (p.state) {
    case S::kOnboarding:
      if (p.milestones_completed.contains(Milestone::kOnboarding)) go(S::kObservational);
      break;
    case S::kObservational:
      if (day >= config.observational_days) {
        out.gate = check_activity_gate(p, AdPhase::kObservational, activity.ads_in_phase, config,
                                       now);
        if (out.gate->pass) go(S::kMidpointSurvey);
        else out.changed = true;
      } else {
        maybe_remind();
      }
      break;
    case S::kMidpointSurvey:
      if (p.milestones_completed.contains(Milestone::kMidpointSurvey)) {
        const bool can_swap = p.partner_id && !p.excluded_from_intervention &&
                              activity.partner_pool_size > 0;
        go(can_swap ? S::kIntervention : S::kOffboarded);
      }
      break;
    case S::kIntervention:
      if (day >= config.intervention_days) {
        out.gate = check_activity_gate(p, AdPhase::kInterventionOriginal, activity.ads_in_phase,
                                       config, now);
        if (out.gate->pass) go(S::kFinalSurvey);
        else out.changed = true;
      } else {
        maybe_remind();
      }
      break;
    case S::kFinalSurvey:
      if (p.milestones_completed.contains(Milestone::kFinalSurvey)) go(S::kOffboarded);
      break;
    default:
      break;
  }
  out.state = p.state;
  return out;
}

}  // namespace adaudit
