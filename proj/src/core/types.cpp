#include "adaudit/core/types.hpp"

#include <array>
#include <utility>

#include "adaudit/common/error.hpp"

namespace adaudit {

namespace {

template <class E, std::size_t N>
E parse_enum(std::string_view text, const std::array<std::pair<E, std::string_view>, N>& table,
             std::string_view what) {
  for (const auto& [value, name] : table) {
    if (name == text) return value;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown " + std::string(what) + ": '" + std::string(text) + "'");
}

template <class E, std::size_t N>
std::string_view name_of(E value, const std::array<std::pair<E, std::string_view>, N>& table) {
  for (const auto& [v, name] : table) {
    if (v == value) return name;
  }
  return "?";
}

constexpr std::array<std::pair<Gender, std::string_view>, 4> kGenders{{
    {Gender::kMan, "man"},
    {Gender::kWoman, "woman"},
    {Gender::kNonBinary, "non_binary"},
    {Gender::kUndisclosed, "undisclosed"},
}};

constexpr std::array<std::pair<LifecycleState, std::string_view>, 9> kStates{{
    {LifecycleState::kWaitlisted, "waitlisted"},
    {LifecycleState::kSelected, "selected"},
    {LifecycleState::kOnboarding, "onboarding"},
    {LifecycleState::kObservational, "observational"},
    {LifecycleState::kMidpointSurvey, "midpoint_survey"},
    {LifecycleState::kIntervention, "intervention"},
    {LifecycleState::kFinalSurvey, "final_survey"},
    {LifecycleState::kOffboarded, "offboarded"},
    {LifecycleState::kDropped, "dropped"},
}};

constexpr std::array<std::pair<Milestone, std::string_view>, 3> kMilestones{{
    {Milestone::kOnboarding, "onboarding"},
    {Milestone::kMidpointSurvey, "midpoint_survey"},
    {Milestone::kFinalSurvey, "final_survey"},
}};

constexpr std::array<std::pair<AdPhase, std::string_view>, 3> kPhases{{
    {AdPhase::kObservational, "observational"},
    {AdPhase::kInterventionOriginal, "intervention_original"},
    {AdPhase::kInterventionSwapped, "intervention_swapped"},
}};

constexpr std::array<std::pair<PayloadKind, std::string_view>, 2> kPayloads{{
    {PayloadKind::kImage, "image"},
    {PayloadKind::kText, "text"},
}};

}  // namespace

std::string_view to_string(Gender g) { return name_of(g, kGenders); }
Gender parse_gender(std::string_view text) { return parse_enum(text, kGenders, "gender"); }

std::string_view to_string(LifecycleState s) { return name_of(s, kStates); }
LifecycleState parse_lifecycle_state(std::string_view text) {
  return parse_enum(text, kStates, "lifecycle state");
}

bool is_terminal(LifecycleState s) {
  return s == LifecycleState::kOffboarded || s == LifecycleState::kDropped;
}

std::string_view to_string(Milestone m) { return name_of(m, kMilestones); }
Milestone parse_milestone(std::string_view text) {
  return parse_enum(text, kMilestones, "milestone");
}

std::string_view to_string(AdPhase p) { return name_of(p, kPhases); }
AdPhase parse_ad_phase(std::string_view text) { return parse_enum(text, kPhases, "ad phase"); }

std::string_view to_string(PayloadKind k) { return name_of(k, kPayloads); }
PayloadKind parse_payload_kind(std::string_view text) {
  return parse_enum(text, kPayloads, "payload kind");
}

bool Demographics::identifies_white_only() const {
  return race.size() == 1 && *race.begin() == "white";
}

std::string Demographics::race_label() const {
  if (race.empty()) return "undisclosed";
  if (race.size() > 1) return "multiracial";
  return *race.begin();
}

std::int64_t Participant::days_in_state(Instant now) const {
  const auto it = entered_at.find(state);
  if (it == entered_at.end() || now < it->second) return 0;
  return (now - it->second) / kDay;
}

}  // namespace adaudit
