#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "adaudit/common/time.hpp"
#include "adaudit/core/ids.hpp"

namespace adaudit {

enum class Gender { kMan, kWoman, kNonBinary, kUndisclosed };

std::string_view to_string(Gender g);
Gender parse_gender(std::string_view text);

/// Demographic record collected at onboarding. Band and category values are
/// drawn from the closed vocabularies in `Vocabulary`.
struct Demographics {
  std::string age;
  Gender gender = Gender::kUndisclosed;
  std::set<std::string> race;
  std::string education;
  std::string income;
  std::string region;

  /// Exactly {"white"}.
  bool identifies_white_only() const;
  /// Single label used as a model covariate; several races map to
  /// "multiracial".
  std::string race_label() const;

  friend bool operator==(const Demographics&, const Demographics&) = default;
};

enum class LifecycleState {
  kWaitlisted,
  kSelected,
  kOnboarding,
  kObservational,
  kMidpointSurvey,
  kIntervention,
  kFinalSurvey,
  kOffboarded,
  kDropped,
};

std::string_view to_string(LifecycleState s);
LifecycleState parse_lifecycle_state(std::string_view text);
bool is_terminal(LifecycleState s);

enum class Milestone { kOnboarding, kMidpointSurvey, kFinalSurvey };

std::string_view to_string(Milestone m);
Milestone parse_milestone(std::string_view text);

struct Participant {
  ParticipantId id;
  Demographics demographics;
  LifecycleState state = LifecycleState::kWaitlisted;
  std::optional<ParticipantId> partner_id;
  bool excluded_from_intervention = false;
  std::optional<Instant> onboarded_at;
  /// Instant each state was entered.
  std::map<LifecycleState, Instant> entered_at;
  std::set<Milestone> milestones_completed;
  std::int64_t redaction_count = 0;
  /// States in which the zero-ads reminder has already been signalled.
  std::set<LifecycleState> reminded_in;

  /// Elapsed whole days in the current state.
  std::int64_t days_in_state(Instant now) const;
};

enum class AdPhase { kObservational, kInterventionOriginal, kInterventionSwapped };

std::string_view to_string(AdPhase p);
AdPhase parse_ad_phase(std::string_view text);

enum class PayloadKind { kImage, kText };

std::string_view to_string(PayloadKind k);
PayloadKind parse_payload_kind(std::string_view text);

/// Width x height in CSS pixels.
struct Geometry {
  int width = 0;
  int height = 0;

  double aspect() const { return height > 0 ? static_cast<double>(width) / height : 0.0; }
  friend auto operator<=>(const Geometry&, const Geometry&) = default;
};

struct AdRecord {
  AdId id;
  ParticipantId participant_id;
  std::string client_ad_id;
  AdPhase phase = AdPhase::kObservational;
  PayloadKind payload_kind = PayloadKind::kImage;
  std::optional<std::string> image_url;
  std::optional<std::string> stored_image_ref;
  std::optional<std::string> text;
  std::string target_url;
  std::optional<std::string> resolved_target_url;
  std::string source_page_url;
  Geometry slot;
  std::int64_t view_count = 0;
  std::int64_t click_count = 0;
  std::optional<bool> has_people;
  Instant captured_at{};
  bool redacted = false;

  bool seen() const { return view_count > 0; }
};

/// One swap ad served to `recipient_id` in place of an original ad.
struct SwapDelivery {
  DeliveryId id;
  ParticipantId recipient_id;
  AdId source_ad_id;
  ParticipantId source_owner_id;
  Geometry slot;
  /// 0 exact geometry, 1 aspect ratio, 2 whole pool.
  int tier = 0;
  Instant served_at{};
  std::int64_t view_count = 0;
  std::int64_t click_count = 0;
};

struct RedactionReceipt {
  std::int64_t count = 0;
};

}  // namespace adaudit
