#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "adaudit/common/rng.hpp"
#include "adaudit/core/config.hpp"
#include "adaudit/core/types.hpp"

namespace adaudit::survey {

enum class SurveyPhase { kMidpoint, kFinal };

std::string_view to_string(SurveyPhase p);
SurveyPhase parse_survey_phase(std::string_view text);

struct PerAdCategory {
  bool seen = false;
  bool self = false;  // targeted at the participant (self) or the partner
  bool people = false;

  /// "seen-self-people", "unseen-partner-noPeople", ...
  std::string label() const;
  friend bool operator==(const PerAdCategory&, const PerAdCategory&) = default;
};

/// The six categories valid in a phase, in question order. Seen ads are
/// the participant's own at midpoint and the partner's at the end.
std::array<PerAdCategory, 6> categories_for(SurveyPhase phase);
bool is_valid_category(SurveyPhase phase, const PerAdCategory& c);

/// Everything sampling reads for one participant.
struct SurveyInputs {
  const Participant* participant = nullptr;
  std::span<const AdRecord> own_ads;
  std::span<const AdRecord> partner_ads;          // empty when unpaired
  std::span<const SwapDelivery> deliveries;       // swap ads served to the participant
};

struct HolisticSample {
  std::vector<AdId> ad_ids;
  bool skipped = false;  // no seen ads in the phase
};

/// Midpoint: own observational ads with views. Final: distinct partner ads
/// whose swap deliveries were viewed. Redacted ads never qualify.
std::vector<AdId> holistic_candidates(const SurveyInputs& in, SurveyPhase phase);

/// Uniform sample of min(max, available) candidates.
HolisticSample sample_holistic(const SurveyInputs& in, SurveyPhase phase, int max, Rng& rng);

/// Candidate ad ids per category, aligned with categories_for(phase).
/// Ads lacking a has_people label are left out.
std::array<std::vector<AdId>, 6> category_pools(const SurveyInputs& in, SurveyPhase phase);

struct PerAdQuestion {
  AdId ad_id;
  PerAdCategory category;
};

/// min(per_category_max, available) per category, categories in order.
std::vector<PerAdQuestion> sample_per_ad_questions(const SurveyInputs& in, SurveyPhase phase,
                                                   int per_category_max, Rng& rng);

enum class Recognition { kYes, kNo, kUnsure };

std::string_view to_string(Recognition r);
Recognition parse_recognition(std::string_view text);

struct HolisticAnswers {
  int recognition_bucket = 0;  // 1..7
  int interest = 0;            // 1..7
  int representativity = 0;    // 1..7
};

struct PerAdAnswer {
  AdId ad_id;
  Recognition recognition = Recognition::kNo;
  int interest = 0;
  int representativity = 0;
};

struct ExperienceAnswers {
  int rating = 0;
  int recommend = 0;
  int disabled_freq = 0;
  int incognito_freq = 0;
  std::string comments;
};

struct SurveyAnswers {
  std::optional<HolisticAnswers> holistic;
  std::vector<PerAdAnswer> per_ad;
  ExperienceAnswers experience;
};

struct SurveyInstance {
  SurveyId id;
  ParticipantId participant_id;
  SurveyPhase phase = SurveyPhase::kMidpoint;
  Instant generated_at{};
  HolisticSample holistic;
  std::vector<PerAdQuestion> per_ad;
  std::optional<SurveyAnswers> answers;
  std::optional<Instant> submitted_at;
};

/// Throws ValidationError naming the first bad field, e.g.
/// "per_ad[3].interest". Answers must cover each per-ad question once.
void validate_answers(const SurveyInstance& s, const SurveyAnswers& a);

/// Frozen survey instances per participant and phase.
class SurveyStore {
 public:
  /// Generate once, then return the cached instance. The participant must
  /// be in the matching survey state (midpoint_survey / final_survey), else
  /// Error(kPrecondition). Sampling uses a stream derived from the seed,
  /// participant and phase, so generation order does not matter.
  const SurveyInstance& pregenerate(const SurveyInputs& in, SurveyPhase phase,
                                    const StudyConfig& config, Instant now);

  const SurveyInstance* find(const ParticipantId& p, SurveyPhase phase) const;
  const SurveyInstance& get(const SurveyId& id) const;

  /// Validate and store answers, recording the milestone on `p`.
  /// Resubmission throws Error(kConflict) and leaves stored answers alone.
  const SurveyInstance& submit(const SurveyId& id, const SurveyAnswers& answers, Participant& p,
                               Instant now);

  std::vector<const SurveyInstance*> all() const;
  void restore(SurveyInstance instance);

 private:
  std::map<SurveyId, SurveyInstance> by_id_;
};

SurveyId survey_id_for(const ParticipantId& p, SurveyPhase phase);

struct ScoredResponse {
  Recognition answer = Recognition::kNo;
  bool seen = false;
};

struct RecognitionScore {
  std::optional<double> correct_rate;  // yes among seen
  std::optional<double> false_rate;    // yes among unseen
  std::size_t seen_answered = 0;
  std::size_t unseen_answered = 0;
  std::size_t seen_yes = 0;
  std::size_t unseen_yes = 0;
  std::size_t seen_unsure = 0;
  std::size_t unseen_unsure = 0;
};

/// "unsure" counts as not recognized. Empty denominators leave the rate unset.
RecognitionScore score_recognition(std::span<const ScoredResponse> responses);

/// Responses of an answered survey with seen flags from its categories.
std::vector<ScoredResponse> scored_responses(const SurveyInstance& s);

using Json = nlohmann::ordered_json;
using ImageResolver = std::function<std::string(const AdId&)>;

/// Client document: {survey_id, participant_id, phase, status, sections:
/// {holistic, per_ad, experience}}; images resolved through `image_of`.
Json survey_document(const SurveyInstance& s, const ImageResolver& image_of);
/// Parse a submission body. Throws ValidationError for malformed fields.
SurveyAnswers answers_from_json(const Json& j);
Json to_json(const SurveyAnswers& a);
/// Full stored form, used for export and snapshots.
Json to_json(const SurveyInstance& s);
SurveyInstance survey_from_json(const Json& j);

}  // namespace adaudit::survey
