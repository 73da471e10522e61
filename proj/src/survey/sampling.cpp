#include <algorithm>
#include <set>

#include "adaudit/common/error.hpp"
#include "adaudit/survey/survey.hpp"

namespace adaudit::survey {

std::string_view to_string(SurveyPhase p) {
  return p == SurveyPhase::kMidpoint ? "midpoint" : "final";
}

SurveyPhase parse_survey_phase(std::string_view text) {
  if (text == "midpoint") return SurveyPhase::kMidpoint;
  if (text == "final") return SurveyPhase::kFinal;
  throw Error(ErrorCode::kInvalidArgument, "unknown survey phase: " + std::string(text));
}

std::string PerAdCategory::label() const {
  std::string s = seen ? "seen-" : "unseen-";
  s += self ? "self-" : "partner-";
  s += people ? "people" : "noPeople";
  return s;
}

std::array<PerAdCategory, 6> categories_for(SurveyPhase phase) {
  const bool seen_self = phase == SurveyPhase::kMidpoint;
  return {{
      {true, seen_self, true},
      {true, seen_self, false},
      {false, true, true},
      {false, true, false},
      {false, false, true},
      {false, false, false},
  }};
}

bool is_valid_category(SurveyPhase phase, const PerAdCategory& c) {
  const auto cats = categories_for(phase);
  return std::find(cats.begin(), cats.end(), c) != cats.end();
}

namespace {

bool labelled_live(const AdRecord& a) { return !a.redacted && a.has_people.has_value(); }

/// Partner ads the participant saw through swap deliveries.
std::set<AdId> seen_partner_ads(const SurveyInputs& in) {
  std::set<AdId> out;
  for (const auto& d : in.deliveries) {
    if (d.view_count > 0) out.insert(d.source_ad_id);
  }
  return out;
}

std::size_t slot_of(const PerAdCategory& c, SurveyPhase phase) {
  const auto cats = categories_for(phase);
  return static_cast<std::size_t>(std::find(cats.begin(), cats.end(), c) - cats.begin());
}

}  // namespace

std::vector<AdId> holistic_candidates(const SurveyInputs& in, SurveyPhase phase) {
  std::vector<AdId> out;
  if (phase == SurveyPhase::kMidpoint) {
    for (const auto& a : in.own_ads) {
      if (a.phase == AdPhase::kObservational && !a.redacted && a.seen()) out.push_back(a.id);
    }
    return out;
  }
  const auto seen = seen_partner_ads(in);
  for (const auto& a : in.partner_ads) {
    if (a.phase == AdPhase::kObservational && !a.redacted && seen.contains(a.id)) {
      out.push_back(a.id);
    }
  }
  return out;
}

HolisticSample sample_holistic(const SurveyInputs& in, SurveyPhase phase, int max, Rng& rng) {
  HolisticSample s;
  const auto candidates = holistic_candidates(in, phase);
  s.skipped = candidates.empty();
  s.ad_ids = sample_without_replacement(candidates, static_cast<std::size_t>(std::max(max, 0)), rng);
  return s;
}

std::array<std::vector<AdId>, 6> category_pools(const SurveyInputs& in, SurveyPhase phase) {
  std::array<std::vector<AdId>, 6> pools;
  const auto put = [&](const AdRecord& a, bool seen, bool self) {
    pools[slot_of({seen, self, *a.has_people}, phase)].push_back(a.id);
  };
  if (phase == SurveyPhase::kMidpoint) {
    for (const auto& a : in.own_ads) {
      if (a.phase == AdPhase::kObservational && labelled_live(a)) put(a, a.seen(), true);
    }
    for (const auto& a : in.partner_ads) {
      if (a.phase == AdPhase::kObservational && labelled_live(a)) put(a, false, false);
    }
    return pools;
  }
  for (const auto& a : in.own_ads) {
    if (a.phase == AdPhase::kInterventionOriginal && labelled_live(a) && !a.seen()) {
      put(a, false, true);
    }
  }
  const auto seen = seen_partner_ads(in);
  for (const auto& a : in.partner_ads) {
    if (a.phase == AdPhase::kObservational && labelled_live(a)) {
      put(a, seen.contains(a.id), false);
    }
  }
  return pools;
}

std::vector<PerAdQuestion> sample_per_ad_questions(const SurveyInputs& in, SurveyPhase phase,
                                                   int per_category_max, Rng& rng) {
  const auto pools = category_pools(in, phase);
  const auto cats = categories_for(phase);
  std::vector<PerAdQuestion> out;
  for (std::size_t c = 0; c < cats.size(); ++c) {
    for (auto& id : sample_without_replacement(
             pools[c], static_cast<std::size_t>(std::max(per_category_max, 0)), rng)) {
      out.push_back({std::move(id), cats[c]});
    }
  }
  return out;
}

std::string_view to_string(Recognition r) {
  switch (r) {
    case Recognition::kYes: return "yes";
    case Recognition::kNo: return "no";
    case Recognition::kUnsure: return "unsure";
  }
  return "no";
}

Recognition parse_recognition(std::string_view text) {
  if (text == "yes") return Recognition::kYes;
  if (text == "no") return Recognition::kNo;
  if (text == "unsure") return Recognition::kUnsure;
  throw Error(ErrorCode::kInvalidArgument, "unknown recognition answer: " + std::string(text));
}

RecognitionScore score_recognition(std::span<const ScoredResponse> responses) {
  RecognitionScore s;
  for (const auto& r : responses) {
    auto& answered = r.seen ? s.seen_answered : s.unseen_answered;
    auto& yes = r.seen ? s.seen_yes : s.unseen_yes;
    auto& unsure = r.seen ? s.seen_unsure : s.unseen_unsure;
    ++answered;
    if (r.answer == Recognition::kYes) ++yes;
    if (r.answer == Recognition::kUnsure) ++unsure;
  }
  if (s.seen_answered > 0) s.correct_rate = static_cast<double>(s.seen_yes) / s.seen_answered;
  if (s.unseen_answered > 0) s.false_rate = static_cast<double>(s.unseen_yes) / s.unseen_answered;
  return s;
}

std::vector<ScoredResponse> scored_responses(const SurveyInstance& s) {
  std::vector<ScoredResponse> out;
  if (!s.answers) return out;
  for (const auto& a : s.answers->per_ad) {
    const auto q = std::find_if(s.per_ad.begin(), s.per_ad.end(),
                                [&](const auto& q) { return q.ad_id == a.ad_id; });
    if (q != s.per_ad.end()) out.push_back({a.recognition, q->category.seen});
  }
  return out;
}

}  // namespace adaudit::survey
