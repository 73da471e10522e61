#include <algorithm>
#include <set>

#include "adaudit/common/error.hpp"
#include "adaudit/survey/survey.hpp"

namespace adaudit::survey {

namespace {

void check_scale(const std::string& field, int v) {
  if (v < 1 || v > 7) {
    throw ValidationError(field, "must be between 1 and 7, got " + std::to_string(v));
  }
}

}  // namespace

void validate_answers(const SurveyInstance& s, const SurveyAnswers& a) {
  if (s.holistic.skipped) {
    if (a.holistic) throw ValidationError("holistic", "section is skipped for this survey");
  } else {
    if (!a.holistic) throw ValidationError("holistic", "missing");
    check_scale("holistic.recognition_bucket", a.holistic->recognition_bucket);
    check_scale("holistic.interest", a.holistic->interest);
    check_scale("holistic.representativity", a.holistic->representativity);
  }
  if (a.per_ad.size() != s.per_ad.size()) {
    throw ValidationError("per_ad", "expected " + std::to_string(s.per_ad.size()) +
                                        " answers, got " + std::to_string(a.per_ad.size()));
  }
  std::set<AdId> asked;
  for (const auto& q : s.per_ad) asked.insert(q.ad_id);
  std::set<AdId> answered;
  for (std::size_t i = 0; i < a.per_ad.size(); ++i) {
    const auto& ans = a.per_ad[i];
    const std::string path = "per_ad[" + std::to_string(i) + "]";
    if (!asked.contains(ans.ad_id)) throw ValidationError(path + ".ad_id", "not in this survey");
    if (!answered.insert(ans.ad_id).second) {
      throw ValidationError(path + ".ad_id", "answered twice");
    }
    check_scale(path + ".interest", ans.interest);
    check_scale(path + ".representativity", ans.representativity);
  }
  check_scale("experience.rating", a.experience.rating);
  check_scale("experience.recommend", a.experience.recommend);
  check_scale("experience.disabled_freq", a.experience.disabled_freq);
  check_scale("experience.incognito_freq", a.experience.incognito_freq);
}

SurveyId survey_id_for(const ParticipantId& p, SurveyPhase phase) {
  return SurveyId("srv-" + p.str() + "-" + std::string(to_string(phase)));
}

const SurveyInstance& SurveyStore::pregenerate(const SurveyInputs& in, SurveyPhase phase,
                                               const StudyConfig& config, Instant now) {
  const Participant& p = *in.participant;
  const auto id = survey_id_for(p.id, phase);
  if (const auto it = by_id_.find(id); it != by_id_.end()) return it->second;
  const auto required =
      phase == SurveyPhase::kMidpoint ? LifecycleState::kMidpointSurvey : LifecycleState::kFinalSurvey;
  if (p.state != required) {
    throw Error(ErrorCode::kPrecondition,
                std::string(to_string(phase)) + " survey for " + p.id.str() +
                    " not yet available in state " + std::string(adaudit::to_string(p.state)));
  }
  auto rng = Rng::derive(config.rng_seed, "survey/" + p.id.str() + "/" + std::string(to_string(phase)));
  SurveyInstance s;
  s.id = id;
  s.participant_id = p.id;
  s.phase = phase;
  s.generated_at = now;
  s.holistic = sample_holistic(in, phase, config.holistic_sample_max, rng);
  s.per_ad = sample_per_ad_questions(in, phase, config.per_ad_per_category_max, rng);
  return by_id_.emplace(id, std::move(s)).first->second;
}

const SurveyInstance* SurveyStore::find(const ParticipantId& p, SurveyPhase phase) const {
  const auto it = by_id_.find(survey_id_for(p, phase));
  return it == by_id_.end() ? nullptr : &it->second;
}

const SurveyInstance& SurveyStore::get(const SurveyId& id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) throw Error(ErrorCode::kNotFound, "unknown survey " + id.str());
  return it->second;
}

const SurveyInstance& SurveyStore::submit(const SurveyId& id, const SurveyAnswers& answers,
                                          Participant& p, Instant now) {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) throw Error(ErrorCode::kNotFound, "unknown survey " + id.str());
  auto& s = it->second;
  if (s.participant_id != p.id) {
    throw Error(ErrorCode::kRefused, "survey " + id.str() + " belongs to another participant");
  }
  if (s.answers) throw Error(ErrorCode::kConflict, "survey " + id.str() + " already submitted");
  validate_answers(s, answers);
  s.answers = answers;
  s.submitted_at = now;
  p.milestones_completed.insert(s.phase == SurveyPhase::kMidpoint ? Milestone::kMidpointSurvey
                                                                  : Milestone::kFinalSurvey);
  return s;
}

std::vector<const SurveyInstance*> SurveyStore::all() const {
  std::vector<const SurveyInstance*> out;
  for (const auto& [id, s] : by_id_) out.push_back(&s);
  return out;
}

void SurveyStore::restore(SurveyInstance instance) {
  auto id = instance.id;
  by_id_.insert_or_assign(std::move(id), std::move(instance));
}

// ---- wire forms ----

namespace {

const char* kExperienceFields[] = {"rating", "recommend", "disabled_freq", "incognito_freq"};

int int_field(const Json& obj, const std::string& key, const std::string& path) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(path, "missing");
  if (!it->is_number_integer()) throw ValidationError(path, "must be an integer");
  return it->get<int>();
}

const Json& object_field(const Json& obj, const std::string& key) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_object()) throw ValidationError(key, "must be an object");
  return *it;
}

Json category_json(const PerAdCategory& c) {
  return {{"seen", c.seen}, {"targeted_user", c.self ? "self" : "partner"},
          {"has_people", c.people}, {"label", c.label()}};
}

}  // namespace

Json survey_document(const SurveyInstance& s, const ImageResolver& image_of) {
  Json doc;
  doc["survey_id"] = s.id.str();
  doc["participant_id"] = s.participant_id.str();
  doc["phase"] = to_string(s.phase);
  doc["status"] = s.answers ? "submitted" : "released";
  Json holistic;
  holistic["skipped"] = s.holistic.skipped;
  holistic["ads"] = Json::array();
  for (const auto& id : s.holistic.ad_ids) {
    holistic["ads"].push_back({{"ad_id", id.str()}, {"image", image_of(id)}});
  }
  holistic["questions"] = {"recognition_bucket", "interest", "representativity"};
  Json per_ad = Json::array();
  for (const auto& q : s.per_ad) {
    per_ad.push_back({{"ad_id", q.ad_id.str()},
                      {"image", image_of(q.ad_id)},
                      {"questions", {"recognition", "interest", "representativity"}}});
  }
  Json experience;
  experience["questions"] = {"rating", "recommend", "disabled_freq", "incognito_freq", "comments"};
  doc["sections"] = {{"holistic", holistic}, {"per_ad", per_ad}, {"experience", experience}};
  doc["scale"] = {{"min", 1}, {"max", 7}};
  doc["recognition_options"] = {"yes", "no", "unsure"};
  return doc;
}

SurveyAnswers answers_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("body", "must be an object");
  SurveyAnswers a;
  if (const auto it = j.find("holistic"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw ValidationError("holistic", "must be an object");
    a.holistic = HolisticAnswers{
        int_field(*it, "recognition_bucket", "holistic.recognition_bucket"),
        int_field(*it, "interest", "holistic.interest"),
        int_field(*it, "representativity", "holistic.representativity")};
  }
  const auto per_ad = j.find("per_ad");
  if (per_ad == j.end() || !per_ad->is_array()) throw ValidationError("per_ad", "must be an array");
  for (std::size_t i = 0; i < per_ad->size(); ++i) {
    const auto& e = (*per_ad)[i];
    const std::string path = "per_ad[" + std::to_string(i) + "]";
    if (!e.is_object()) throw ValidationError(path, "must be an object");
    PerAdAnswer ans;
    const auto id = e.find("ad_id");
    if (id == e.end() || !id->is_string()) throw ValidationError(path + ".ad_id", "must be a string");
    ans.ad_id = AdId(id->get<std::string>());
    const auto rec = e.find("recognition");
    if (rec == e.end() || !rec->is_string()) {
      throw ValidationError(path + ".recognition", "must be yes, no or unsure");
    }
    try {
      ans.recognition = parse_recognition(rec->get<std::string>());
    } catch (const Error&) {
      throw ValidationError(path + ".recognition", "must be yes, no or unsure");
    }
    ans.interest = int_field(e, "interest", path + ".interest");
    ans.representativity = int_field(e, "representativity", path + ".representativity");
    a.per_ad.push_back(std::move(ans));
  }
  const auto& ex = object_field(j, "experience");
  a.experience.rating = int_field(ex, "rating", "experience.rating");
  a.experience.recommend = int_field(ex, "recommend", "experience.recommend");
  a.experience.disabled_freq = int_field(ex, "disabled_freq", "experience.disabled_freq");
  a.experience.incognito_freq = int_field(ex, "incognito_freq", "experience.incognito_freq");
  if (const auto c = ex.find("comments"); c != ex.end() && !c->is_null()) {
    if (!c->is_string()) throw ValidationError("experience.comments", "must be a string");
    a.experience.comments = c->get<std::string>();
  }
  return a;
}

Json to_json(const SurveyAnswers& a) {
  Json j;
  if (a.holistic) {
    j["holistic"] = {{"recognition_bucket", a.holistic->recognition_bucket},
                     {"interest", a.holistic->interest},
                     {"representativity", a.holistic->representativity}};
  } else {
    j["holistic"] = nullptr;
  }
  j["per_ad"] = Json::array();
  for (const auto& p : a.per_ad) {
    j["per_ad"].push_back({{"ad_id", p.ad_id.str()},
                           {"recognition", to_string(p.recognition)},
                           {"interest", p.interest},
                           {"representativity", p.representativity}});
  }
  Json ex;
  const int values[] = {a.experience.rating, a.experience.recommend, a.experience.disabled_freq,
                        a.experience.incognito_freq};
  for (int i = 0; i < 4; ++i) ex[kExperienceFields[i]] = values[i];
  ex["comments"] = a.experience.comments;
  j["experience"] = ex;
  return j;
}

Json to_json(const SurveyInstance& s) {
  Json j;
  j["survey_id"] = s.id.str();
  j["participant_id"] = s.participant_id.str();
  j["phase"] = to_string(s.phase);
  j["generated_at"] = format_iso8601(s.generated_at);
  j["holistic_skipped"] = s.holistic.skipped;
  j["holistic_ad_ids"] = Json::array();
  for (const auto& id : s.holistic.ad_ids) j["holistic_ad_ids"].push_back(id.str());
  j["per_ad"] = Json::array();
  for (const auto& q : s.per_ad) {
    j["per_ad"].push_back({{"ad_id", q.ad_id.str()}, {"category", category_json(q.category)}});
  }
  j["answers"] = s.answers ? to_json(*s.answers) : Json(nullptr);
  j["submitted_at"] = s.submitted_at ? Json(format_iso8601(*s.submitted_at)) : Json(nullptr);
  return j;
}

SurveyInstance survey_from_json(const Json& j) {
  SurveyInstance s;
  s.id = SurveyId(j.at("survey_id").get<std::string>());
  s.participant_id = ParticipantId(j.at("participant_id").get<std::string>());
  s.phase = parse_survey_phase(j.at("phase").get<std::string>());
  s.generated_at = parse_iso8601(j.at("generated_at").get<std::string>());
  s.holistic.skipped = j.at("holistic_skipped").get<bool>();
  for (const auto& id : j.at("holistic_ad_ids")) s.holistic.ad_ids.emplace_back(id.get<std::string>());
  for (const auto& q : j.at("per_ad")) {
    const auto& c = q.at("category");
    s.per_ad.push_back({AdId(q.at("ad_id").get<std::string>()),
                        {c.at("seen").get<bool>(), c.at("targeted_user").get<std::string>() == "self",
                         c.at("has_people").get<bool>()}});
  }
  if (!j.at("answers").is_null()) s.answers = answers_from_json(j.at("answers"));
  if (!j.at("submitted_at").is_null()) {
    s.submitted_at = parse_iso8601(j.at("submitted_at").get<std::string>());
  }
  return s;
}

}  // namespace adaudit::survey
