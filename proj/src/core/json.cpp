#include "adaudit/core/json.hpp"

#include "adaudit/common/error.hpp"

namespace adaudit {

namespace {

Json opt(const std::optional<std::string>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<std::string> opt_str(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

}  // namespace

Json to_json(const Demographics& d) {
  Json j;
  j["age"] = d.age;
  j["gender"] = to_string(d.gender);
  j["race"] = Json::array();
  for (const auto& r : d.race) j["race"].push_back(r);
  j["education"] = d.education;
  j["income"] = d.income;
  j["region"] = d.region;
  return j;
}

Demographics demographics_from_json(const Json& j) {
  Demographics d;
  d.age = j.at("age").get<std::string>();
  d.gender = parse_gender(j.at("gender").get<std::string>());
  for (const auto& r : j.at("race")) d.race.insert(r.get<std::string>());
  d.education = j.at("education").get<std::string>();
  d.income = j.at("income").get<std::string>();
  d.region = j.at("region").get<std::string>();
  return d;
}

Json to_json(const Participant& p) {
  Json j;
  j["id"] = p.id.str();
  j["demographics"] = to_json(p.demographics);
  j["state"] = to_string(p.state);
  j["partner_id"] = p.partner_id ? Json(p.partner_id->str()) : Json(nullptr);
  j["excluded_from_intervention"] = p.excluded_from_intervention;
  j["onboarded_at"] = p.onboarded_at ? Json(format_iso8601(*p.onboarded_at)) : Json(nullptr);
  Json entered = Json::object();
  for (const auto& [state, at] : p.entered_at) entered[std::string(to_string(state))] = format_iso8601(at);
  j["entered_at"] = entered;
  j["milestones_completed"] = Json::array();
  for (auto m : p.milestones_completed) j["milestones_completed"].push_back(to_string(m));
  j["redaction_count"] = p.redaction_count;
  j["reminded_in"] = Json::array();
  for (auto s : p.reminded_in) j["reminded_in"].push_back(to_string(s));
  return j;
}

Participant participant_from_json(const Json& j) {
  Participant p;
  p.id = ParticipantId(j.at("id").get<std::string>());
  p.demographics = demographics_from_json(j.at("demographics"));
  p.state = parse_lifecycle_state(j.at("state").get<std::string>());
  if (auto v = opt_str(j, "partner_id")) p.partner_id = ParticipantId(*v);
  p.excluded_from_intervention = j.value("excluded_from_intervention", false);
  if (auto v = opt_str(j, "onboarded_at")) p.onboarded_at = parse_iso8601(*v);
  if (j.contains("entered_at")) {
    for (const auto& [state, at] : j.at("entered_at").items()) {
      p.entered_at[parse_lifecycle_state(state)] = parse_iso8601(at.get<std::string>());
    }
  }
  for (const auto& m : j.value("milestones_completed", Json::array())) {
    p.milestones_completed.insert(parse_milestone(m.get<std::string>()));
  }
  p.redaction_count = j.value("redaction_count", std::int64_t{0});
  for (const auto& s : j.value("reminded_in", Json::array())) {
    p.reminded_in.insert(parse_lifecycle_state(s.get<std::string>()));
  }
  return p;
}

Json to_json(const AdRecord& ad) {
  Json j;
  j["ad_id"] = ad.id.str();
  j["participant_id"] = ad.participant_id.str();
  j["client_ad_id"] = ad.client_ad_id;
  j["phase"] = to_string(ad.phase);
  j["payload_kind"] = to_string(ad.payload_kind);
  j["image_url"] = opt(ad.image_url);
  j["stored_image_ref"] = opt(ad.stored_image_ref);
  j["text"] = opt(ad.text);
  j["target_url"] = ad.target_url;
  j["resolved_target_url"] = opt(ad.resolved_target_url);
  j["source_page_url"] = ad.source_page_url;
  j["slot_width"] = ad.slot.width;
  j["slot_height"] = ad.slot.height;
  j["view_count"] = ad.view_count;
  j["click_count"] = ad.click_count;
  j["has_people"] = ad.has_people ? Json(*ad.has_people) : Json(nullptr);
  j["captured_at"] = format_iso8601(ad.captured_at);
  j["redacted"] = ad.redacted;
  return j;
}

AdRecord ad_from_json(const Json& j) {
  AdRecord ad;
  ad.id = AdId(j.at("ad_id").get<std::string>());
  ad.participant_id = ParticipantId(j.at("participant_id").get<std::string>());
  ad.client_ad_id = j.value("client_ad_id", std::string{});
  ad.phase = parse_ad_phase(j.at("phase").get<std::string>());
  ad.payload_kind = parse_payload_kind(j.value("payload_kind", std::string("image")));
  ad.image_url = opt_str(j, "image_url");
  ad.stored_image_ref = opt_str(j, "stored_image_ref");
  ad.text = opt_str(j, "text");
  ad.target_url = j.value("target_url", std::string{});
  ad.resolved_target_url = opt_str(j, "resolved_target_url");
  ad.source_page_url = j.value("source_page_url", std::string{});
  ad.slot = {j.value("slot_width", 0), j.value("slot_height", 0)};
  ad.view_count = j.value("view_count", std::int64_t{0});
  ad.click_count = j.value("click_count", std::int64_t{0});
  if (j.contains("has_people") && !j.at("has_people").is_null()) {
    ad.has_people = j.at("has_people").get<bool>();
  }
  ad.captured_at = parse_iso8601(j.at("captured_at").get<std::string>());
  ad.redacted = j.value("redacted", false);
  return ad;
}

Json to_json(const SwapDelivery& d) {
  Json j;
  j["delivery_id"] = d.id.str();
  j["recipient_id"] = d.recipient_id.str();
  j["source_ad_id"] = d.source_ad_id.str();
  j["source_owner_id"] = d.source_owner_id.str();
  j["slot_width"] = d.slot.width;
  j["slot_height"] = d.slot.height;
  j["tier"] = d.tier;
  j["served_at"] = format_iso8601(d.served_at);
  j["view_count"] = d.view_count;
  j["click_count"] = d.click_count;
  return j;
}

SwapDelivery delivery_from_json(const Json& j) {
  SwapDelivery d;
  d.id = DeliveryId(j.at("delivery_id").get<std::string>());
  d.recipient_id = ParticipantId(j.at("recipient_id").get<std::string>());
  d.source_ad_id = AdId(j.at("source_ad_id").get<std::string>());
  d.source_owner_id = ParticipantId(j.at("source_owner_id").get<std::string>());
  d.slot = {j.at("slot_width").get<int>(), j.at("slot_height").get<int>()};
  d.tier = j.value("tier", 0);
  d.served_at = parse_iso8601(j.at("served_at").get<std::string>());
  d.view_count = j.value("view_count", std::int64_t{0});
  d.click_count = j.value("click_count", std::int64_t{0});
  return d;
}

std::string export_participants_jsonl(const std::vector<Participant>& participants) {
  std::string out;
  for (const auto& p : participants) {
    out += to_json(p).dump();
    out += '\n';
  }
  return out;
}

}  // namespace adaudit
