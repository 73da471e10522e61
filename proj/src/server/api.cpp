#include "adaudit/server/api.hpp"

#include <fstream>

#include "adaudit/common/digest.hpp"
#include "adaudit/common/error.hpp"
#include "adaudit/pipeline/blob_store.hpp"
#include "adaudit/pipeline/jobs.hpp"

namespace adaudit::server {
namespace {

const Json& field(const Json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) {
    throw ValidationError(path + key, "required");
  }
  return obj.at(key);
}

std::string string_field(const Json& obj, const std::string& key, const std::string& path) {
  const Json& v = field(obj, key, path);
  if (!v.is_string()) throw ValidationError(path + key, "must be a string");
  return v.get<std::string>();
}

std::optional<std::string> optional_string(const Json& obj, const std::string& key,
                                           const std::string& path) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  if (!obj.at(key).is_string()) throw ValidationError(path + key, "must be a string");
  return obj.at(key).get<std::string>();
}

Instant instant_field(const Json& obj, const std::string& key, const std::string& path) {
  const auto text = string_field(obj, key, path);
  try {
    return parse_iso8601(text);
  } catch (const Error&) {
    throw ValidationError(path + key, "not an ISO-8601 UTC timestamp");
  }
}

Geometry geometry_from(const Json& v, const std::string& path) {
  if (!v.is_object() || !v.contains("width") || !v.contains("height") ||
      !v.at("width").is_number_integer() || !v.at("height").is_number_integer()) {
    throw ValidationError(path, "expected {width, height} integers");
  }
  return {v.at("width").get<int>(), v.at("height").get<int>()};
}

const Json& array_field(const Json& body, const std::string& key) {
  const Json& v = field(body, key, "");
  if (!v.is_array()) throw ValidationError(key, "must be an array");
  return v;
}

Json geometry_json(Geometry g) { return {{"width", g.width}, {"height", g.height}}; }

std::string error_code_name(ErrorCode c) { return std::string(to_string(c)); }

int parse_int(const std::map<std::string, std::string>& q, const std::string& key) {
  auto it = q.find(key);
  if (it == q.end()) throw ValidationError(key, "required");
  try {
    std::size_t used = 0;
    const int v = std::stoi(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ValidationError(key, "must be an integer");
  }
}

Json participant_ids(const std::vector<ParticipantId>& ids) {
  Json a = Json::array();
  for (const auto& id : ids) a.push_back(id.str());
  return a;
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kValidation: return 400;
    case ErrorCode::kUnauthorized: return 401;
    case ErrorCode::kRefused: return 403;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kConflict:
    case ErrorCode::kIllegalTransition:
    case ErrorCode::kPrecondition: return 409;
    case ErrorCode::kRankDeficient: return 422;
    case ErrorCode::kRetryable: return 503;
    case ErrorCode::kRedirectLoop:
    case ErrorCode::kTooManyRedirects:
    case ErrorCode::kAdapterFailure: return 502;
    case ErrorCode::kInvariantViolation: return 500;
  }
  return 500;
}

std::vector<IngestAd> ingest_batch_from_json(const Json& body) {
  std::vector<IngestAd> out;
  const Json& ads = array_field(body, "ads");
  for (std::size_t i = 0; i < ads.size(); ++i) {
    const Json& a = ads[i];
    const std::string at = "ads[" + std::to_string(i) + "].";
    if (!a.is_object()) throw ValidationError(at.substr(0, at.size() - 1), "must be an object");
    IngestAd ad;
    ad.client_ad_id = string_field(a, "client_ad_id", at);
    try {
      ad.payload_kind = parse_payload_kind(string_field(a, "payload_kind", at));
    } catch (const ValidationError&) {
      throw;
    } catch (const Error&) {
      throw ValidationError(at + "payload_kind", "must be image or text");
    }
    ad.image_url = optional_string(a, "image_url", at);
    ad.text = optional_string(a, "text", at);
    ad.target_url = string_field(a, "target_url", at);
    ad.source_page_url = string_field(a, "source_page_url", at);
    ad.slot = geometry_from(field(a, "slot", at), at + "slot");
    ad.captured_at = instant_field(a, "captured_at", at);
    out.push_back(std::move(ad));
  }
  return out;
}

std::vector<TelemetryEvent> events_from_json(const Json& body) {
  std::vector<TelemetryEvent> out;
  const Json& events = array_field(body, "events");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Json& e = events[i];
    const std::string at = "events[" + std::to_string(i) + "].";
    TelemetryEvent ev;
    ev.client_event_id = string_field(e, "client_event_id", at);
    try {
      ev.kind = parse_event_kind(string_field(e, "kind", at));
    } catch (const ValidationError&) {
      throw;
    } catch (const Error&) {
      throw ValidationError(at + "kind", "must be view or click");
    }
    const Json& ref = field(e, "ad_ref", at);
    if (!ref.is_object()) throw ValidationError(at + "ad_ref", "must be an object");
    ev.client_ad_id = optional_string(ref, "client_ad_id", at + "ad_ref.");
    if (auto d = optional_string(ref, "swap_delivery_id", at + "ad_ref.")) {
      ev.swap_delivery_id = DeliveryId(*d);
    }
    ev.occurred_at = instant_field(e, "occurred_at", at);
    out.push_back(std::move(ev));
  }
  return out;
}

Json swap_response_json(const SwapServed& served, const std::string& image_url) {
  const auto& d = served.delivery;
  const auto& ad = served.source;
  Json payload = {{"payload_kind", to_string(ad.payload_kind)}};
  payload["image_url"] = image_url.empty() ? Json() : Json(image_url);
  payload["text"] = ad.text ? Json(*ad.text) : Json();
  payload["target_url"] = ad.target_url;
  return {{"delivery",
           {{"swap_delivery_id", d.id.str()},
            {"slot", geometry_json(d.slot)},
            {"tier", d.tier},
            {"served_at", format_iso8601(d.served_at)}}},
          {"ad", payload}};
}

ApiRouter::ApiRouter(Study& study, ApiOptions options)
    : study_(study), options_(std::move(options)) {}

std::string ApiRouter::image_url_for(const AdRecord& ad) const {
  if (ad.stored_image_ref && options_.blobs) {
    return "/v1/images/" + ad.stored_image_ref->substr(ad.stored_image_ref->find(':') + 1);
  }
  return ad.image_url.value_or("");
}

ApiResponse ApiRouter::send(const ApiRequest& req) {
  ApiResponse res;
  const std::string now = format_iso8601(study_.clock().now());
  res.headers["X-Api-Version"] = std::string(kApiVersion);
  res.headers["X-Server-Time"] = now;
  auto envelope = [&](Json body) {
    Json out = {{"api_version", kApiVersion}, {"server_time", now}};
    for (auto& [k, v] : body.items()) out[k] = std::move(v);
    return out;
  };
  auto fail = [&](int status, const std::string& code, const std::string& message,
                  const std::string* field_path) {
    Json err = {{"code", code}, {"message", message}};
    if (field_path) err["field"] = *field_path;
    res.status = status;
    res.content_type = "application/json";
    res.body = envelope({{"error", err}}).dump();
  };
  try {
    if (req.method == "GET" && req.path == "/v1/export") {
      auto out = export_dataset(req);
      out.headers.insert(res.headers.begin(), res.headers.end());
      if (out.content_type == "application/json") out.body = envelope(Json::parse(out.body)).dump();
      return out;
    }
    if (req.method == "GET" && req.path.rfind("/v1/images/", 0) == 0) {
      auto out = image(req.path.substr(11));
      out.headers.insert(res.headers.begin(), res.headers.end());
      return out;
    }
    Json body = dispatch(req, res);
    res.body = envelope(std::move(body)).dump();
  } catch (const ValidationError& e) {
    fail(400, "validation", e.what(), &e.field());
  } catch (const Error& e) {
    fail(http_status(e.code()), error_code_name(e.code()), e.what(), nullptr);
  } catch (const Json::exception& e) {
    fail(400, "invalid_argument", std::string("malformed body: ") + e.what(), nullptr);
  }
  return res;
}

Json ApiRouter::dispatch(const ApiRequest& req, ApiResponse& res) {
  const auto body = [&]() -> Json {
    if (req.body.empty()) return Json::object();
    Json j = Json::parse(req.body);
    if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "body must be a JSON object");
    return j;
  };
  const auto& m = req.method;
  const auto& p = req.path;

  if (m == "POST" && p == "/v1/register") {
    const Json b = body();
    const std::string token =
        study_.register_client(string_field(b, "code", ""), b.value("instance", Json::object()));
    return {{"participant_id", study_.authenticate(token).str()}, {"token", token}};
  }
  if (m == "POST" && p == "/v1/ads") {
    const auto ack = study_.ingest_ads(req.bearer, ingest_batch_from_json(body()));
    Json ids = Json::array();
    for (const auto& id : ack.ad_ids) ids.push_back(id.str());
    return {{"stored", ack.stored}, {"duplicates", ack.duplicates}, {"ad_ids", ids}};
  }
  if (m == "GET" && p == "/v1/ads") {
    Json rows = Json::array();
    for (const auto& ad : study_.participant_ads(req.bearer)) rows.push_back(to_json(ad));
    return {{"ads", rows}};
  }
  if (m == "POST" && p == "/v1/events") {
    const auto ack = study_.ingest_events(req.bearer, events_from_json(body()));
    Json errors = Json::array();
    for (const auto& e : ack.errors) {
      errors.push_back({{"client_event_id", e.client_event_id}, {"error", e.error}});
    }
    return {{"applied", ack.applied},
            {"duplicates", ack.duplicates},
            {"dropped", ack.dropped},
            {"errors", errors}};
  }
  if (m == "GET" && p == "/v1/swap") {
    const Geometry slot{parse_int(req.query, "w"), parse_int(req.query, "h")};
    const auto served = study_.serve_swap(req.bearer, slot);
    return swap_response_json(served, image_url_for(served.source));
  }
  if (m == "POST" && p == "/v1/redact") {
    const Json b = body();
    std::vector<AdId> ids;
    for (const auto& v : array_field(b, "ad_ids")) {
      if (!v.is_string()) throw ValidationError("ad_ids", "must be strings");
      ids.emplace_back(v.get<std::string>());
    }
    return {{"redacted", study_.redact(req.bearer, ids).count}};
  }
  if (m == "GET" && p == "/v1/ruleset") {
    if (options_.ruleset_document.empty()) {
      throw Error(ErrorCode::kNotFound, "no ruleset configured");
    }
    study_.authenticate(req.bearer);
    res.headers["ETag"] = "\"" + sha256_hex(options_.ruleset_document) + "\"";
    return {{"ruleset", Json::parse(options_.ruleset_document)}};
  }
  if (m == "GET" && p == "/v1/survey") {
    // Resolved up front: the resolver runs while the study lock is held.
    std::map<AdId, std::string> urls;
    for (const auto& ad : study_.ads()) urls.emplace(ad.id, image_url_for(ad));
    const auto resolver = [&](const AdId& id) -> std::string {
      auto it = urls.find(id);
      return it == urls.end() ? std::string() : it->second;
    };
    return {{"survey", study_.survey_document(req.bearer, resolver)}};
  }
  if (m == "POST" && p == "/v1/survey") {
    const Json b = body();
    const SurveyId id(string_field(b, "survey_id", ""));
    study_.submit_survey(req.bearer, id, survey::answers_from_json(field(b, "answers", "")));
    return {{"survey_id", id.str()}, {"status", "submitted"}};
  }
  if (p.rfind("/v1/admin/", 0) == 0) {
    study_.require_auditor(req.bearer);
    return admin(req, m == "POST" ? body() : Json::object());
  }
  throw Error(ErrorCode::kNotFound, "no route for " + m + " " + p);
}

Json ApiRouter::admin(const ApiRequest& req, const Json& b) {
  const auto& m = req.method;
  const std::string route = req.path.substr(std::string("/v1/admin/").size());
  const auto pid = [&] { return ParticipantId(string_field(b, "participant_id", "")); };

  if (m == "POST" && route == "enroll") {
    const auto id = study_.enroll(demographics_from_json(field(b, "demographics", "")));
    return {{"participant_id", id.str()}};
  }
  if (m == "POST" && route == "cohort") {
    const auto quota = field(b, "quota", "").get<std::int64_t>();
    if (quota < 0) throw ValidationError("quota", "must be nonnegative");
    const auto seed = b.value("seed", study_.config().rng_seed);
    return {{"selected", participant_ids(study_.select_cohort(static_cast<std::size_t>(quota), seed))}};
  }
  if (m == "POST" && route == "onboard") {
    const auto id = pid();
    return {{"participant_id", id.str()}, {"onboarding_code", study_.grant_onboarding(id)}};
  }
  if (m == "POST" && route == "reconnect") {
    const auto id = pid();
    return {{"participant_id", id.str()}, {"reconnect_code", study_.issue_reconnect_code(id)}};
  }
  if (m == "POST" && route == "start") {
    const auto r = study_.start_study();
    Json pairs = Json::array();
    for (const auto& [a, c] : r.pairing.pairs) pairs.push_back(Json::array({a.str(), c.str()}));
    return {{"pairs", pairs},
            {"unpaired", r.pairing.unpaired ? Json(r.pairing.unpaired->str()) : Json()},
            {"started", participant_ids(r.started)}};
  }
  if (m == "POST" && route == "tick") {
    Json out = Json::array();
    for (const auto& e : study_.tick()) {
      out.push_back({{"participant_id", e.participant.str()},
                     {"from", to_string(e.from)},
                     {"to", to_string(e.to)},
                     {"reminder", e.reminder},
                     {"gate_failure", e.gate_failure ? Json(*e.gate_failure) : Json()}});
    }
    return {{"transitions", out}};
  }
  if (m == "POST" && route == "surveys/release") {
    const auto phase = survey::parse_survey_phase(string_field(b, "phase", ""));
    return {{"released", participant_ids(study_.release_surveys(phase))}};
  }
  if (m == "POST" && route == "offboard") {
    const auto id = pid();
    study_.offboard(id);
    return {{"participant_id", id.str()}, {"state", "offboarded"}};
  }
  if (m == "GET" && route == "overview") return {{"overview", to_json(study_.overview())}};
  if (m == "GET" && route == "participants") {
    Json rows = Json::array();
    for (const auto& p : study_.participants()) rows.push_back(to_json(p));
    return {{"participants", rows}};
  }
  if (m == "GET" && route == "ledger") return {{"ledger", to_json(study_.ledger())}};
  if (m == "POST" && route == "pipeline") {
    if (!options_.pipeline) throw Error(ErrorCode::kNotFound, "pipeline not configured");
    const auto window = parse_iso_window(string_field(b, "window", ""));
    return {{"run", pipeline::to_json(options_.pipeline->run(string_field(b, "job", ""), window))}};
  }
  if (m == "POST" && route == "snapshot") {
    if (!options_.snapshot_path) throw Error(ErrorCode::kNotFound, "snapshot path not configured");
    const auto& path = *options_.snapshot_path;
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp);
      out << study_.snapshot().dump();
      if (!out) throw Error(ErrorCode::kRetryable, "cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
    return {{"snapshot", path.string()}};
  }
  throw Error(ErrorCode::kNotFound, "no route for " + m + " " + req.path);
}

ApiResponse ApiRouter::export_dataset(const ApiRequest& req) {
  ExportSelector sel;
  const auto get = [&](const std::string& k) -> std::optional<std::string> {
    auto it = req.query.find(k);
    if (it == req.query.end() || it->second.empty()) return std::nullopt;
    return it->second;
  };
  if (auto t = get("table")) sel.table = parse_export_table(*t);
  if (auto ph = get("phase")) sel.phase = parse_ad_phase(*ph);
  if (auto pid = get("participant")) sel.participant = ParticipantId(*pid);
  if (auto s = get("stubs")) {
    if (*s != "true" && *s != "false") throw ValidationError("stubs", "must be true or false");
    sel.include_redacted_stubs = *s == "true";
  }
  const auto format = get("format").value_or("json");
  if (format != "json" && format != "jsonl") throw ValidationError("format", "must be json or jsonl");

  const auto rows = study_.export_rows(req.bearer, sel);
  ApiResponse res;
  res.headers["X-Row-Count"] = std::to_string(rows.size());
  if (format == "jsonl") {
    res.content_type = "application/x-ndjson";
    for (const auto& r : rows) res.body += r.dump() + "\n";
  } else {
    Json body = {{"table", to_string(sel.table)}, {"count", rows.size()}, {"rows", rows}};
    res.body = body.dump();
  }
  return res;
}

ApiResponse ApiRouter::image(const std::string& hex) {
  if (!options_.blobs) throw Error(ErrorCode::kNotFound, "image store not configured");
  const std::string ref = "sha256:" + hex;
  bool live = false;
  for (const auto& ad : study_.ads()) {
    if (ad.stored_image_ref == ref) {
      live = true;
      break;
    }
  }
  auto bytes = live ? options_.blobs->get(ref) : std::nullopt;
  if (!bytes) throw Error(ErrorCode::kNotFound, "no such image");
  ApiResponse res;
  res.content_type = "application/octet-stream";
  res.body = std::move(*bytes);
  return res;
}

}  // namespace adaudit::server
