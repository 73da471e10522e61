#include "adaudit/server/study.hpp"

#include <openssl/rand.h>

#include <algorithm>
#include <cstdio>

#include "adaudit/common/digest.hpp"
#include "adaudit/common/error.hpp"
#include "adaudit/core/cohort.hpp"
#include "adaudit/core/redaction.hpp"

namespace adaudit::server {
namespace {

using survey::SurveyPhase;

std::string hex_bytes(const unsigned char* data, std::size_t n) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out += kHex[data[i] >> 4];
    out += kHex[data[i] & 0xf];
  }
  return out;
}

std::string padded(const char* prefix, std::int64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%08lld", prefix, static_cast<long long>(n));
  return buf;
}

std::string hash_secret(const std::string& secret) { return sha256_hex(secret); }

std::optional<AdPhase> collecting_phase(LifecycleState s) {
  if (s == LifecycleState::kObservational) return AdPhase::kObservational;
  if (s == LifecycleState::kIntervention) return AdPhase::kInterventionOriginal;
  return std::nullopt;
}

std::optional<SurveyPhase> survey_phase_of(LifecycleState s) {
  if (s == LifecycleState::kMidpointSurvey) return SurveyPhase::kMidpoint;
  if (s == LifecycleState::kFinalSurvey) return SurveyPhase::kFinal;
  return std::nullopt;
}

/// State the participant was in at `t`, from the entry timestamps.
std::optional<LifecycleState> state_at(const Participant& p, Instant t) {
  std::optional<LifecycleState> best;
  Instant best_at{};
  for (const auto& [state, at] : p.entered_at) {
    if (at <= t && (!best || at >= best_at)) {
      best = state;
      best_at = at;
    }
  }
  return best;
}

[[noreturn]] void violation(const std::string& what) {
  throw Error(ErrorCode::kInvariantViolation, what);
}

void validate_ingest(const std::vector<IngestAd>& batch) {
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& a = batch[i];
    const std::string at = "ads[" + std::to_string(i) + "].";
    if (a.client_ad_id.empty()) throw ValidationError(at + "client_ad_id", "required");
    if (a.payload_kind == PayloadKind::kImage && (!a.image_url || a.image_url->empty())) {
      throw ValidationError(at + "image_url", "required for image ads");
    }
    if (a.payload_kind == PayloadKind::kText && (!a.text || a.text->empty())) {
      throw ValidationError(at + "text", "required for text ads");
    }
    if (a.target_url.empty()) throw ValidationError(at + "target_url", "required");
    if (a.source_page_url.empty()) throw ValidationError(at + "source_page_url", "required");
    if (a.slot.width <= 0 || a.slot.height <= 0) {
      throw ValidationError(at + "slot", "width and height must be positive");
    }
  }
}

}  // namespace

std::string SecureTokens::next() {
  unsigned char buf[32];
  if (RAND_bytes(buf, sizeof buf) != 1) throw Error(ErrorCode::kRetryable, "RAND_bytes failed");
  return hex_bytes(buf, sizeof buf);
}

std::string SeededTokens::next() {
  std::lock_guard lock(mu_);
  unsigned char buf[32];
  for (std::size_t i = 0; i < sizeof buf; i += 8) {
    const std::uint64_t v = rng_();
    for (int k = 0; k < 8; ++k) buf[i + k] = static_cast<unsigned char>(v >> (8 * k));
  }
  return hex_bytes(buf, sizeof buf);
}

std::string_view to_string(EventKind k) { return k == EventKind::kView ? "view" : "click"; }

EventKind parse_event_kind(std::string_view text) {
  if (text == "view") return EventKind::kView;
  if (text == "click") return EventKind::kClick;
  throw Error(ErrorCode::kInvalidArgument, "unknown event kind: " + std::string(text));
}

std::string_view to_string(ExportTable t) {
  switch (t) {
    case ExportTable::kAds: return "ads";
    case ExportTable::kDeliveries: return "deliveries";
    case ExportTable::kParticipants: return "participants";
    case ExportTable::kSurveys: return "surveys";
  }
  return "ads";
}

ExportTable parse_export_table(std::string_view text) {
  for (auto t : {ExportTable::kAds, ExportTable::kDeliveries, ExportTable::kParticipants,
                 ExportTable::kSurveys}) {
    if (to_string(t) == text) return t;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown export table: " + std::string(text));
}

Json to_json(const Ledger& l) {
  return {{"ads_ingested", l.ads_ingested},     {"ads_stored", l.ads_stored},
          {"ads_duplicate", l.ads_duplicate},   {"ads_redacted", l.ads_redacted},
          {"events_received", l.events_received}, {"events_applied", l.events_applied},
          {"events_duplicate", l.events_duplicate}, {"events_dropped", l.events_dropped},
          {"events_rejected", l.events_rejected}, {"swaps_served", l.swaps_served}};
}

Ledger ledger_from_json(const Json& j) {
  Ledger l;
  l.ads_ingested = j.at("ads_ingested").get<std::int64_t>();
  l.ads_stored = j.at("ads_stored").get<std::int64_t>();
  l.ads_duplicate = j.at("ads_duplicate").get<std::int64_t>();
  l.ads_redacted = j.at("ads_redacted").get<std::int64_t>();
  l.events_received = j.at("events_received").get<std::int64_t>();
  l.events_applied = j.at("events_applied").get<std::int64_t>();
  l.events_duplicate = j.at("events_duplicate").get<std::int64_t>();
  l.events_dropped = j.at("events_dropped").get<std::int64_t>();
  l.events_rejected = j.at("events_rejected").get<std::int64_t>();
  l.swaps_served = j.at("swaps_served").get<std::int64_t>();
  return l;
}

Json to_json(const Overview& o) {
  Json states = Json::object();
  for (const auto& [s, n] : o.participants_by_state) states[std::string(to_string(s))] = n;
  Json phases = Json::object();
  for (const auto& [p, n] : o.ads_by_phase) phases[std::string(to_string(p))] = n;
  auto rate = [](std::int64_t done, std::int64_t total) -> Json {
    return total > 0 ? Json(static_cast<double>(done) / static_cast<double>(total)) : Json();
  };
  return {{"participants_by_state", states},
          {"ads_by_phase", phases},
          {"deliveries", o.deliveries},
          {"surveys",
           {{"midpoint",
             {{"generated", o.surveys_generated[0]},
              {"submitted", o.surveys_submitted[0]},
              {"completion_rate", rate(o.surveys_submitted[0], o.surveys_generated[0])}}},
            {"final",
             {{"generated", o.surveys_generated[1]},
              {"submitted", o.surveys_submitted[1]},
              {"completion_rate", rate(o.surveys_submitted[1], o.surveys_generated[1])}}}}},
          {"ledger", to_json(o.ledger)}};
}

Study::Study(StudyConfig config, const Clock& clock, Notifier& notifier,
             std::shared_ptr<TokenSource> tokens)
    : config_(std::move(config)), clock_(clock), notifier_(notifier), tokens_(std::move(tokens)) {
  config_.validate();
}

// --- auditor actions -------------------------------------------------------

void Study::add_auditor_token(const std::string& token) {
  if (token.size() < 16) {
    throw Error(ErrorCode::kInvalidArgument, "auditor token must be at least 16 characters");
  }
  std::lock_guard lock(mu_);
  auditor_hashes_.insert(hash_secret(token));
}

void Study::require_auditor(const std::string& token) const {
  std::lock_guard lock(mu_);
  if (token.empty() || !auditor_hashes_.contains(hash_secret(token))) {
    throw Error(ErrorCode::kUnauthorized, "auditor credential required");
  }
}

ParticipantId Study::enroll(const Demographics& d) {
  validate_demographics(d, config_.vocabulary);
  std::lock_guard lock(mu_);
  Participant p;
  p.id = ParticipantId(padded("p-", next_participant_++));
  p.demographics = d;
  p.entered_at[LifecycleState::kWaitlisted] = clock_.now();
  auto id = p.id;
  participants_.emplace(id, std::move(p));
  return id;
}

std::vector<ParticipantId> Study::select_cohort(std::size_t quota, std::uint64_t seed) {
  std::lock_guard lock(mu_);
  std::vector<Participant> waitlist;
  for (const auto& [id, p] : participants_) {
    if (p.state == LifecycleState::kWaitlisted) waitlist.push_back(p);
  }
  const auto chosen = select_balanced_cohort(waitlist, std::min(quota, waitlist.size()), seed);
  std::vector<ParticipantId> out;
  const Instant now = clock_.now();
  for (const auto& c : chosen) {
    transition(participants_.at(c.id), LifecycleState::kSelected, now);
    out.push_back(c.id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string Study::new_code_locked(const ParticipantId& p, bool reconnect) {
  const std::string code = tokens_->next().substr(0, 20);
  codes_[hash_secret(code)] = Code{p, reconnect, false};
  return code;
}

std::string Study::grant_onboarding(const ParticipantId& id) {
  std::lock_guard lock(mu_);
  Participant& p = participant_locked(id);
  const Instant now = clock_.now();
  transition(p, LifecycleState::kOnboarding, now);
  const std::string code = new_code_locked(id, false);
  notifier_.send({id, NotificationKind::kOnboardingGranted, now, ""});
  return code;
}

std::string Study::issue_reconnect_code(const ParticipantId& id) {
  std::lock_guard lock(mu_);
  const Participant& p = participant_locked(id);
  if (is_terminal(p.state)) {
    throw Error(ErrorCode::kRefused, "participant " + id.str() + " has left the study");
  }
  if (!current_token_.contains(id)) {
    throw Error(ErrorCode::kPrecondition, "participant " + id.str() + " has never registered");
  }
  return new_code_locked(id, true);
}

StartResult Study::start_study() {
  std::lock_guard lock(mu_);
  std::vector<ParticipantId> ready;
  for (const auto& [id, p] : participants_) {
    const bool registered = p.milestones_completed.contains(Milestone::kOnboarding);
    if (registered && !p.partner_id && !p.excluded_from_intervention &&
        (p.state == LifecycleState::kOnboarding || p.state == LifecycleState::kObservational)) {
      ready.push_back(id);
    }
  }
  if (ready.size() < 2) {
    throw Error(ErrorCode::kPrecondition,
                "need at least 2 registered participants to start, have " +
                    std::to_string(ready.size()));
  }
  StartResult out;
  out.pairing = assign_swap_pairs(ready, Rng::derive(config_.rng_seed, "pairing")());
  std::vector<Participant*> ptrs;
  for (const auto& id : ready) ptrs.push_back(&participants_.at(id));
  apply_pairing(out.pairing, ptrs);
  const Instant now = clock_.now();
  for (auto* p : ptrs) {
    if (p->state == LifecycleState::kOnboarding) {
      transition(*p, LifecycleState::kObservational, now);
      out.started.push_back(p->id);
    }
  }
  started_ = true;
  return out;
}

std::vector<TickEvent> Study::tick() {
  std::lock_guard lock(mu_);
  const Instant now = clock_.now();
  std::vector<TickEvent> events;
  for (auto& [id, p] : participants_) {
    if (is_terminal(p.state) || p.state == LifecycleState::kWaitlisted ||
        p.state == LifecycleState::kSelected) {
      continue;
    }
    if (p.state == LifecycleState::kOnboarding && !started_) continue;
    PhaseActivity activity;
    if (auto phase = collecting_phase(p.state)) {
      activity.ads_in_phase = count_unredacted_locked(id, *phase);
    }
    if (p.partner_id) {
      activity.partner_pool_size = count_unredacted_locked(*p.partner_id, AdPhase::kObservational);
    }
    const LifecycleState from = p.state;
    const auto out = advance_phase(p, now, config_, activity);
    if (out.reminder_needed) {
      notifier_.send({id, NotificationKind::kZeroAdsReminder, now, std::string(to_string(from))});
    }
    if (!out.changed && !out.reminder_needed) continue;
    TickEvent ev{id, from, p.state, out.reminder_needed, std::nullopt};
    if (out.gate && !out.gate->pass) ev.gate_failure = out.gate->reason;
    events.push_back(ev);
    if (from == p.state) continue;
    if (auto sp = survey_phase_of(p.state)) {
      generate_survey_locked(p, *sp, now);
      notifier_.send({id, NotificationKind::kSurveyReleased, now, std::string(to_string(*sp))});
    } else if (p.state == LifecycleState::kOffboarded) {
      notifier_.send({id, NotificationKind::kOffboarded, now, ""});
    }
  }
  return events;
}

std::vector<ParticipantId> Study::release_surveys(SurveyPhase phase) {
  std::lock_guard lock(mu_);
  const Instant now = clock_.now();
  const auto state = phase == SurveyPhase::kMidpoint ? LifecycleState::kMidpointSurvey
                                                     : LifecycleState::kFinalSurvey;
  std::vector<ParticipantId> out;
  for (auto& [id, p] : participants_) {
    if (p.state != state) continue;
    generate_survey_locked(p, phase, now);
    notifier_.send({id, NotificationKind::kSurveyReleased, now, std::string(to_string(phase))});
    out.push_back(id);
  }
  return out;
}

void Study::offboard(const ParticipantId& id) {
  std::lock_guard lock(mu_);
  Participant& p = participant_locked(id);
  const Instant now = clock_.now();
  transition(p, LifecycleState::kOffboarded, now);
  notifier_.send({id, NotificationKind::kOffboarded, now, ""});
}

// --- client operations -----------------------------------------------------

std::string Study::register_client(const std::string& code, const Json& instance_info) {
  std::lock_guard lock(mu_);
  auto it = codes_.find(hash_secret(code));
  if (code.empty() || it == codes_.end()) {
    throw Error(ErrorCode::kUnauthorized, "unknown onboarding code");
  }
  Code& c = it->second;
  if (c.used) throw Error(ErrorCode::kRefused, "onboarding code already used");
  Participant& p = participant_locked(c.participant);
  if (is_terminal(p.state)) {
    throw Error(ErrorCode::kRefused, "participant " + p.id.str() + " has left the study");
  }
  if (!c.reconnect && p.state != LifecycleState::kOnboarding) {
    throw Error(ErrorCode::kRefused, "participant " + p.id.str() + " is not onboarding");
  }
  c.used = true;
  if (auto old = current_token_.find(p.id); old != current_token_.end()) {
    token_owner_.erase(old->second);
  }
  const std::string token = tokens_->next();
  const std::string h = hash_secret(token);
  token_owner_[h] = p.id;
  current_token_[p.id] = h;
  instance_info_[p.id] = instance_info;
  if (!c.reconnect) {
    p.milestones_completed.insert(Milestone::kOnboarding);
    p.onboarded_at = clock_.now();
  }
  return token;
}

ParticipantId Study::authenticate(const std::string& token) const {
  std::lock_guard lock(mu_);
  return authenticate_locked(token);
}

ParticipantId Study::authenticate_locked(const std::string& token) const {
  auto it = token.empty() ? token_owner_.end() : token_owner_.find(hash_secret(token));
  if (it == token_owner_.end()) throw Error(ErrorCode::kUnauthorized, "invalid or revoked token");
  return it->second;
}

IngestAck Study::ingest_ads(const std::string& token, const std::vector<IngestAd>& batch) {
  validate_ingest(batch);
  std::lock_guard lock(mu_);
  const ParticipantId pid = authenticate_locked(token);
  Participant& p = participant_locked(pid);
  const auto phase = collecting_phase(p.state);
  if (!phase) {
    throw Error(ErrorCode::kRefused, "participant " + pid.str() + " is not collecting ads in state " +
                                         std::string(to_string(p.state)));
  }
  const Instant now = clock_.now();
  const Instant phase_start = p.entered_at.at(p.state);
  IngestAck ack;
  ledger_.ads_ingested += static_cast<std::int64_t>(batch.size());
  for (const auto& in : batch) {
    const auto key = std::make_pair(pid, in.client_ad_id);
    if (auto it = client_ad_index_.find(key); it != client_ad_index_.end()) {
      ++ack.duplicates;
      ack.ad_ids.push_back(it->second);
      continue;
    }
    AdRecord ad;
    ad.id = AdId(padded("ad-", next_ad_++));
    ad.participant_id = pid;
    ad.client_ad_id = in.client_ad_id;
    ad.phase = *phase;
    ad.payload_kind = in.payload_kind;
    ad.image_url = in.image_url;
    ad.text = in.text;
    ad.target_url = in.target_url;
    ad.source_page_url = in.source_page_url;
    ad.slot = in.slot;
    // The phase tag follows the server-side state, so the capture time is
    // kept inside that phase.
    ad.captured_at = std::clamp(in.captured_at, phase_start, now);
    client_ad_index_.emplace(key, ad.id);
    ads_by_owner_[pid].push_back(ad.id);
    ack.ad_ids.push_back(ad.id);
    auto id = ad.id;
    ads_.emplace(std::move(id), std::move(ad));
    ++ack.stored;
  }
  ledger_.ads_stored += ack.stored;
  ledger_.ads_duplicate += ack.duplicates;
  if (*phase == AdPhase::kObservational && ack.stored > 0 && p.partner_id) {
    pools_.erase(*p.partner_id);
  }
  return ack;
}

EventAck Study::ingest_events(const std::string& token, const std::vector<TelemetryEvent>& events) {
  std::lock_guard lock(mu_);
  const ParticipantId pid = authenticate_locked(token);
  EventAck ack;
  for (const auto& ev : events) {
    ++ledger_.events_received;
    auto reject = [&](const std::string& why) {
      ack.errors.push_back({ev.client_event_id, why});
      ++ledger_.events_rejected;
    };
    if (ev.client_event_id.empty()) {
      reject("client_event_id required");
      continue;
    }
    const auto key = std::make_pair(pid, ev.client_event_id);
    if (seen_events_.contains(key)) {
      ++ack.duplicates;
      ++ledger_.events_duplicate;
      continue;
    }
    std::int64_t* views = nullptr;
    std::int64_t* clicks = nullptr;
    bool redacted = false;
    if (ev.client_ad_id && !ev.swap_delivery_id) {
      auto it = client_ad_index_.find({pid, *ev.client_ad_id});
      if (it == client_ad_index_.end()) {
        reject("unknown ad_ref");
        continue;
      }
      AdRecord& ad = ads_.at(it->second);
      redacted = ad.redacted;
      views = &ad.view_count;
      clicks = &ad.click_count;
    } else if (ev.swap_delivery_id && !ev.client_ad_id) {
      auto it = deliveries_.find(*ev.swap_delivery_id);
      if (it == deliveries_.end() || it->second.recipient_id != pid) {
        reject("unknown ad_ref");
        continue;
      }
      views = &it->second.view_count;
      clicks = &it->second.click_count;
    } else {
      reject("ad_ref must name exactly one of client_ad_id, swap_delivery_id");
      continue;
    }
    seen_events_.insert(key);
    if (redacted) {
      ++ack.dropped;
      ++ledger_.events_dropped;
      continue;
    }
    ++*(ev.kind == EventKind::kView ? views : clicks);
    ++ack.applied;
    ++ledger_.events_applied;
  }
  return ack;
}

const intervention::SwapPool& Study::pool_locked(const Participant& recipient) {
  auto it = pools_.find(recipient.id);
  if (it == pools_.end()) {
    const auto partner_ads = ads_of_locked(*recipient.partner_id);
    it = pools_.emplace(recipient.id, intervention::eligible_pool(recipient, partner_ads)).first;
  }
  return it->second;
}

SwapServed Study::serve_swap(const std::string& token, Geometry slot) {
  if (slot.width <= 0 || slot.height <= 0) {
    throw ValidationError("slot", "width and height must be positive");
  }
  std::lock_guard lock(mu_);
  const ParticipantId pid = authenticate_locked(token);
  const Participant& p = participant_locked(pid);
  if (p.state != LifecycleState::kIntervention || !p.partner_id || p.excluded_from_intervention) {
    throw Error(ErrorCode::kRefused, "participant " + pid.str() +
                                         " is not receiving swap ads in state " +
                                         std::string(to_string(p.state)));
  }
  const auto& pool = pool_locked(p);
  if (pool.empty()) {
    throw Error(ErrorCode::kPrecondition, "swap partner of " + pid.str() + " has no eligible ads");
  }
  const DeliveryId did(padded("dl-", next_delivery_));
  auto rng = Rng::derive(config_.rng_seed, "swap/" + did.str());
  const auto pick = intervention::select_swap_ad(pool, slot, rng);
  const AdRecord& source = ads_.at(pick.ad);
  if (source.participant_id != *p.partner_id || source.phase != AdPhase::kObservational ||
      source.redacted) {
    violation("swap soundness: " + source.id.str() + " is not in the partner pool of " + pid.str());
  }
  ++next_delivery_;
  SwapDelivery d;
  d.id = did;
  d.recipient_id = pid;
  d.source_ad_id = source.id;
  d.source_owner_id = source.participant_id;
  d.slot = slot;
  d.tier = static_cast<int>(pick.tier);
  d.served_at = clock_.now();
  deliveries_.emplace(did, d);
  deliveries_by_recipient_[pid].push_back(did);
  ++ledger_.swaps_served;
  return {d, source, pick.candidates};
}

RedactionReceipt Study::redact(const std::string& token, const std::vector<AdId>& ids) {
  std::lock_guard lock(mu_);
  const ParticipantId pid = authenticate_locked(token);
  Participant& p = participant_locked(pid);
  std::vector<AdRecord*> targets;
  for (const auto& id : ids) {
    auto it = ads_.find(id);
    if (it == ads_.end()) throw Error(ErrorCode::kNotFound, "unknown ad " + id.str());
    targets.push_back(&it->second);
  }
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  const auto receipt = redact_ads(p, targets);
  ledger_.ads_redacted += receipt.count;
  if (receipt.count > 0 && p.partner_id) pools_.erase(*p.partner_id);
  return receipt;
}

std::vector<AdRecord> Study::participant_ads(const std::string& token) const {
  std::lock_guard lock(mu_);
  const ParticipantId pid = authenticate_locked(token);
  std::vector<AdRecord> out;
  for (const auto& ad : ads_of_locked(pid)) {
    if (!ad.redacted) out.push_back(ad);
  }
  return out;
}

void Study::generate_survey_locked(Participant& p, SurveyPhase phase, Instant now) {
  const auto own = ads_of_locked(p.id);
  const auto partner = p.partner_id ? ads_of_locked(*p.partner_id) : std::vector<AdRecord>{};
  std::vector<SwapDelivery> delivered;
  if (auto it = deliveries_by_recipient_.find(p.id); it != deliveries_by_recipient_.end()) {
    for (const auto& d : it->second) delivered.push_back(deliveries_.at(d));
  }
  survey::SurveyInputs in{&p, own, partner, delivered};
  surveys_.pregenerate(in, phase, config_, now);
}

Json Study::survey_document(const std::string& token, const survey::ImageResolver& image_of) {
  std::lock_guard lock(mu_);
  const ParticipantId pid = authenticate_locked(token);
  Participant& p = participant_locked(pid);
  const auto phase = survey_phase_of(p.state);
  if (!phase) {
    throw Error(ErrorCode::kNotFound,
                "no survey open for " + pid.str() + " in state " + std::string(to_string(p.state)));
  }
  generate_survey_locked(p, *phase, clock_.now());
  return survey::survey_document(*surveys_.find(pid, *phase), image_of);
}

void Study::submit_survey(const std::string& token, const SurveyId& id,
                          const survey::SurveyAnswers& answers) {
  std::lock_guard lock(mu_);
  const ParticipantId pid = authenticate_locked(token);
  surveys_.submit(id, answers, participant_locked(pid), clock_.now());
}

// --- reads -----------------------------------------------------------------

std::vector<Json> Study::export_rows(const std::string& auditor_token,
                                     const ExportSelector& sel) const {
  require_auditor(auditor_token);
  std::lock_guard lock(mu_);
  std::vector<Json> rows;
  const auto wanted = [&](const ParticipantId& id) {
    return !sel.participant || *sel.participant == id;
  };
  switch (sel.table) {
    case ExportTable::kAds:
      for (const auto& [id, ad] : ads_) {
        if (!wanted(ad.participant_id) || (sel.phase && ad.phase != *sel.phase)) continue;
        if (ad.redacted && !sel.include_redacted_stubs) continue;
        rows.push_back(to_json(ad));
      }
      break;
    case ExportTable::kDeliveries:
      for (const auto& [id, d] : deliveries_) {
        if (wanted(d.recipient_id)) rows.push_back(to_json(d));
      }
      break;
    case ExportTable::kParticipants:
      for (const auto& [id, p] : participants_) {
        if (wanted(id)) rows.push_back(to_json(p));
      }
      break;
    case ExportTable::kSurveys:
      for (const auto* s : surveys_.all()) {
        if (wanted(s->participant_id)) rows.push_back(survey::to_json(*s));
      }
      break;
  }
  return rows;
}

Overview Study::overview() const {
  std::lock_guard lock(mu_);
  Overview o;
  for (const auto& [id, p] : participants_) ++o.participants_by_state[p.state];
  for (const auto& [id, ad] : ads_) {
    if (!ad.redacted) ++o.ads_by_phase[ad.phase];
  }
  o.deliveries = static_cast<std::int64_t>(deliveries_.size());
  for (const auto* s : surveys_.all()) {
    const int k = s->phase == SurveyPhase::kMidpoint ? 0 : 1;
    ++o.surveys_generated[k];
    if (s->submitted_at) ++o.surveys_submitted[k];
  }
  o.ledger = ledger_;
  return o;
}

Ledger Study::ledger() const {
  std::lock_guard lock(mu_);
  return ledger_;
}

std::optional<Participant> Study::participant(const ParticipantId& id) const {
  std::lock_guard lock(mu_);
  auto it = participants_.find(id);
  if (it == participants_.end()) return std::nullopt;
  return it->second;
}

std::vector<Participant> Study::participants() const {
  std::lock_guard lock(mu_);
  std::vector<Participant> out;
  for (const auto& [id, p] : participants_) out.push_back(p);
  return out;
}

std::vector<AdRecord> Study::ads() const {
  std::lock_guard lock(mu_);
  std::vector<AdRecord> out;
  for (const auto& [id, ad] : ads_) out.push_back(ad);
  return out;
}

std::vector<SwapDelivery> Study::deliveries() const {
  std::lock_guard lock(mu_);
  std::vector<SwapDelivery> out;
  for (const auto& [id, d] : deliveries_) out.push_back(d);
  return out;
}

std::vector<survey::SurveyInstance> Study::surveys() const {
  std::lock_guard lock(mu_);
  std::vector<survey::SurveyInstance> out;
  for (const auto* s : surveys_.all()) out.push_back(*s);
  return out;
}

std::int64_t Study::exportable_ads() const {
  std::lock_guard lock(mu_);
  return std::count_if(ads_.begin(), ads_.end(), [](const auto& kv) { return !kv.second.redacted; });
}

void Study::check_invariants() const {
  std::lock_guard lock(mu_);
  const auto& l = ledger_;
  std::int64_t redacted = 0;
  std::map<ParticipantId, std::int64_t> redacted_by_owner;
  for (const auto& [id, ad] : ads_) {
    if (ad.view_count < 0 || ad.click_count < 0) violation("negative counter on " + id.str());
    if (ad.redacted) {
      ++redacted;
      ++redacted_by_owner[ad.participant_id];
    }
    const Participant& owner = participants_.at(ad.participant_id);
    const auto state = state_at(owner, ad.captured_at);
    const auto expected = state ? collecting_phase(*state) : std::nullopt;
    if (!expected || *expected != ad.phase) {
      violation("phase correctness: " + id.str() + " tagged " + std::string(to_string(ad.phase)));
    }
  }
  const auto exportable = static_cast<std::int64_t>(ads_.size()) - redacted;
  if (l.ads_ingested != l.ads_stored + l.ads_duplicate) {
    violation("conservation: ingested != stored + duplicates");
  }
  if (l.ads_stored != static_cast<std::int64_t>(ads_.size()) ||
      l.ads_stored != exportable + l.ads_redacted || l.ads_redacted != redacted) {
    violation("conservation: stored != exportable + redacted");
  }
  if (l.events_received !=
      l.events_applied + l.events_duplicate + l.events_dropped + l.events_rejected) {
    violation("conservation: events received != applied + duplicate + dropped + rejected");
  }
  if (l.swaps_served != static_cast<std::int64_t>(deliveries_.size())) {
    violation("conservation: swaps served != deliveries");
  }
  for (const auto& [id, p] : participants_) {
    if (p.partner_id) {
      if (*p.partner_id == id) violation("pairing: " + id.str() + " paired with itself");
      const auto it = participants_.find(*p.partner_id);
      if (it == participants_.end() || it->second.partner_id != id) {
        violation("pairing: partner link of " + id.str() + " is not symmetric");
      }
    }
    const auto r = redacted_by_owner.contains(id) ? redacted_by_owner.at(id) : 0;
    if (p.redaction_count != r) violation("redaction count of " + id.str());
  }
  for (const auto& [id, d] : deliveries_) {
    const Participant& rcpt = participants_.at(d.recipient_id);
    const AdRecord& src = ads_.at(d.source_ad_id);
    if (!rcpt.partner_id || src.participant_id != *rcpt.partner_id ||
        src.participant_id == d.recipient_id || src.phase != AdPhase::kObservational) {
      violation("swap soundness: delivery " + id.str());
    }
    if (d.view_count < 0 || d.click_count < 0) violation("negative counter on " + id.str());
  }
}

// --- internals -------------------------------------------------------------

Participant& Study::participant_locked(const ParticipantId& id) {
  auto it = participants_.find(id);
  if (it == participants_.end()) throw Error(ErrorCode::kNotFound, "unknown participant " + id.str());
  return it->second;
}

std::vector<AdRecord> Study::ads_of_locked(const ParticipantId& id) const {
  std::vector<AdRecord> out;
  if (auto it = ads_by_owner_.find(id); it != ads_by_owner_.end()) {
    out.reserve(it->second.size());
    for (const auto& a : it->second) out.push_back(ads_.at(a));
  }
  return out;
}

std::int64_t Study::count_unredacted_locked(const ParticipantId& id, AdPhase phase) const {
  std::int64_t n = 0;
  if (auto it = ads_by_owner_.find(id); it != ads_by_owner_.end()) {
    for (const auto& a : it->second) {
      const auto& ad = ads_.at(a);
      n += !ad.redacted && ad.phase == phase;
    }
  }
  return n;
}

std::vector<AdRecord> Study::Repo::ads_in_window(const TimeWindow& window) const {
  std::lock_guard lock(s_.mu_);
  std::vector<AdRecord> out;
  for (const auto& [id, ad] : s_.ads_) {
    if (window.contains(ad.captured_at)) out.push_back(ad);
  }
  return out;
}

bool Study::Repo::update_ad(const AdId& id, const std::function<void(AdRecord&)>& mutate) {
  std::lock_guard lock(s_.mu_);
  auto it = s_.ads_.find(id);
  if (it == s_.ads_.end() || it->second.redacted) return false;
  mutate(it->second);
  return true;
}

// --- persistence -----------------------------------------------------------

Json Study::snapshot() const {
  std::lock_guard lock(mu_);
  Json j;
  j["format"] = "adaudit-study/1";
  j["started"] = started_;
  j["counters"] = {{"participant", next_participant_},
                   {"ad", next_ad_},
                   {"delivery", next_delivery_}};
  j["ledger"] = to_json(ledger_);
  auto arr = [](auto&& range, auto&& fn) {
    Json a = Json::array();
    for (const auto& x : range) a.push_back(fn(x));
    return a;
  };
  j["participants"] = arr(participants_, [](const auto& kv) { return to_json(kv.second); });
  j["ads"] = arr(ads_, [](const auto& kv) { return to_json(kv.second); });
  j["client_ad_index"] = arr(client_ad_index_, [](const auto& kv) {
    return Json::array({kv.first.first.str(), kv.first.second, kv.second.str()});
  });
  j["deliveries"] = arr(deliveries_, [](const auto& kv) { return to_json(kv.second); });
  j["seen_events"] = arr(seen_events_, [](const auto& e) {
    return Json::array({e.first.str(), e.second});
  });
  j["codes"] = arr(codes_, [](const auto& kv) {
    return Json{{"hash", kv.first},
                {"participant_id", kv.second.participant.str()},
                {"reconnect", kv.second.reconnect},
                {"used", kv.second.used}};
  });
  j["tokens"] = arr(current_token_, [](const auto& kv) {
    return Json{{"participant_id", kv.first.str()}, {"hash", kv.second}};
  });
  j["auditors"] = arr(auditor_hashes_, [](const auto& h) { return Json(h); });
  j["instance_info"] = arr(instance_info_, [](const auto& kv) {
    return Json{{"participant_id", kv.first.str()}, {"info", kv.second}};
  });
  j["surveys"] = arr(surveys_.all(), [](const auto* s) { return survey::to_json(*s); });
  return j;
}

void Study::restore(const Json& j) {
  if (j.value("format", "") != "adaudit-study/1") {
    throw Error(ErrorCode::kInvalidArgument, "not a study snapshot");
  }
  std::lock_guard lock(mu_);
  started_ = j.at("started").get<bool>();
  next_participant_ = j.at("counters").at("participant").get<std::int64_t>();
  next_ad_ = j.at("counters").at("ad").get<std::int64_t>();
  next_delivery_ = j.at("counters").at("delivery").get<std::int64_t>();
  ledger_ = ledger_from_json(j.at("ledger"));
  participants_.clear();
  for (const auto& row : j.at("participants")) {
    auto p = participant_from_json(row);
    auto id = p.id;
    participants_.emplace(std::move(id), std::move(p));
  }
  ads_.clear();
  ads_by_owner_.clear();
  for (const auto& row : j.at("ads")) {
    auto ad = ad_from_json(row);
    ads_by_owner_[ad.participant_id].push_back(ad.id);
    auto id = ad.id;
    ads_.emplace(std::move(id), std::move(ad));
  }
  client_ad_index_.clear();
  for (const auto& row : j.at("client_ad_index")) {
    client_ad_index_[{ParticipantId(row.at(0).get<std::string>()), row.at(1).get<std::string>()}] =
        AdId(row.at(2).get<std::string>());
  }
  deliveries_.clear();
  deliveries_by_recipient_.clear();
  for (const auto& row : j.at("deliveries")) {
    auto d = delivery_from_json(row);
    deliveries_by_recipient_[d.recipient_id].push_back(d.id);
    auto id = d.id;
    deliveries_.emplace(std::move(id), std::move(d));
  }
  seen_events_.clear();
  for (const auto& row : j.at("seen_events")) {
    seen_events_.insert({ParticipantId(row.at(0).get<std::string>()), row.at(1).get<std::string>()});
  }
  codes_.clear();
  for (const auto& row : j.at("codes")) {
    codes_[row.at("hash").get<std::string>()] =
        Code{ParticipantId(row.at("participant_id").get<std::string>()),
             row.at("reconnect").get<bool>(), row.at("used").get<bool>()};
  }
  token_owner_.clear();
  current_token_.clear();
  for (const auto& row : j.at("tokens")) {
    const ParticipantId pid(row.at("participant_id").get<std::string>());
    const auto h = row.at("hash").get<std::string>();
    current_token_[pid] = h;
    token_owner_[h] = pid;
  }
  for (const auto& h : j.at("auditors")) auditor_hashes_.insert(h.get<std::string>());
  instance_info_.clear();
  for (const auto& row : j.at("instance_info")) {
    instance_info_[ParticipantId(row.at("participant_id").get<std::string>())] = row.at("info");
  }
  surveys_ = survey::SurveyStore();
  for (const auto& row : j.at("surveys")) surveys_.restore(survey::survey_from_json(row));
  pools_.clear();
}

}  // namespace adaudit::server
