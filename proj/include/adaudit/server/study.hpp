#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "adaudit/common/time.hpp"
#include "adaudit/core/cohort.hpp"
#include "adaudit/core/config.hpp"
#include "adaudit/core/json.hpp"
#include "adaudit/core/lifecycle.hpp"
#include "adaudit/core/notifier.hpp"
#include "adaudit/core/types.hpp"
#include "adaudit/intervention/swap.hpp"
#include "adaudit/pipeline/jobs.hpp"
#include "adaudit/survey/survey.hpp"

namespace adaudit::server {

/// Source of bearer tokens and onboarding codes.
class TokenSource {
 public:
  virtual ~TokenSource() = default;
  virtual std::string next() = 0;
};

/// 256-bit tokens from the OpenSSL CSPRNG.
class SecureTokens final : public TokenSource {
 public:
  std::string next() override;
};

/// Reproducible tokens for simulation and tests. Never use in a deployment.
class SeededTokens final : public TokenSource {
 public:
  explicit SeededTokens(std::uint64_t seed) : rng_(Rng::derive(seed, "tokens")) {}
  std::string next() override;

 private:
  std::mutex mu_;
  Rng rng_;
};

struct IngestAd {
  std::string client_ad_id;
  PayloadKind payload_kind = PayloadKind::kImage;
  std::optional<std::string> image_url;
  std::optional<std::string> text;
  std::string target_url;
  std::string source_page_url;
  Geometry slot;
  Instant captured_at{};
};

struct IngestAck {
  std::int64_t stored = 0;
  std::int64_t duplicates = 0;
  /// Server id per batch entry, in batch order (also for duplicates).
  std::vector<AdId> ad_ids;
};

enum class EventKind { kView, kClick };
std::string_view to_string(EventKind k);
EventKind parse_event_kind(std::string_view text);

struct TelemetryEvent {
  std::string client_event_id;
  EventKind kind = EventKind::kView;
  /// Exactly one of the two references is set.
  std::optional<std::string> client_ad_id;
  std::optional<DeliveryId> swap_delivery_id;
  Instant occurred_at{};
};

struct EventError {
  std::string client_event_id;
  std::string error;
};

struct EventAck {
  std::int64_t applied = 0;
  std::int64_t duplicates = 0;
  std::int64_t dropped = 0;  // acknowledged but ignored (redacted ad)
  std::vector<EventError> errors;
};

struct SwapServed {
  SwapDelivery delivery;
  AdRecord source;  // the partner ad being shown
  std::size_t candidates = 0;
};

/// Running counters behind the conservation checks.
struct Ledger {
  std::int64_t ads_ingested = 0;
  std::int64_t ads_stored = 0;
  std::int64_t ads_duplicate = 0;
  std::int64_t ads_redacted = 0;
  std::int64_t events_received = 0;
  std::int64_t events_applied = 0;
  std::int64_t events_duplicate = 0;
  std::int64_t events_dropped = 0;
  std::int64_t events_rejected = 0;
  std::int64_t swaps_served = 0;

  friend bool operator==(const Ledger&, const Ledger&) = default;
};

Json to_json(const Ledger& l);
Ledger ledger_from_json(const Json& j);

enum class ExportTable { kAds, kDeliveries, kParticipants, kSurveys };
std::string_view to_string(ExportTable t);
ExportTable parse_export_table(std::string_view text);

struct ExportSelector {
  ExportTable table = ExportTable::kAds;
  std::optional<AdPhase> phase;                // ads only
  std::optional<ParticipantId> participant;
  bool include_redacted_stubs = false;         // ads only
};

struct StartResult {
  Pairing pairing;
  std::vector<ParticipantId> started;
};

struct TickEvent {
  ParticipantId participant;
  LifecycleState from;
  LifecycleState to;
  bool reminder = false;
  std::optional<std::string> gate_failure;
};

struct Overview {
  std::map<LifecycleState, std::int64_t> participants_by_state;
  std::map<AdPhase, std::int64_t> ads_by_phase;  // unredacted
  std::int64_t deliveries = 0;
  std::int64_t surveys_generated[2] = {0, 0};    // midpoint, final
  std::int64_t surveys_submitted[2] = {0, 0};
  Ledger ledger;
};

Json to_json(const Overview& o);

/// The study database and every protocol operation on it. All methods are
/// safe to call concurrently; mutations are serialized by one lock, which
/// also makes each per-ad counter update an atomic read-modify-write.
class Study {
 public:
  Study(StudyConfig config, const Clock& clock, Notifier& notifier,
        std::shared_ptr<TokenSource> tokens = std::make_shared<SecureTokens>());

  const StudyConfig& config() const { return config_; }
  const Clock& clock() const { return clock_; }

  // --- auditor actions -----------------------------------------------------
  void add_auditor_token(const std::string& token);
  /// Throws Error(kUnauthorized) unless `token` is an auditor credential.
  void require_auditor(const std::string& token) const;

  ParticipantId enroll(const Demographics& d);
  std::vector<ParticipantId> select_cohort(std::size_t quota, std::uint64_t seed);
  /// selected -> onboarding; returns the single-use onboarding code.
  std::string grant_onboarding(const ParticipantId& p);
  /// Code that re-links a registered participant and revokes the old token.
  std::string issue_reconnect_code(const ParticipantId& p);
  /// Pair every registered onboarding participant and move them into the
  /// observational phase.
  StartResult start_study();
  /// Evaluate time- and gate-driven transitions for everyone. Surveys are
  /// generated when a participant enters a survey state.
  std::vector<TickEvent> tick();
  /// Generate (idempotently) surveys for everyone in the matching state;
  /// returns the participants notified.
  std::vector<ParticipantId> release_surveys(survey::SurveyPhase phase);
  void offboard(const ParticipantId& p);

  // --- client operations ---------------------------------------------------
  /// Exchange an onboarding or reconnect code for a bearer token.
  std::string register_client(const std::string& code, const Json& instance_info);
  ParticipantId authenticate(const std::string& token) const;

  IngestAck ingest_ads(const std::string& token, const std::vector<IngestAd>& batch);
  EventAck ingest_events(const std::string& token, const std::vector<TelemetryEvent>& events);
  SwapServed serve_swap(const std::string& token, Geometry slot);
  RedactionReceipt redact(const std::string& token, const std::vector<AdId>& ads);
  std::vector<AdRecord> participant_ads(const std::string& token) const;

  /// Survey document for the participant's current survey state.
  Json survey_document(const std::string& token, const survey::ImageResolver& image_of);
  void submit_survey(const std::string& token, const SurveyId& id,
                     const survey::SurveyAnswers& answers);

  // --- reads ---------------------------------------------------------------
  std::vector<Json> export_rows(const std::string& auditor_token, const ExportSelector& sel) const;
  Overview overview() const;
  Ledger ledger() const;
  std::optional<Participant> participant(const ParticipantId& p) const;
  std::vector<Participant> participants() const;
  std::vector<AdRecord> ads() const;
  std::vector<SwapDelivery> deliveries() const;
  std::vector<survey::SurveyInstance> surveys() const;
  std::int64_t exportable_ads() const;

  /// Conservation and structural invariants; throws
  /// Error(kInvariantViolation) naming the first one that fails.
  void check_invariants() const;

  /// Repository view for post-processing jobs.
  pipeline::AdRepository& ad_repository() { return repo_; }

  Json snapshot() const;
  void restore(const Json& snapshot);

 private:
  class Repo final : public pipeline::AdRepository {
   public:
    explicit Repo(Study& s) : s_(s) {}
    std::vector<AdRecord> ads_in_window(const TimeWindow& window) const override;
    bool update_ad(const AdId& id, const std::function<void(AdRecord&)>& mutate) override;

   private:
    Study& s_;
  };

  struct Code {
    ParticipantId participant;
    bool reconnect = false;
    bool used = false;
  };

  Participant& participant_locked(const ParticipantId& p);
  ParticipantId authenticate_locked(const std::string& token) const;
  std::vector<AdRecord> ads_of_locked(const ParticipantId& p) const;
  std::int64_t count_unredacted_locked(const ParticipantId& p, AdPhase phase) const;
  void generate_survey_locked(Participant& p, survey::SurveyPhase phase, Instant now);
  const intervention::SwapPool& pool_locked(const Participant& recipient);
  std::string new_code_locked(const ParticipantId& p, bool reconnect);

  StudyConfig config_;
  const Clock& clock_;
  Notifier& notifier_;
  std::shared_ptr<TokenSource> tokens_;
  Repo repo_{*this};

  mutable std::mutex mu_;
  std::set<std::string> auditor_hashes_;
  std::map<ParticipantId, Participant> participants_;
  std::map<AdId, AdRecord> ads_;
  std::map<ParticipantId, std::vector<AdId>> ads_by_owner_;
  std::map<std::pair<ParticipantId, std::string>, AdId> client_ad_index_;
  std::map<DeliveryId, SwapDelivery> deliveries_;
  std::map<ParticipantId, std::vector<DeliveryId>> deliveries_by_recipient_;
  std::set<std::pair<ParticipantId, std::string>> seen_events_;
  std::map<std::string, Code> codes_;                   // by code hash
  std::map<std::string, ParticipantId> token_owner_;    // by token hash
  std::map<ParticipantId, std::string> current_token_;  // participant -> token hash
  std::map<ParticipantId, Json> instance_info_;
  std::map<ParticipantId, intervention::SwapPool> pools_;
  survey::SurveyStore surveys_;
  Ledger ledger_;
  bool started_ = false;
  std::int64_t next_participant_ = 1;
  std::int64_t next_ad_ = 1;
  std::int64_t next_delivery_ = 1;
};

}  // namespace adaudit::server
