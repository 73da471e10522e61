#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adaudit/core/config.hpp"
#include "adaudit/core/json.hpp"
#include "adaudit/core/types.hpp"
#include "adaudit/stats/result.hpp"

namespace adaudit::sim {

enum class VolumeModel { kPoisson, kGeometric };

/// One simulated participant. Latent affinities are on the 1..7 Likert
/// scale; the respondent policy adds noise and clips.
struct SimProfile {
  Demographics demographics;
  VolumeModel volume = VolumeModel::kPoisson;
  double ads_per_day = 30;         // mean of the daily ad count
  double view_probability = 0.272;
  double click_probability = 0.002;  // among viewed ads
  double people_rate = 0.4;          // planted share of ads showing people
  double redact_probability = 0.01;  // per observational ad
  double replay_probability = 0.05;  // resend a whole batch (network retry)
  double self_interest = 4.5;
  double partner_interest = 3.5;
  double self_representativity = 4.5;
  double partner_representativity = 3.0;
  double likert_noise = 1.0;         // sd of the additive normal noise
  double recall_seen = 0.41;         // P(yes | seen)
  double recall_unseen = 0.21;       // P(yes | unseen)
  std::uint64_t seed = 0;

  /// Throws Error(kInvalidArgument) naming the field.
  void validate() const;
};

Json to_json(const SimProfile& p);
SimProfile profile_from_json(const Json& j);
std::vector<SimProfile> profiles_from_json(const Json& j);

/// `n` varied profiles with deterministic demographics and seeds.
std::vector<SimProfile> generate_profiles(int n, std::uint64_t seed, const SimProfile& base = {});

enum class TransportMode { kInProcess, kHttp };

struct SimOptions {
  std::uint64_t seed = 1;
  /// Virtual seconds per wall-clock second. 0 runs unpaced.
  double clock_compression = 0;
  TransportMode transport = TransportMode::kInProcess;
  /// Run each day's participant sessions on separate threads. Ids then
  /// depend on scheduling, so reports are no longer byte-stable.
  bool concurrent = false;
  /// Scratch space for the blob store; a temporary directory when empty.
  std::filesystem::path work_dir;
  /// Swap requests per intervention ad slot are one; this caps the total
  /// per participant per day (0 = no cap).
  int max_swaps_per_day = 0;
  /// When set, the final server snapshot is written here.
  std::filesystem::path snapshot_out;
};

struct ConservationCheck {
  std::int64_t ingested = 0;   // ads sent in acknowledged batches
  std::int64_t stored = 0;
  std::int64_t duplicates = 0;
  std::int64_t exported = 0;   // rows in the ads export
  std::int64_t redacted = 0;
  bool holds() const { return ingested == stored + duplicates && stored == exported + redacted; }
};

struct ExclusivityAudit {
  std::size_t deliveries = 0;
  std::size_t outside_partner_pool = 0;
  std::size_t self_ads = 0;
  std::size_t non_observational = 0;
  std::map<int, std::size_t> by_tier;
  /// Uniformity within tier: each draw's position among its (recipient,
  /// slot) candidates, randomized to U(0,1), binned into 10 cells and
  /// tested by chi-square (df 9). Groups with one candidate are skipped.
  /// Left at p = 1 with fewer than 50 draws.
  double chi_square = 0;
  double chi_square_df = 0;
  double chi_square_p = 1;
  std::size_t uniformity_groups = 0;
  std::size_t uniformity_draws = 0;
};

/// Partner-pool membership, self-ad and tier-uniformity audit of swap
/// deliveries against pools rebuilt from the exported ads.
ExclusivityAudit audit_exclusivity(std::span<const Participant> participants,
                                   std::span<const AdRecord> ads,
                                   std::span<const SwapDelivery> deliveries);

struct RecognitionSummary {
  std::optional<double> correct_rate;
  std::optional<double> false_rate;
  std::size_t seen_answered = 0;
  std::size_t unseen_answered = 0;
};

struct SimulationReport {
  std::uint64_t seed = 0;
  std::size_t profiles = 0;
  std::size_t pairs = 0;
  std::size_t swap_unavailable = 0;  // swap requests refused by the server
  std::size_t invariant_checks = 0;
  std::vector<std::string> dropped;     // participant ids failing a gate
  std::vector<std::string> offboarded;
  Json ledger;                          // server counters at the end
  ConservationCheck conservation;
  ExclusivityAudit exclusivity;
  std::optional<double> view_rate;      // observational, recomputed from export
  std::optional<double> click_rate_among_viewed;
  std::optional<double> swap_view_rate;
  std::map<std::string, RecognitionSummary> recognition;  // by survey phase
  /// Per participant mean per-ad interest on self vs partner ads in the
  /// final survey, and the one-sided paired test of self > partner.
  std::vector<double> self_interest;
  std::vector<double> partner_interest;
  std::optional<stats::StatResult> interest_gap;
  std::map<std::string, std::int64_t> observational_ads;  // unredacted, by participant
  std::vector<Json> ads;         // export rows
  std::vector<Json> deliveries;  // export rows
  std::vector<Json> participants;
  std::vector<Json> surveys;
  Json pipeline_runs = Json::array();
};

/// Summary document (everything but the export rows).
Json summary_json(const SimulationReport& r);
/// Summary plus the export tables; identical runs serialize identically.
std::string serialize(const SimulationReport& r);
/// report.json plus one JSONL file per exported table.
void write_report(const SimulationReport& r, const std::filesystem::path& dir);

/// Drive a full study through the client protocol. Throws
/// Error(kInvariantViolation) naming the broken invariant if any check
/// fails mid-run.
SimulationReport run_simulation(const StudyConfig& config, const std::vector<SimProfile>& profiles,
                                const SimOptions& options = {});

}  // namespace adaudit::sim
