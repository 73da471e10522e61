#include "adaudit/sim/simulation.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <unistd.h>

#include "adaudit/common/error.hpp"
#include "adaudit/common/rng.hpp"
#include "adaudit/common/time.hpp"
#include "adaudit/core/notifier.hpp"
#include "adaudit/filter/rules.hpp"
#include "adaudit/intervention/swap.hpp"
#include "adaudit/pipeline/blob_store.hpp"
#include "adaudit/pipeline/detect.hpp"
#include "adaudit/pipeline/jobs.hpp"
#include "adaudit/server/api.hpp"
#include "adaudit/server/client.hpp"
#include "adaudit/server/http.hpp"
#include "adaudit/server/study.hpp"
#include "adaudit/stats/distributions.hpp"
#include "adaudit/stats/metrics.hpp"
#include "adaudit/stats/tests.hpp"
#include "adaudit/survey/survey.hpp"

namespace adaudit::sim {

namespace fs = std::filesystem;

// --- profiles ----------------------------------------------------------------

namespace {

void check_probability(double v, const char* field) {
  if (!(v >= 0 && v <= 1)) {
    throw Error(ErrorCode::kInvalidArgument, std::string(field) + " must be in [0,1]");
  }
}

void check_likert(double v, const char* field) {
  if (!(v >= 1 && v <= 7)) {
    throw Error(ErrorCode::kInvalidArgument, std::string(field) + " must be in [1,7]");
  }
}

std::string_view to_string(VolumeModel v) { return v == VolumeModel::kPoisson ? "poisson" : "geometric"; }

VolumeModel parse_volume(std::string_view s) {
  if (s == "poisson") return VolumeModel::kPoisson;
  if (s == "geometric") return VolumeModel::kGeometric;
  throw Error(ErrorCode::kInvalidArgument, "volume must be poisson or geometric");
}

}  // namespace

void SimProfile::validate() const {
  if (!(ads_per_day >= 0) || !std::isfinite(ads_per_day)) {
    throw Error(ErrorCode::kInvalidArgument, "ads_per_day must be >= 0");
  }
  check_probability(view_probability, "view_probability");
  check_probability(click_probability, "click_probability");
  check_probability(people_rate, "people_rate");
  check_probability(redact_probability, "redact_probability");
  check_probability(replay_probability, "replay_probability");
  check_probability(recall_seen, "recall_seen");
  check_probability(recall_unseen, "recall_unseen");
  check_likert(self_interest, "self_interest");
  check_likert(partner_interest, "partner_interest");
  check_likert(self_representativity, "self_representativity");
  check_likert(partner_representativity, "partner_representativity");
  if (!(likert_noise >= 0)) throw Error(ErrorCode::kInvalidArgument, "likert_noise must be >= 0");
}

Json to_json(const SimProfile& p) {
  return {{"demographics", adaudit::to_json(p.demographics)},
          {"volume", to_string(p.volume)},
          {"ads_per_day", p.ads_per_day},
          {"view_probability", p.view_probability},
          {"click_probability", p.click_probability},
          {"people_rate", p.people_rate},
          {"redact_probability", p.redact_probability},
          {"replay_probability", p.replay_probability},
          {"self_interest", p.self_interest},
          {"partner_interest", p.partner_interest},
          {"self_representativity", p.self_representativity},
          {"partner_representativity", p.partner_representativity},
          {"likert_noise", p.likert_noise},
          {"recall_seen", p.recall_seen},
          {"recall_unseen", p.recall_unseen},
          {"seed", p.seed}};
}

SimProfile profile_from_json(const Json& j) {
  SimProfile p;
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "profile must be an object");
  if (j.contains("demographics")) p.demographics = demographics_from_json(j.at("demographics"));
  if (j.contains("volume")) p.volume = parse_volume(j.at("volume").get<std::string>());
  auto num = [&](const char* key, double& out) {
    if (j.contains(key)) out = j.at(key).get<double>();
  };
  num("ads_per_day", p.ads_per_day);
  num("view_probability", p.view_probability);
  num("click_probability", p.click_probability);
  num("people_rate", p.people_rate);
  num("redact_probability", p.redact_probability);
  num("replay_probability", p.replay_probability);
  num("self_interest", p.self_interest);
  num("partner_interest", p.partner_interest);
  num("self_representativity", p.self_representativity);
  num("partner_representativity", p.partner_representativity);
  num("likert_noise", p.likert_noise);
  num("recall_seen", p.recall_seen);
  num("recall_unseen", p.recall_unseen);
  if (j.contains("seed")) p.seed = j.at("seed").get<std::uint64_t>();
  p.validate();
  return p;
}

std::vector<SimProfile> profiles_from_json(const Json& j) {
  const Json& arr = j.is_object() && j.contains("profiles") ? j.at("profiles") : j;
  if (!arr.is_array()) throw Error(ErrorCode::kInvalidArgument, "profiles must be an array");
  std::vector<SimProfile> out;
  for (const auto& row : arr) out.push_back(profile_from_json(row));
  return out;
}

std::vector<SimProfile> generate_profiles(int n, std::uint64_t seed, const SimProfile& base) {
  const Vocabulary vocab;
  Rng rng = Rng::derive(seed, "profiles");
  std::vector<SimProfile> out;
  const Gender genders[] = {Gender::kMan, Gender::kWoman, Gender::kNonBinary, Gender::kUndisclosed};
  const double gender_weights[] = {0.45, 0.45, 0.07, 0.03};
  auto pick = [&](const std::vector<std::string>& v) { return v[rng.below(v.size())]; };
  for (int i = 0; i < n; ++i) {
    SimProfile p = base;
    Demographics& d = p.demographics;
    d.age = pick(vocab.age);
    double u = rng.uniform();
    d.gender = genders[3];
    for (int g = 0; g < 4; ++g) {
      if (u < gender_weights[g]) {
        d.gender = genders[g];
        break;
      }
      u -= gender_weights[g];
    }
    d.race = {rng.bernoulli(0.6) ? std::string("white") : pick(vocab.race)};
    d.education = pick(vocab.education);
    d.income = pick(vocab.income);
    d.region = pick(vocab.region);
    p.seed = rng();
    out.push_back(std::move(p));
  }
  return out;
}

// --- report --------------------------------------------------------------------

namespace {

Json opt_num(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json summary_json(const SimulationReport& r) {
  Json recognition = Json::object();
  for (const auto& [phase, s] : r.recognition) {
    recognition[phase] = {{"correct_rate", opt_num(s.correct_rate)},
                          {"false_rate", opt_num(s.false_rate)},
                          {"seen_answered", s.seen_answered},
                          {"unseen_answered", s.unseen_answered}};
  }
  Json tiers = Json::object();
  for (const auto& [t, n] : r.exclusivity.by_tier) tiers[std::to_string(t)] = n;
  const auto& c = r.conservation;
  const auto& e = r.exclusivity;
  return {{"seed", r.seed},
          {"profiles", r.profiles},
          {"pairs", r.pairs},
          {"swap_unavailable", r.swap_unavailable},
          {"invariant_checks", r.invariant_checks},
          {"dropped", r.dropped},
          {"offboarded", r.offboarded},
          {"ledger", r.ledger},
          {"conservation",
           {{"ingested", c.ingested},
            {"stored", c.stored},
            {"duplicates", c.duplicates},
            {"exported", c.exported},
            {"redacted", c.redacted},
            {"holds", c.holds()}}},
          {"exclusivity",
           {{"deliveries", e.deliveries},
            {"outside_partner_pool", e.outside_partner_pool},
            {"self_ads", e.self_ads},
            {"non_observational", e.non_observational},
            {"by_tier", tiers},
            {"chi_square", e.chi_square},
            {"chi_square_df", e.chi_square_df},
            {"chi_square_p", e.chi_square_p},
            {"uniformity_groups", e.uniformity_groups},
            {"uniformity_draws", e.uniformity_draws}}},
          {"view_rate", opt_num(r.view_rate)},
          {"click_rate_among_viewed", opt_num(r.click_rate_among_viewed)},
          {"swap_view_rate", opt_num(r.swap_view_rate)},
          {"recognition", recognition},
          {"self_interest", r.self_interest},
          {"partner_interest", r.partner_interest},
          {"interest_gap", r.interest_gap ? stats::to_json(*r.interest_gap) : Json(nullptr)},
          {"observational_ads", r.observational_ads},
          {"exports",
           {{"ads", r.ads.size()},
            {"deliveries", r.deliveries.size()},
            {"participants", r.participants.size()},
            {"surveys", r.surveys.size()}}},
          {"pipeline_runs", r.pipeline_runs}};
}

std::string serialize(const SimulationReport& r) {
  Json j = summary_json(r);
  j["tables"] = {{"ads", r.ads},
                 {"deliveries", r.deliveries},
                 {"participants", r.participants},
                 {"surveys", r.surveys}};
  return j.dump();
}

void write_report(const SimulationReport& r, const fs::path& dir) {
  fs::create_directories(dir);
  auto write = [&](const fs::path& name, auto&& body) {
    std::ofstream out(dir / name, std::ios::binary);
    body(out);
    if (!out) throw Error(ErrorCode::kRetryable, "cannot write " + (dir / name).string());
  };
  write("report.json", [&](std::ostream& o) { o << summary_json(r).dump(2) << '\n'; });
  auto jsonl = [&](const char* name, const std::vector<Json>& rows) {
    write(name, [&](std::ostream& o) {
      for (const auto& row : rows) o << row.dump() << '\n';
    });
  };
  jsonl("ads.jsonl", r.ads);
  jsonl("deliveries.jsonl", r.deliveries);
  jsonl("participants.jsonl", r.participants);
  jsonl("surveys.jsonl", r.surveys);
}

// --- simulated network -----------------------------------------------------------

ExclusivityAudit audit_exclusivity(std::span<const Participant> participants,
                                 std::span<const AdRecord> ads,
                                 std::span<const SwapDelivery> deliveries) {
  ExclusivityAudit e;
  e.deliveries = deliveries.size();
  std::map<AdId, const AdRecord*> by_id;
  for (const auto& ad : ads) by_id[ad.id] = &ad;
  std::map<ParticipantId, const Participant*> people;
  for (const auto& p : participants) people[p.id] = &p;

  std::map<std::pair<ParticipantId, Geometry>, std::vector<const SwapDelivery*>> groups;
  std::set<const SwapDelivery*> flagged;
  for (const auto& d : deliveries) {
    ++e.by_tier[d.tier];
    const auto* recipient = people.at(d.recipient_id);
    const auto src = by_id.find(d.source_ad_id);
    if (src == by_id.end() || !recipient->partner_id ||
        src->second->participant_id != *recipient->partner_id) {
      ++e.outside_partner_pool;
      flagged.insert(&d);
    }
    if (src != by_id.end() && src->second->participant_id == d.recipient_id) ++e.self_ads;
    if (src != by_id.end() && src->second->phase != AdPhase::kObservational) ++e.non_observational;
    groups[{d.recipient_id, d.slot}].push_back(&d);
  }
  // Pools only lose ads through redaction, which the simulator confines to
  // the observational phase, so the final export reproduces every pool.
  //
  // Uniformity: a draw at index i of k tier candidates maps to
  // u = (i + v) / k with v ~ U(0,1), which is exactly U(0,1) when the
  // draw is uniform. Pooling u over all draws allows one 10-bin
  // chi-square even where each group sees only a few draws per candidate.
  constexpr int kBins = 10;
  std::array<double, kBins> bins{};
  Rng jitter(0x5eedf00d);
  std::map<ParticipantId, intervention::SwapPool> pools;
  for (const auto& [key, list] : groups) {
    const auto* recipient = people.at(key.first);
    auto it = pools.find(key.first);
    if (it == pools.end()) it = pools.emplace(key.first, intervention::eligible_pool(*recipient, ads)).first;
    const auto [positions, tier] = it->second.candidates(key.second);
    std::map<AdId, std::size_t> index;
    for (auto pos : positions) index.emplace(it->second.entries()[pos].id, index.size());
    const double k = static_cast<double>(positions.size());
    bool counted = false;
    for (const auto* d : list) {
      const auto c = index.find(d->source_ad_id);
      if (c == index.end() || d->tier != static_cast<int>(tier)) {
        // Not a member of the tier's candidate set.
        if (flagged.insert(d).second) ++e.outside_partner_pool;
        continue;
      }
      if (positions.size() < 2) continue;
      const double u = (static_cast<double>(c->second) + jitter.uniform()) / k;
      bins[std::min(kBins - 1, static_cast<int>(u * kBins))] += 1;
      ++e.uniformity_draws;
      counted = true;
    }
    e.uniformity_groups += counted;
  }
  if (e.uniformity_draws >= 5 * kBins) {
    const double expected = static_cast<double>(e.uniformity_draws) / kBins;
    for (double n : bins) e.chi_square += (n - expected) * (n - expected) / expected;
    e.chi_square_df = kBins - 1;
    e.chi_square_p = stats::chi_square_sf(e.chi_square, e.chi_square_df);
  }
  return e;
}

namespace {

const Geometry kSlots[] = {{300, 250}, {728, 90}, {160, 600}, {320, 50}, {300, 600}, {970, 250}};
const double kSlotWeights[] = {0.40, 0.20, 0.12, 0.12, 0.08, 0.08};

constexpr std::string_view kImageHost = "https://img.sim.example/";

/// Serves ad images and click-tracker redirects for the pipeline jobs.
/// Image bodies carry the planted people label.
class SimFetcher final : public pipeline::Fetcher {
 public:
  pipeline::HttpResponse get(const std::string& url) override {
    if (url.rfind(kImageHost, 0) == 0) {
      // img.sim.example/<owner>/<client id>/<0|1>.png
      const bool people = url.size() > 5 && url[url.size() - 5] == '1';
      return {200, {}, "SIMIMG " + url + (people ? " people=1" : " people=0")};
    }
    // click.adnetN.example/r?to=brandM.com redirects to the brand landing page.
    const auto to = url.find("?to=");
    if (url.find("://click.") != std::string::npos && to != std::string::npos) {
      return {302, "https://www." + url.substr(to + 4) + "/landing", {}};
    }
    if (url.find("/landing") != std::string::npos) return {200, {}, "ok"};
    return {404, {}, {}};
  }
};

/// Reads the planted label back out of the stored image bytes.
class PlantedDetector final : public pipeline::DetectorAdapter {
 public:
  std::vector<pipeline::Detection> detect(const fs::path& image) override {
    std::ifstream in(image, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.rfind("SIMIMG ", 0) != 0) {
      throw Error(ErrorCode::kAdapterFailure, "not a simulated image: " + image.string());
    }
    if (bytes.find("people=1") != std::string::npos) {
      return {{"person", 0.93, {0.10, 0.05, 0.40, 0.90}}};
    }
    return {{"car", 0.71, {0.20, 0.30, 0.60, 0.50}}};
  }
};

struct ScratchDir {
  fs::path path;
  bool owned = false;
  explicit ScratchDir(const fs::path& requested) {
    if (!requested.empty()) {
      path = requested;
      fs::create_directories(path);
      return;
    }
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("adaudit-sim-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
    owned = true;
  }
  ~ScratchDir() {
    if (owned) {
      std::error_code ec;
      fs::remove_all(path, ec);
    }
  }
};

int likert(double latent, double noise, Rng& rng) {
  const double v = std::round(latent + noise * rng.normal());
  return static_cast<int>(std::clamp(v, 1.0, 7.0));
}

bool is_active(std::string_view state) { return state == "observational" || state == "intervention"; }
bool is_terminal(std::string_view state) { return state == "offboarded" || state == "dropped"; }

// --- one simulated participant ---------------------------------------------------

struct Tally {
  std::int64_t ingested = 0, stored = 0, duplicates = 0, redacted = 0;
  std::size_t swap_unavailable = 0;
};

struct Agent {
  std::size_t index = 0;
  SimProfile profile;
  Rng rng;
  server::ApiClient client;
  std::string id;
  std::string state;
  std::uint64_t next_ad = 0;
  std::uint64_t next_event = 0;
  std::map<std::string, bool> own;        // server ad id -> viewed (unredacted only)
  std::map<std::string, bool> swap_seen;  // swap image url -> viewed at least once
  std::map<std::string, std::string> slot_of;  // server ad id -> "WxH"
  Tally tally;

  Agent(std::size_t i, SimProfile p, std::uint64_t run_seed, server::Transport& t)
      : index(i),
        profile(std::move(p)),
        rng(Rng::derive(profile.seed ^ run_seed, "agent/" + std::to_string(i))),
        client(t) {}

  std::int64_t draw_volume() {
    const double m = profile.ads_per_day;
    if (m <= 0) return 0;
    if (profile.volume == VolumeModel::kPoisson) return rng.poisson(m);
    // Geometric on {0,1,...} with the given mean.
    const double q = 1.0 / (1.0 + m);
    const double u = std::max(rng.uniform(), 1e-300);
    return static_cast<std::int64_t>(std::floor(std::log(u) / std::log1p(-q)));
  }

  Geometry draw_slot() {
    double u = rng.uniform();
    for (std::size_t k = 0; k < std::size(kSlots); ++k) {
      if (u < kSlotWeights[k]) return kSlots[k];
      u -= kSlotWeights[k];
    }
    return kSlots[0];
  }

  Json make_ads(std::int64_t n, Instant at, std::vector<Geometry>& slots) {
    Json ads = Json::array();
    for (std::int64_t k = 0; k < n; ++k) {
      const std::string cid = "c" + std::to_string(next_ad++);
      const Geometry g = draw_slot();
      slots.push_back(g);
      const bool people = rng.bernoulli(profile.people_rate);
      const auto net = rng.below(6);
      const auto brand = rng.below(40);
      const bool tracked = rng.bernoulli(0.6);
      const std::string brand_host = "brand" + std::to_string(brand) + ".com";
      ads.push_back(
          {{"client_ad_id", cid},
           {"payload_kind", "image"},
           {"image_url", std::string(kImageHost) + std::to_string(index) + "/" + cid + "/" +
                             (people ? "1" : "0") + ".png"},
           {"target_url", tracked ? "https://click.adnet" + std::to_string(net) + ".example/r?to=" + brand_host
                                  : "https://www." + brand_host + "/landing"},
           {"source_page_url", "https://www.site" + std::to_string(rng.below(25)) + ".example/page"},
           {"slot", {{"width", g.width}, {"height", g.height}}},
           {"captured_at", format_iso8601(at)}});
    }
    return ads;
  }

  Json ingest(const Json& ads) {
    Json ack = client.ingest_ads(ads);
    tally.ingested += static_cast<std::int64_t>(ads.size());
    tally.stored += ack.at("stored").get<std::int64_t>();
    tally.duplicates += ack.at("duplicates").get<std::int64_t>();
    if (rng.bernoulli(profile.replay_probability)) {
      // Lost acknowledgement: the extension resends the batch.
      const Json again = client.ingest_ads(ads);
      tally.ingested += static_cast<std::int64_t>(ads.size());
      tally.stored += again.at("stored").get<std::int64_t>();
      tally.duplicates += again.at("duplicates").get<std::int64_t>();
    }
    return ack;
  }

  Json event(const Json& ad_ref, const char* kind, Instant at) {
    return {{"client_event_id", "e" + std::to_string(next_event++)},
            {"kind", kind},
            {"ad_ref", ad_ref},
            {"occurred_at", format_iso8601(at)}};
  }

  void send_events(const Json& events) {
    if (events.empty()) return;
    client.send_events(events);
    if (rng.bernoulli(profile.replay_probability)) client.send_events(events);
  }

  void observational_session(std::int64_t n, Instant now) {
    if (n <= 0) return;
    std::vector<Geometry> slots;
    const Json ads = make_ads(n, now, slots);
    const Json ack = ingest(ads);
    Json events = Json::array();
    std::vector<std::string> to_redact;
    for (std::size_t k = 0; k < ads.size(); ++k) {
      const auto ad_id = ack.at("ad_ids").at(k).get<std::string>();
      const bool viewed = rng.bernoulli(profile.view_probability);
      const Json ref = {{"client_ad_id", ads[k].at("client_ad_id")}};
      if (viewed) {
        events.push_back(event(ref, "view", now));
        if (rng.bernoulli(profile.click_probability)) events.push_back(event(ref, "click", now));
      }
      own[ad_id] = viewed;
      if (rng.bernoulli(profile.redact_probability)) to_redact.push_back(ad_id);
    }
    send_events(events);
    if (!to_redact.empty()) {
      tally.redacted += client.redact(to_redact);
      for (const auto& id : to_redact) own.erase(id);
    }
  }

  void intervention_session(std::int64_t n, Instant now, int swap_budget) {
    if (n <= 0) return;
    std::vector<Geometry> slots;
    // The originals are still reported, then replaced before they render.
    ingest(make_ads(n, now, slots));
    Json events = Json::array();
    int served = 0;
    for (const auto& g : slots) {
      if (swap_budget > 0 && served >= swap_budget) break;
      Json res;
      try {
        res = client.swap(g.width, g.height);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kPrecondition && e.code() != ErrorCode::kRefused) throw;
        ++tally.swap_unavailable;
        continue;
      }
      ++served;
      const bool viewed = rng.bernoulli(profile.view_probability);
      const auto image = res.at("ad").at("image_url");
      const std::string key = image.is_string() ? image.get<std::string>() : std::string();
      auto& seen = swap_seen[key];
      seen = seen || viewed;
      if (viewed) {
        const Json ref = {{"swap_delivery_id", res.at("delivery").at("swap_delivery_id")}};
        events.push_back(event(ref, "view", now));
        if (rng.bernoulli(profile.click_probability)) events.push_back(event(ref, "click", now));
      }
    }
    send_events(events);
  }

  /// Respondent policy: recognition from ground truth at the planted recall
  /// rates; Likert items are clipped, rounded latent affinity plus noise.
  Json answer(const Json& doc) {
    const bool final_phase = doc.at("phase") == "final";
    const auto& p = profile;
    Json per_ad = Json::array();
    for (const auto& q : doc.at("sections").at("per_ad")) {
      const auto ad_id = q.at("ad_id").get<std::string>();
      const auto mine = own.find(ad_id);
      const bool self = mine != own.end();
      bool seen = self && mine->second;
      if (!self && q.at("image").is_string()) {
        const auto s = swap_seen.find(q.at("image").get<std::string>());
        seen = s != swap_seen.end() && s->second;
      }
      const double recall = seen ? p.recall_seen : p.recall_unseen;
      std::string recognition = "yes";
      if (!rng.bernoulli(recall)) recognition = rng.bernoulli(0.8) ? "no" : "unsure";
      per_ad.push_back(
          {{"ad_id", ad_id},
           {"recognition", recognition},
           {"interest", likert(self ? p.self_interest : p.partner_interest, p.likert_noise, rng)},
           {"representativity",
            likert(self ? p.self_representativity : p.partner_representativity, p.likert_noise, rng)}});
    }
    Json holistic = nullptr;
    if (!doc.at("sections").at("holistic").at("skipped").get<bool>()) {
      // Bucket whose percentage is nearest the noisy recall estimate.
      const double pct = 100 * p.recall_seen + 10 * rng.normal();
      static constexpr double kBuckets[] = {0, 10, 25, 50, 75, 90, 100};
      int bucket = 1;
      for (int b = 1; b <= 7; ++b) {
        if (std::abs(kBuckets[b - 1] - pct) < std::abs(kBuckets[bucket - 1] - pct)) bucket = b;
      }
      holistic = {{"recognition_bucket", bucket},
                  {"interest", likert(final_phase ? p.partner_interest : p.self_interest, p.likert_noise, rng)},
                  {"representativity", likert(final_phase ? p.partner_representativity
                                                          : p.self_representativity,
                                              p.likert_noise, rng)}};
    }
    return {{"holistic", holistic},
            {"per_ad", per_ad},
            {"experience",
             {{"rating", likert(5.5, 1, rng)},
              {"recommend", likert(5, 1, rng)},
              {"disabled_freq", likert(1.5, 1, rng)},
              {"incognito_freq", likert(2, 1, rng)}}}};
  }
};

// --- the run -------------------------------------------------------------------

class Run {
 public:
  Run(const StudyConfig& config, const std::vector<SimProfile>& profiles, const SimOptions& options)
      : options_(options),
        scratch_(options.work_dir),
        clock_(parse_iso8601("2024-05-06T00:00:00Z")),
        study_(config, clock_, notifier_, std::make_shared<server::SeededTokens>(options.seed)),
        blobs_(scratch_.path / "blobs"),
        pipeline_(study_.ad_repository(), fetcher_, blobs_, detector_, pipeline_state_, clock_,
                  pipeline::PipelineOptions{}),
        router_(study_, api_options()) {
    study_.add_auditor_token(kAuditor);
    if (options.transport == TransportMode::kHttp) {
      http_ = std::make_unique<server::HttpServer>(router_);
      const int port = http_->start("127.0.0.1", 0);
      http_transport_ = std::make_unique<server::HttpTransport>("http://127.0.0.1:" + std::to_string(port));
      transport_ = http_transport_.get();
    } else {
      transport_ = &router_;
    }
    admin_ = std::make_unique<server::ApiClient>(*transport_, kAuditor);
    for (std::size_t i = 0; i < profiles.size(); ++i) {
      agents_.push_back(std::make_unique<Agent>(i, profiles[i], options.seed, *transport_));
    }
  }

  ~Run() {
    if (http_) http_->stop();
  }

  SimulationReport execute() {
    enroll();
    const int horizon = study_.config().observational_days + study_.config().intervention_days + 4;
    for (int day = 0; day < horizon; ++day) {
      refresh_states();
      if (std::all_of(agents_.begin(), agents_.end(), [](const auto& a) { return is_terminal(a->state); })) {
        break;
      }
      simulate_day();
      nightly();
    }
    return report();
  }

 private:
  static constexpr const char* kAuditor = "simulation-auditor-token";
  static constexpr int kSessionsPerDay = 4;

  server::ApiOptions api_options() {
    server::ApiOptions o;
    const auto parsed = filter::parse_filter_list(
        "||adnet0.example^\n||adnet1.example^$third-party\n/banner/*\nsite0.example##.ad\n", 1);
    o.ruleset_document = filter::compile_ruleset(parsed.rules);
    o.blobs = &blobs_;
    o.pipeline = &pipeline_;
    return o;
  }

  void check() {
    study_.check_invariants();
    ++checks_;
  }

  /// Advance virtual time, sleeping when a compression factor is set.
  void advance(Seconds dt) {
    if (options_.clock_compression > 0) {
      const double wall = static_cast<double>(dt.count()) / options_.clock_compression;
      std::this_thread::sleep_for(std::chrono::duration<double>(wall));
    }
    clock_.advance(dt);
  }

  void enroll() {
    std::vector<std::string> ids;
    for (auto& a : agents_) {
      ids.push_back(admin_->admin("POST", "enroll", {{"demographics", adaudit::to_json(a->profile.demographics)}})
                        .at("participant_id")
                        .get<std::string>());
    }
    admin_->admin("POST", "cohort", {{"quota", agents_.size()}, {"seed", options_.seed}});
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      const auto code = admin_->admin("POST", "onboard", {{"participant_id", ids[i]}})
                            .at("onboarding_code")
                            .get<std::string>();
      agents_[i]->id = agents_[i]->client.register_client(code, {{"browser", "simulated"}});
      agents_[i]->client.ruleset();
    }
    const Json started = admin_->admin("POST", "start");
    pairs_ = started.at("pairs").size();
    check();
  }

  void refresh_states() {
    std::map<std::string, std::string> states;
    const Json res = admin_->admin("GET", "participants");
    for (const auto& row : res.at("participants")) {
      states[row.at("id").get<std::string>()] = row.at("state").get<std::string>();
    }
    for (auto& a : agents_) a->state = states.at(a->id);
  }

  void simulate_day() {
    // Draw every active agent's daily volume up front so the concurrent
    // mode consumes the same random streams.
    std::vector<std::vector<std::int64_t>> shares(agents_.size());
    for (auto& a : agents_) {
      if (!is_active(a->state)) continue;
      const auto total = a->draw_volume();
      auto& s = shares[a->index];
      for (int k = 0; k < kSessionsPerDay; ++k) {
        s.push_back(total / kSessionsPerDay + (k < total % kSessionsPerDay ? 1 : 0));
      }
    }
    const int budget = options_.max_swaps_per_day > 0
                           ? (options_.max_swaps_per_day + kSessionsPerDay - 1) / kSessionsPerDay
                           : 0;
    for (int session = 0; session < kSessionsPerDay; ++session) {
      advance(3 * kHour);
      const Instant now = clock_.now();
      auto run_agent = [&](Agent& a) {
        if (shares[a.index].empty()) return;
        const auto n = shares[a.index][session];
        if (a.state == "observational") {
          a.observational_session(n, now);
        } else {
          a.intervention_session(n, now, budget);
        }
      };
      if (options_.concurrent) {
        std::vector<std::thread> threads;
        std::mutex err_mu;
        std::exception_ptr err;
        for (auto& a : agents_) {
          threads.emplace_back([&, agent = a.get()] {
            try {
              run_agent(*agent);
            } catch (...) {
              std::lock_guard lock(err_mu);
              if (!err) err = std::current_exception();
            }
          });
        }
        for (auto& t : threads) t.join();
        if (err) std::rethrow_exception(err);
      } else {
        for (auto& a : agents_) run_agent(*a);
      }
      check();
    }
  }

  void nightly() {
    // Land on the next day's study-start hour so phase lengths are exact.
    const Instant next = clock_.now() + 12 * kHour;
    advance(next - clock_.now());
    const std::string window = format_iso8601(parse_iso8601("2024-05-01T00:00:00Z")) + "/" +
                               format_iso8601(clock_.now() + kDay);
    for (const char* job : {"resolve", "persist", "detect", "domains"}) {
      pipeline_runs_.push_back(admin_->admin("POST", "pipeline", {{"job", job}, {"window", window}}).at("run"));
    }
    check();
    admin_->admin("POST", "tick");
    check();
    refresh_states();
    bool answered = false;
    for (auto& a : agents_) {
      if (a->state != "midpoint_survey" && a->state != "final_survey") continue;
      const Json doc = a->client.survey();
      a->client.submit_survey(doc.at("survey_id").get<std::string>(), a->answer(doc));
      answered = true;
    }
    if (answered) {
      admin_->admin("POST", "tick");
      check();
    }
  }

  SimulationReport report() {
    SimulationReport r;
    r.seed = options_.seed;
    r.profiles = agents_.size();
    r.pairs = pairs_;
    r.invariant_checks = checks_;
    r.pipeline_runs = pipeline_runs_;
    r.ledger = admin_->admin("GET", "ledger").at("ledger");
    r.ads = admin_->export_rows("ads");
    r.deliveries = admin_->export_rows("deliveries");
    r.participants = admin_->export_rows("participants");
    r.surveys = admin_->export_rows("surveys");
    if (!options_.snapshot_out.empty()) {
      std::ofstream out(options_.snapshot_out, std::ios::binary);
      out << study_.snapshot().dump();
      if (!out) throw Error(ErrorCode::kRetryable, "cannot write " + options_.snapshot_out.string());
    }

    for (const auto& a : agents_) {
      auto& c = r.conservation;
      c.ingested += a->tally.ingested;
      c.stored += a->tally.stored;
      c.duplicates += a->tally.duplicates;
      c.redacted += a->tally.redacted;
      r.swap_unavailable += a->tally.swap_unavailable;
    }
    r.conservation.exported = static_cast<std::int64_t>(r.ads.size());
    const auto& l = r.ledger;
    if (l.at("ads_ingested") != r.conservation.ingested || l.at("ads_stored") != r.conservation.stored ||
        l.at("ads_duplicate") != r.conservation.duplicates || l.at("ads_redacted") != r.conservation.redacted) {
      throw Error(ErrorCode::kInvariantViolation,
                  "ledger_reconciliation: client acknowledgements disagree with server counters");
    }
    if (!r.conservation.holds()) {
      throw Error(ErrorCode::kInvariantViolation, "conservation: ingested/stored/exported/redacted mismatch");
    }

    std::vector<Participant> participants;
    for (const auto& row : r.participants) {
      participants.push_back(participant_from_json(row));
      const auto& p = participants.back();
      if (p.state == LifecycleState::kDropped) r.dropped.push_back(p.id.str());
      if (p.state == LifecycleState::kOffboarded) r.offboarded.push_back(p.id.str());
      r.observational_ads[p.id.str()] = 0;
    }
    std::vector<AdRecord> ads;
    ads.reserve(r.ads.size());
    for (const auto& row : r.ads) ads.push_back(ad_from_json(row));
    std::vector<AdRecord> observational;
    for (const auto& ad : ads) {
      if (ad.phase != AdPhase::kObservational) continue;
      observational.push_back(ad);
      ++r.observational_ads[ad.participant_id.str()];
    }
    const auto m = stats::compute_ad_metrics(observational);
    r.view_rate = m.view_rate;
    r.click_rate_among_viewed = m.click_rate_among_viewed;
    std::vector<SwapDelivery> deliveries;
    for (const auto& row : r.deliveries) deliveries.push_back(delivery_from_json(row));
    r.swap_view_rate = stats::compute_ad_metrics(deliveries).view_rate;
    r.exclusivity = audit_exclusivity(participants, ads, deliveries);

    score_surveys(r);
    return r;
  }

  static void score_surveys(SimulationReport& r) {
    std::map<std::string, std::vector<survey::ScoredResponse>> by_phase;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> interest;
    for (const auto& row : r.surveys) {
      const auto s = survey::survey_from_json(row);
      if (!s.answers) continue;
      auto scored = survey::scored_responses(s);
      auto& bucket = by_phase[std::string(survey::to_string(s.phase))];
      bucket.insert(bucket.end(), scored.begin(), scored.end());
      auto& [self, partner] = interest[s.participant_id.str()];
      for (const auto& a : s.answers->per_ad) {
        const auto q = std::find_if(s.per_ad.begin(), s.per_ad.end(),
                                    [&](const auto& q) { return q.ad_id == a.ad_id; });
        if (q == s.per_ad.end()) continue;
        (q->category.self ? self : partner).push_back(a.interest);
      }
    }
    std::vector<survey::ScoredResponse> all;
    for (const auto& [phase, rows] : by_phase) {
      all.insert(all.end(), rows.begin(), rows.end());
      const auto s = survey::score_recognition(rows);
      r.recognition[phase] = {s.correct_rate, s.false_rate, s.seen_answered, s.unseen_answered};
    }
    const auto s = survey::score_recognition(all);
    r.recognition["all"] = {s.correct_rate, s.false_rate, s.seen_answered, s.unseen_answered};
    for (const auto& [pid, lists] : interest) {
      if (lists.first.empty() || lists.second.empty()) continue;
      r.self_interest.push_back(stats::mean(lists.first));
      r.partner_interest.push_back(stats::mean(lists.second));
    }
    if (r.self_interest.size() >= 2) {
      r.interest_gap = stats::paired_t_one_sided(r.self_interest, r.partner_interest);
    }
  }

  SimOptions options_;
  ScratchDir scratch_;
  ManualClock clock_;
  RecordingNotifier notifier_;
  server::Study study_;
  SimFetcher fetcher_;
  PlantedDetector detector_;
  pipeline::PipelineState pipeline_state_;
  pipeline::BlobStore blobs_;
  pipeline::Pipeline pipeline_;
  server::ApiRouter router_;
  std::unique_ptr<server::HttpServer> http_;
  std::unique_ptr<server::HttpTransport> http_transport_;
  server::Transport* transport_ = nullptr;
  std::unique_ptr<server::ApiClient> admin_;
  std::vector<std::unique_ptr<Agent>> agents_;
  std::size_t pairs_ = 0;
  std::size_t checks_ = 0;
  Json pipeline_runs_ = Json::array();
};

}  // namespace

SimulationReport run_simulation(const StudyConfig& config, const std::vector<SimProfile>& profiles,
                                const SimOptions& options) {
  if (profiles.size() < 2) throw Error(ErrorCode::kInvalidArgument, "simulation needs at least 2 profiles");
  config.validate();
  for (const auto& p : profiles) p.validate();
  Run run(config, profiles, options);
  return run.execute();
}

}  // namespace adaudit::sim
