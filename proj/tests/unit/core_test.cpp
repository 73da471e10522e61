#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "adaudit/common/error.hpp"
#include "adaudit/common/rng.hpp"
#include "adaudit/core/cohort.hpp"
#include "adaudit/core/config.hpp"
#include "adaudit/core/json.hpp"
#include "adaudit/core/lifecycle.hpp"
#include "adaudit/core/redaction.hpp"

namespace adaudit {
namespace {

const Instant kT0 = parse_iso8601("2024-01-01T00:00:00Z");

Participant make_participant(int i, std::set<std::string> race, Gender gender) {
  Participant p;
  p.id = ParticipantId("P" + std::to_string(i));
  p.demographics = {"25-34", gender, std::move(race), "bachelors", "50-100k", "west"};
  return p;
}

/// Waitlist with `nonwhite` members first, then white members; genders cycle.
std::vector<Participant> make_waitlist(int total, int nonwhite, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Participant> out;
  const Gender genders[] = {Gender::kMan, Gender::kWoman, Gender::kNonBinary, Gender::kUndisclosed};
  for (int i = 0; i < total; ++i) {
    const auto g = genders[rng.below(10) < 5 ? 0 : 1 + rng.below(3)];
    std::set<std::string> race;
    if (i < nonwhite) race = {i % 3 == 0 ? "black" : i % 3 == 1 ? "asian" : "hispanic"};
    else race = {"white"};
    out.push_back(make_participant(i, race, g));
  }
  return out;
}

// ---------------------------------------------------------------- cohort

TEST(Cohort, StudyScaleAllNonWhiteIncluded) {
  auto waitlist = make_waitlist(1310, 247, 5);
  const auto cohort = select_balanced_cohort(waitlist, 600, 99);
  ASSERT_EQ(cohort.size(), 600u);
  int nonwhite = 0;
  for (const auto& p : cohort) {
    if (!p.demographics.identifies_white_only()) ++nonwhite;
    EXPECT_EQ(p.state, LifecycleState::kSelected);
  }
  EXPECT_EQ(nonwhite, 247);
  EXPECT_EQ(600 - nonwhite, 353);
}

TEST(Cohort, AllNonWhiteIsIdentity) {
  auto waitlist = make_waitlist(12, 12, 1);
  const auto cohort = select_balanced_cohort(waitlist, 12, 3);
  ASSERT_EQ(cohort.size(), waitlist.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) EXPECT_EQ(cohort[i].id, waitlist[i].id);
}

TEST(Cohort, OverflowIsAnError) {
  auto waitlist = make_waitlist(30, 20, 1);
  try {
    select_balanced_cohort(waitlist, 15, 3);
    FAIL() << "expected overflow error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("overflow 5"), std::string::npos) << e.what();
  }
  EXPECT_THROW(select_balanced_cohort(waitlist, 31, 3), Error);
}

// Independent rendering of the documented rule: best allocation by
// exhaustive search, then partial Fisher-Yates per group.
std::set<std::string> oracle_cohort(const std::vector<Participant>& w, std::size_t quota,
                                    std::uint64_t seed) {
  std::vector<std::size_t> nonwhite, men, marg, und;
  long m0 = 0, g0 = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto& d = w[i].demographics;
    const bool white = d.race == std::set<std::string>{"white"};
    const bool is_m = d.gender == Gender::kMan;
    const bool is_g = d.gender == Gender::kWoman || d.gender == Gender::kNonBinary;
    if (!white) {
      nonwhite.push_back(i);
      m0 += is_m;
      g0 += is_g;
    } else if (is_m) men.push_back(i);
    else if (is_g) marg.push_back(i);
    else und.push_back(i);
  }
  const long r = static_cast<long>(quota - nonwhite.size());
  const long ku = std::max(0L, r - static_cast<long>(men.size() + marg.size()));
  long best_km = -1, best_kg = -1;
  for (long km = 0; km <= std::min<long>(r, men.size()); ++km) {
    const long kg = r - ku - km;
    if (kg < 0 || kg > static_cast<long>(marg.size())) continue;
    const long diff = (g0 + kg) - (m0 + km);
    if (best_km < 0) {
      best_km = km, best_kg = kg;
      continue;
    }
    const long best_diff = (g0 + best_kg) - (m0 + best_km);
    if (std::abs(diff) < std::abs(best_diff) ||
        (std::abs(diff) == std::abs(best_diff) && diff > best_diff)) {
      best_km = km, best_kg = kg;
    }
  }
  std::set<std::string> out;
  for (auto i : nonwhite) out.insert(w[i].id.str());
  Rng rng(seed);
  auto take = [&](std::vector<std::size_t> group, long k) {
    for (long i = 0; i < k; ++i) {
      const auto j = i + static_cast<long>(rng.below(group.size() - i));
      std::swap(group[i], group[j]);
      out.insert(w[group[i]].id.str());
    }
  };
  take(men, best_km);
  take(marg, best_kg);
  take(und, ku);
  return out;
}

TEST(Cohort, MatchesIndependentRuleOnSmallWaitlists) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto waitlist = make_waitlist(20, 4, 1000 + s);
    const auto cohort = select_balanced_cohort(waitlist, 10, s);
    std::set<std::string> got;
    for (const auto& p : cohort) got.insert(p.id.str());
    ASSERT_EQ(got, oracle_cohort(waitlist, 10, s)) << "seed " << s;
  }
}

TEST(Cohort, DeterministicUnderSeed) {
  auto waitlist = make_waitlist(100, 10, 4);
  const auto a = select_balanced_cohort(waitlist, 40, 8);
  const auto b = select_balanced_cohort(waitlist, 40, 8);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].id, b[i].id);
}

TEST(Cohort, NeverExcludesNonWhiteWhenQuotaPermits) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    Rng rng(s);
    const int total = 10 + static_cast<int>(rng.below(60));
    const int nonwhite = static_cast<int>(rng.below(total + 1));
    auto waitlist = make_waitlist(total, nonwhite, s);
    const auto quota = nonwhite + rng.below(total - nonwhite + 1);
    if (quota == 0) continue;
    const auto cohort = select_balanced_cohort(waitlist, quota, s);
    int count = 0;
    for (const auto& p : cohort) count += !p.demographics.identifies_white_only();
    ASSERT_EQ(count, nonwhite);
    ASSERT_EQ(cohort.size(), quota);
  }
}

// ---------------------------------------------------------------- pairing

std::vector<ParticipantId> ids(int n) {
  std::vector<ParticipantId> out;
  for (int i = 0; i < n; ++i) out.emplace_back("P" + std::to_string(i));
  return out;
}

TEST(Pairing, TwoParticipantsOneMatching) {
  const auto p = assign_swap_pairs(ids(2), 1);
  ASSERT_EQ(p.pairs.size(), 1u);
  EXPECT_FALSE(p.unpaired);
  std::set<ParticipantId> members{p.pairs[0].first, p.pairs[0].second};
  EXPECT_EQ(members, (std::set<ParticipantId>{ParticipantId("P0"), ParticipantId("P1")}));
}

TEST(Pairing, ThreeParticipantsUniformOverMatchings) {
  // The three matchings are identified by which participant is unpaired.
  std::map<std::string, int> freq;
  const int runs = 3000;
  for (int s = 0; s < runs; ++s) {
    const auto p = assign_swap_pairs(ids(3), s);
    ASSERT_EQ(p.pairs.size(), 1u);
    ASSERT_TRUE(p.unpaired);
    ++freq[p.unpaired->str()];
  }
  ASSERT_EQ(freq.size(), 3u);
  for (const auto& [id, n] : freq) EXPECT_NEAR(n / double(runs), 1.0 / 3.0, 0.05) << id;
}

TEST(Pairing, FullCohortGives201Pairs) {
  const auto p = assign_swap_pairs(ids(402), 7);
  EXPECT_EQ(p.pairs.size(), 201u);
  EXPECT_FALSE(p.unpaired);
}

TEST(Pairing, InvolutionWithoutFixedPointsForEverySeed) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    const int n = 2 + static_cast<int>(s % 17);
    std::vector<Participant> people;
    for (const auto& id : ids(n)) people.push_back(Participant{.id = id});
    std::vector<Participant*> ptrs;
    for (auto& p : people) ptrs.push_back(&p);
    apply_pairing(assign_swap_pairs(ids(n), s), ptrs);
    int unpaired = 0;
    for (const auto& p : people) {
      if (!p.partner_id) {
        ++unpaired;
        EXPECT_TRUE(p.excluded_from_intervention);
        continue;
      }
      ASSERT_NE(*p.partner_id, p.id);
      const auto& partner = *std::find_if(people.begin(), people.end(),
                                          [&](const auto& q) { return q.id == *p.partner_id; });
      ASSERT_EQ(*partner.partner_id, p.id);
    }
    EXPECT_EQ(unpaired, n % 2);
  }
}

TEST(Pairing, RejectsTooFewAndRepairing) {
  EXPECT_THROW(assign_swap_pairs(ids(1), 0), Error);
  std::vector<Participant> people{Participant{.id = ParticipantId("P0")},
                                  Participant{.id = ParticipantId("P1")}};
  std::vector<Participant*> ptrs{&people[0], &people[1]};
  apply_pairing(assign_swap_pairs(ids(2), 0), ptrs);
  EXPECT_THROW(apply_pairing(assign_swap_pairs(ids(2), 1), ptrs), Error);
}

// ---------------------------------------------------------------- lifecycle

Participant in_state(LifecycleState s, Instant since) {
  Participant p;
  p.id = ParticipantId("P1");
  p.state = s;
  p.entered_at[s] = since;
  return p;
}

TEST(Lifecycle, ObservationalDaySevenMovesToMidpointSurvey) {
  const StudyConfig config;
  auto p = in_state(LifecycleState::kObservational, kT0);
  const auto out = advance_phase(p, kT0 + 7 * kDay, config, {.ads_in_phase = 120});
  EXPECT_EQ(out.state, LifecycleState::kMidpointSurvey);
  EXPECT_TRUE(out.changed);
  ASSERT_TRUE(out.gate);
  EXPECT_TRUE(out.gate->pass);
}

TEST(Lifecycle, ObservationalBeforeDaySevenStays) {
  const StudyConfig config;
  auto p = in_state(LifecycleState::kObservational, kT0);
  const auto out = advance_phase(p, kT0 + 7 * kDay - Seconds(1), config, {.ads_in_phase = 120});
  EXPECT_EQ(out.state, LifecycleState::kObservational);
  EXPECT_FALSE(out.changed);
}

TEST(Lifecycle, TerminalParticipantRejected) {
  const StudyConfig config;
  auto p = in_state(LifecycleState::kOffboarded, kT0);
  try {
    advance_phase(p, kT0, config, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIllegalTransition);
    EXPECT_NE(std::string(e.what()).find("offboarded"), std::string::npos);
  }
}

TEST(Lifecycle, DayFourZeroAdsSignalsReminderOnce) {
  const StudyConfig config;
  auto p = in_state(LifecycleState::kObservational, kT0);
  auto out = advance_phase(p, kT0 + 4 * kDay, config, {.ads_in_phase = 0});
  EXPECT_EQ(out.state, LifecycleState::kObservational);
  EXPECT_TRUE(out.reminder_needed);
  out = advance_phase(p, kT0 + 4 * kDay + kHour, config, {.ads_in_phase = 0});
  EXPECT_FALSE(out.reminder_needed);
  auto q = in_state(LifecycleState::kObservational, kT0);
  EXPECT_FALSE(advance_phase(q, kT0 + 4 * kDay, config, {.ads_in_phase = 3}).reminder_needed);
  auto r = in_state(LifecycleState::kObservational, kT0);
  EXPECT_FALSE(advance_phase(r, kT0 + 3 * kDay, config, {.ads_in_phase = 0}).reminder_needed);
}

TEST(Lifecycle, GateFailureDrops) {
  const StudyConfig config;
  auto p = in_state(LifecycleState::kObservational, kT0);
  const auto out = advance_phase(p, kT0 + 7 * kDay, config, {.ads_in_phase = 10});
  EXPECT_EQ(out.state, LifecycleState::kDropped);
  ASSERT_TRUE(out.gate);
  EXPECT_EQ(out.gate->reason, "insufficient_ads");
}

TEST(Lifecycle, SurveyStatesWaitForMilestones) {
  const StudyConfig config;
  auto p = in_state(LifecycleState::kMidpointSurvey, kT0);
  p.partner_id = ParticipantId("P2");
  EXPECT_EQ(advance_phase(p, kT0 + 30 * kDay, config, {.partner_pool_size = 5}).state,
            LifecycleState::kMidpointSurvey);
  p.milestones_completed.insert(Milestone::kMidpointSurvey);
  EXPECT_EQ(advance_phase(p, kT0 + 30 * kDay, config, {.partner_pool_size = 5}).state,
            LifecycleState::kIntervention);

  auto lone = in_state(LifecycleState::kMidpointSurvey, kT0);
  lone.excluded_from_intervention = true;
  lone.milestones_completed.insert(Milestone::kMidpointSurvey);
  EXPECT_EQ(advance_phase(lone, kT0, config, {}).state, LifecycleState::kOffboarded);

  auto fin = in_state(LifecycleState::kFinalSurvey, kT0);
  fin.milestones_completed.insert(Milestone::kFinalSurvey);
  EXPECT_EQ(advance_phase(fin, kT0, config, {}).state, LifecycleState::kOffboarded);
}

TEST(Lifecycle, IllegalTransitionsRejected) {
  auto p = in_state(LifecycleState::kObservational, kT0);
  EXPECT_THROW(transition(p, LifecycleState::kIntervention, kT0), Error);
  EXPECT_THROW(transition(p, LifecycleState::kWaitlisted, kT0), Error);
  EXPECT_FALSE(is_legal_transition(LifecycleState::kSelected, LifecycleState::kMidpointSurvey));
  EXPECT_FALSE(is_legal_transition(LifecycleState::kDropped, LifecycleState::kWaitlisted));
}

TEST(Lifecycle, RandomHistoriesArePathsInTheGraph) {
  const StudyConfig config;
  for (std::uint64_t s = 0; s < 300; ++s) {
    Rng rng(s);
    auto p = in_state(LifecycleState::kOnboarding, kT0);
    p.milestones_completed.insert(Milestone::kOnboarding);
    p.partner_id = ParticipantId("P2");
    std::vector<LifecycleState> history{p.state};
    Instant now = kT0;
    for (int step = 0; step < 60 && !is_terminal(p.state); ++step) {
      now += Seconds(static_cast<std::int64_t>(rng.below(2 * 86400)));
      if (rng.bernoulli(0.2)) p.milestones_completed.insert(Milestone::kMidpointSurvey);
      if (rng.bernoulli(0.2)) p.milestones_completed.insert(Milestone::kFinalSurvey);
      const auto out = advance_phase(
          p, now, config,
          {.ads_in_phase = static_cast<std::int64_t>(rng.below(100)), .partner_pool_size = 10});
      if (out.changed) history.push_back(out.state);
    }
    std::set<LifecycleState> seen;
    for (std::size_t i = 0; i < history.size(); ++i) {
      ASSERT_TRUE(seen.insert(history[i]).second) << "state repeated";
      if (i > 0) {
        ASSERT_TRUE(is_legal_transition(history[i - 1], history[i]));
      }
    }
  }
}

// ---------------------------------------------------------------- activity gate

TEST(ActivityGate, ThresholdExamples) {
  const StudyConfig config;  // gate 50
  auto p = in_state(LifecycleState::kObservational, kT0);
  EXPECT_TRUE(check_activity_gate(p, AdPhase::kObservational, 100, config, kT0).pass);
  EXPECT_EQ(p.state, LifecycleState::kObservational);
  const auto fail = check_activity_gate(p, AdPhase::kObservational, 0, config, kT0);
  EXPECT_FALSE(fail.pass);
  EXPECT_EQ(fail.reason, "insufficient_ads");
  EXPECT_EQ(p.state, LifecycleState::kDropped);
}

TEST(ActivityGate, SimulatedCohortDropRateMatchesRecount) {
  const StudyConfig config;
  Rng rng(2024);
  std::vector<std::int64_t> counts;
  int dropped = 0;
  for (int i = 0; i < 50; ++i) {
    // Geometric ad counts with mean ~80.
    std::int64_t n = 0;
    while (!rng.bernoulli(1.0 / 80.0)) ++n;
    counts.push_back(n);
    auto p = in_state(LifecycleState::kObservational, kT0);
    if (!advance_phase(p, kT0 + 7 * kDay, config, {.ads_in_phase = n}).gate->pass) ++dropped;
  }
  const auto recount = std::count_if(counts.begin(), counts.end(),
                                     [&](auto n) { return n < config.min_ads_gate; });
  EXPECT_EQ(dropped, recount);
  EXPECT_GT(recount, 0);
}

// ---------------------------------------------------------------- redaction

struct AdPool {
  Participant owner;
  std::vector<AdRecord> ads;
};

AdPool make_pool(int n) {
  AdPool pool;
  pool.owner.id = ParticipantId("P1");
  for (int i = 0; i < n; ++i) {
    AdRecord ad;
    ad.id = AdId("A" + std::to_string(i));
    ad.participant_id = pool.owner.id;
    ad.image_url = "https://img.example/" + std::to_string(i) + ".png";
    ad.target_url = "https://shop.example/";
    ad.source_page_url = "https://news.example/";
    ad.view_count = i % 3;
    ad.captured_at = kT0 + Seconds(i);
    pool.ads.push_back(ad);
  }
  return pool;
}

TEST(Redaction, RedactNineOfThousand) {
  auto pool = make_pool(1000);
  std::vector<AdRecord*> targets;
  for (int i = 0; i < 9; ++i) targets.push_back(&pool.ads[i * 100]);
  const auto receipt = redact_ads(pool.owner, targets);
  EXPECT_EQ(receipt.count, 9);
  EXPECT_EQ(pool.owner.redaction_count, 9);
  const auto eligible = std::count_if(pool.ads.begin(), pool.ads.end(),
                                      [](const auto& a) { return !a.redacted; });
  EXPECT_EQ(eligible, 991);
  const auto& r = pool.ads[0];
  EXPECT_TRUE(r.redacted);
  EXPECT_FALSE(r.image_url);
  EXPECT_TRUE(r.target_url.empty());
  EXPECT_TRUE(r.source_page_url.empty());
  EXPECT_EQ(r.id, AdId("A0"));
  EXPECT_EQ(r.captured_at, kT0);
}

TEST(Redaction, EmptyListNoChange) {
  auto pool = make_pool(3);
  EXPECT_EQ(redact_ads(pool.owner, {}).count, 0);
  EXPECT_EQ(pool.owner.redaction_count, 0);
}

TEST(Redaction, ForeignAdRejectedWithoutPartialEffect) {
  auto pool = make_pool(3);
  auto other = make_pool(1);
  other.ads[0].participant_id = ParticipantId("P9");
  std::vector<AdRecord*> targets{&pool.ads[0], &other.ads[0]};
  EXPECT_THROW(redact_ads(pool.owner, targets), Error);
  EXPECT_FALSE(pool.ads[0].redacted);
  EXPECT_EQ(pool.owner.redaction_count, 0);
}

TEST(Redaction, RepeatDoesNotDoubleCount) {
  auto pool = make_pool(3);
  std::vector<AdRecord*> targets{&pool.ads[1]};
  redact_ads(pool.owner, targets);
  EXPECT_EQ(redact_ads(pool.owner, targets).count, 0);
  EXPECT_EQ(pool.owner.redaction_count, 1);
}

// ---------------------------------------------------------------- config & export

TEST(Config, ParsesDocumentedKeys) {
  const auto c = parse_study_config(
      "# study\nobservational_days = 5\nmin_ads_gate=20 # low\nrng_seed = 77\n"
      "vocab.region = north, south\n");
  EXPECT_EQ(c.observational_days, 5);
  EXPECT_EQ(c.intervention_days, 7);
  EXPECT_EQ(c.min_ads_gate, 20);
  EXPECT_EQ(c.rng_seed, 77u);
  EXPECT_EQ(c.vocabulary.region, (std::vector<std::string>{"north", "south"}));
  EXPECT_EQ(c.max_per_ad_questions(), 24);
  EXPECT_THROW(parse_study_config("bogus = 1"), Error);
  EXPECT_THROW(parse_study_config("min_ads_gate = 0"), Error);
  EXPECT_THROW(parse_study_config("min_ads_gate"), Error);
  const auto again = parse_study_config(format_study_config(c));
  EXPECT_EQ(format_study_config(again), format_study_config(c));
}

TEST(Config, DemographicsValidation) {
  const Vocabulary vocab;
  Demographics d{"25-34", Gender::kWoman, {"black"}, "graduate", "<25k", "south"};
  EXPECT_NO_THROW(validate_demographics(d, vocab));
  d.race.clear();
  EXPECT_THROW(validate_demographics(d, vocab), Error);
  d.race = {"martian"};
  EXPECT_THROW(validate_demographics(d, vocab), Error);
}

TEST(ParticipantExport, StableFieldOrderOneRecordPerLine) {
  auto p = make_participant(1, {"asian", "white"}, Gender::kNonBinary);
  p.state = LifecycleState::kObservational;
  p.entered_at[p.state] = kT0;
  p.partner_id = ParticipantId("P2");
  const auto text = export_participants_jsonl({p, p});
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  const auto first = text.substr(0, text.find('\n'));
  EXPECT_TRUE(first.starts_with(R"({"id":"P1","demographics":{"age":"25-34","gender":"non_binary")"))
      << first;
  const auto back = participant_from_json(Json::parse(first));
  EXPECT_EQ(back.demographics, p.demographics);
  EXPECT_EQ(back.partner_id, p.partner_id);
  EXPECT_EQ(to_json(back).dump(), first);
  EXPECT_EQ(p.demographics.race_label(), "multiracial");
}

}  // namespace
}  // namespace adaudit
