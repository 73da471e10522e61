#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "adaudit/analysis/analysis.hpp"
#include "adaudit/common/error.hpp"

using namespace adaudit;
using namespace adaudit::analysis;
namespace fs = std::filesystem;

namespace {

Participant person(const std::string& id, const std::string& race, Gender g) {
  Participant p;
  p.id = ParticipantId(id);
  p.state = LifecycleState::kOffboarded;
  p.demographics = {"25-34", g, {race}, "bachelors", "50-100k", "west"};
  return p;
}

survey::SurveyInstance answered(const std::string& pid, survey::SurveyPhase phase,
                                const std::vector<std::tuple<bool, bool, int, const char*>>& items) {
  survey::SurveyInstance s;
  s.id = survey::survey_id_for(ParticipantId(pid), phase);
  s.participant_id = ParticipantId(pid);
  s.phase = phase;
  survey::SurveyAnswers a;
  int k = 0;
  for (const auto& [seen, self, interest, recog] : items) {
    const AdId id(pid + "-ad" + std::to_string(static_cast<int>(phase)) + std::to_string(k++));
    s.per_ad.push_back({id, {seen, self, k % 2 == 0}});
    a.per_ad.push_back({id, survey::parse_recognition(recog), interest, interest});
  }
  a.holistic = survey::HolisticAnswers{4, 5, 3};
  a.experience = {6, 5, 1, 2, ""};
  s.answers = a;
  return s;
}

/// Three participants with hand-chosen interest answers:
///   p1 obs {5,7} -> 6, interv {3} -> 3
///   p2 obs {4}   -> 4, interv {4,2} -> 3
///   p3 obs {6,6,3} -> 5, interv {5} -> 5
Dataset hand_dataset() {
  using survey::SurveyPhase;
  Dataset d;
  d.participants = {person("p1", "white", Gender::kMan), person("p2", "black", Gender::kWoman),
                    person("p3", "white", Gender::kWoman)};
  d.surveys = {
      answered("p1", SurveyPhase::kMidpoint, {{true, true, 5, "yes"}, {false, false, 7, "no"}}),
      answered("p1", SurveyPhase::kFinal, {{true, false, 3, "yes"}}),
      answered("p2", SurveyPhase::kMidpoint, {{true, true, 4, "no"}}),
      answered("p2", SurveyPhase::kFinal, {{true, false, 4, "unsure"}, {false, true, 2, "yes"}}),
      answered("p3", SurveyPhase::kMidpoint,
               {{true, true, 6, "yes"}, {true, true, 6, "yes"}, {false, false, 3, "no"}}),
      answered("p3", SurveyPhase::kFinal, {{true, false, 5, "no"}}),
  };
  for (int i = 0; i < 10; ++i) {
    AdRecord ad;
    ad.id = AdId("a" + std::to_string(i));
    ad.participant_id = ParticipantId(i < 4 ? "p1" : "p2");
    ad.phase = AdPhase::kObservational;
    ad.view_count = i % 4 == 0 ? 1 : 0;  // p1: a0 viewed of 4; p2: a4, a8 viewed of 6
    ad.click_count = i == 8 ? 1 : 0;
    ad.has_people = i % 2 == 0;
    d.ads.push_back(ad);
  }
  AdRecord gone;
  gone.id = AdId("a99");
  gone.participant_id = ParticipantId("p1");
  gone.redacted = true;
  gone.view_count = 5;
  d.ads.push_back(gone);
  return d;
}

}  // namespace

TEST(Analysis, PairedMatchesHandComputation) {
  const auto r = analyze(hand_dataset(), {.metric = Metric::kInterest, .model = Model::kPaired, .seed = 3});
  ASSERT_EQ(r.results.size(), 1u);
  const auto& t = r.results[0];
  // d = x - y = {3, 1, 0}; mean 4/3; sd = sqrt(((5/3)^2 + (1/3)^2 + (4/3)^2) / 2) = sqrt(7/3)
  const double mean = 4.0 / 3.0, sd = std::sqrt(7.0 / 3.0);
  EXPECT_NEAR(t.estimate, mean, 1e-12);
  EXPECT_NEAR(t.statistic, mean / (sd / std::sqrt(3.0)), 1e-12);
  EXPECT_EQ(t.df, 2);
  EXPECT_NEAR(*t.effect_size, mean / sd, 1e-12);
  std::map<std::string, double> v(r.values.begin(), r.values.end());
  EXPECT_NEAR(v.at("mean_observational"), 5.0, 1e-12);
  EXPECT_NEAR(v.at("mean_intervention"), 11.0 / 3.0, 1e-12);
  // Percent changes: -50, -25, 0 -> mean -25.
  EXPECT_NEAR(v.at("percent_change_mean"), -25.0, 1e-12);
  EXPECT_EQ(r.participants, 3u);
  EXPECT_EQ(r.observations, 10u);
}

TEST(Analysis, RecognitionCountsSeenAdsOnly) {
  const auto obs = observations(hand_dataset(), Metric::kRecognition, Level::kPerAd);
  // Seen items: p1 {yes}, {yes}; p2 {no}, {unsure}; p3 {yes, yes}, {no}.
  ASSERT_EQ(obs.size(), 7u);
  double yes = 0;
  for (const auto& o : obs) yes += o.value;
  EXPECT_EQ(yes, 4);
}

TEST(Analysis, ViewsSkipRedactedAndUseParticipantMeans) {
  const auto obs = observations(hand_dataset(), Metric::kViews, Level::kPerAd);
  EXPECT_EQ(obs.size(), 10u);
  const auto clicks = observations(hand_dataset(), Metric::kClicks, Level::kPerAd);
  ASSERT_EQ(clicks.size(), 3u);  // viewed ads only
  EXPECT_EQ(clicks[2].value, 1);
}

TEST(Analysis, WelchSplitsByBinaryFactor) {
  auto d = hand_dataset();
  EXPECT_THROW(analyze(d, {.model = Model::kWelch, .by = {"gender"}}), Error);
  // p4 (man) obs mean 2 -> men {6, 2}, women {4, 5}.
  d.participants.push_back(person("p4", "black", Gender::kMan));
  d.surveys.push_back(answered("p4", survey::SurveyPhase::kMidpoint, {{true, true, 2, "no"}}));
  const auto r = analyze(d, {.metric = Metric::kInterest, .model = Model::kWelch, .by = {"gender"}});
  ASSERT_EQ(r.results.size(), 1u);
  const auto& w = r.results[0];
  // means 4 and 4.5; variances 8 and 0.5; se = sqrt(8/2 + 0.5/2)
  EXPECT_NEAR(w.estimate, -0.5, 1e-12);
  EXPECT_NEAR(w.statistic, -0.5 / std::sqrt(4.25), 1e-12);
  EXPECT_NEAR(w.df, 4.25 * 4.25 / (16.0 + 0.0625), 1e-9);
  EXPECT_THROW(analyze(d, {.model = Model::kWelch, .by = {"age"}}), Error);
  EXPECT_THROW(analyze(d, {.model = Model::kWelch}), Error);
}

TEST(Analysis, ReportListsEveryResultField) {
  const auto text = format_report(analyze(hand_dataset(), {.seed = 1}));
  for (const char* k : {"procedure", "term", "estimate", "statistic", "df", "df2", "p_value",
                        "effect_size", "sides", "n", "flags"}) {
    EXPECT_NE(text.find(std::string("  ") + k + " "), std::string::npos) << k;
  }
  EXPECT_NE(text.find("metric interest\nmodel paired\n"), std::string::npos);
  EXPECT_EQ(text, format_report(analyze(hand_dataset(), {.seed = 1})));
}

TEST(Analysis, LmmAndOlsRun) {
  const auto lmm = analyze(hand_dataset(), {.metric = Metric::kInterest, .model = Model::kLmm,
                                            .by = {"seen", "study_phase"}});
  EXPECT_EQ(lmm.results.size(), 2u);
  const auto ols = analyze(hand_dataset(), {.metric = Metric::kInterest, .model = Model::kOls, .by = {"race"}});
  ASSERT_EQ(ols.results.size(), 1u);
  EXPECT_EQ(ols.results[0].df, 1);
  EXPECT_EQ(*ols.results[0].df2, 1);
  EXPECT_THROW(analyze(hand_dataset(), {.model = Model::kOls, .by = {"seen"}}), Error);
}

TEST(Analysis, DirectoryAndJsonFileLoadAlike) {
  const auto d = hand_dataset();
  Json tables = {{"participants", Json::array()}, {"ads", Json::array()}, {"surveys", Json::array()}};
  for (const auto& p : d.participants) tables["participants"].push_back(to_json(p));
  for (const auto& a : d.ads) tables["ads"].push_back(to_json(a));
  for (const auto& s : d.surveys) tables["surveys"].push_back(survey::to_json(s));
  const fs::path dir = fs::temp_directory_path() / ("adaudit-analysis-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  for (const char* t : {"participants", "ads", "surveys"}) {
    std::ofstream out(dir / (std::string(t) + ".jsonl"));
    for (const auto& row : tables[t]) out << row.dump() << '\n';
  }
  std::ofstream(dir / "bundle.json") << tables.dump();
  const AnalysisRequest req{.seed = 9};
  const auto a = format_report(analyze(load_dataset(dir), req));
  const auto b = format_report(analyze(load_dataset(dir / "bundle.json"), req));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, format_report(analyze(d, req)));
  fs::remove_all(dir);
}
