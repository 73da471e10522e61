#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adaudit/core/json.hpp"
#include "adaudit/core/types.hpp"
#include "adaudit/stats/result.hpp"
#include "adaudit/survey/survey.hpp"

namespace adaudit::analysis {

/// The four export tables of one study.
struct Dataset {
  std::vector<Participant> participants;
  std::vector<AdRecord> ads;
  std::vector<SwapDelivery> deliveries;
  std::vector<survey::SurveyInstance> surveys;
};

/// `path` is either a directory holding ads.jsonl, deliveries.jsonl,
/// participants.jsonl and surveys.jsonl (missing files read as empty), or a
/// JSON file {"ads": [...], "deliveries": [...], ...}.
Dataset load_dataset(const std::filesystem::path& path);
Dataset dataset_from_json(const Json& tables);

enum class Metric { kInterest, kRepresentativity, kRecognition, kViews, kClicks };
enum class Model { kPaired, kWelch, kOls, kLmm };
enum class Level { kPerAd, kHolistic };

Metric parse_metric(std::string_view s);
Model parse_model(std::string_view s);
Level parse_level(std::string_view s);
std::string_view to_string(Metric m);
std::string_view to_string(Model m);
std::string_view to_string(Level l);

/// Participant-level factors: age, gender, race, race_white, education,
/// income, region. Observation-level factors: seen, targeted_user,
/// has_people, study_phase.
const std::vector<std::string>& participant_factors();
const std::vector<std::string>& observation_factors();

/// One observation: a per-ad answer, a holistic answer, or a captured or
/// delivered ad for the view and click metrics.
struct Observation {
  std::string participant;
  std::string phase;  // "observational" or "intervention"
  double value = 0;
  std::map<std::string, std::string> factors;
};

/// Every observation of `metric` at `level`, participant factors attached.
/// Recognition at the per-ad level is 1 for "yes" on seen ads only (the
/// correct-recognition rate); views and clicks ignore `level`.
std::vector<Observation> observations(const Dataset& d, Metric metric, Level level);

struct AnalysisRequest {
  Metric metric = Metric::kInterest;
  Model model = Model::kPaired;
  Level level = Level::kPerAd;
  /// Factors for welch (exactly one binary factor), ols and lmm. Entries
  /// of the form "a*b" add both main effects and their interaction.
  std::vector<std::string> by;
  std::uint64_t seed = 0;
  int bootstrap_resamples = 500;
};

struct AnalysisReport {
  AnalysisRequest request;
  std::size_t participants = 0;
  std::size_t observations = 0;
  std::vector<stats::StatResult> results;
  /// Named scalars: group means, percent change, bootstrap CI, variance
  /// components.
  std::vector<std::pair<std::string, double>> values;
  std::vector<std::string> notes;
};

/// Runs the requested model:
///   paired  observational vs intervention participant means, one-sided
///           (observational > intervention), plus mean percent change and a
///           bootstrap CI on the mean difference;
///   welch   participant means (observational phase) split by one binary
///           factor, two-sided;
///   ols     participant means (observational phase) on participant factors;
///   lmm     observations with a random intercept per participant.
AnalysisReport analyze(const Dataset& d, const AnalysisRequest& request);

/// `key value` lines; StatResult blocks list every field.
std::string format_report(const AnalysisReport& r);

}  // namespace adaudit::analysis
