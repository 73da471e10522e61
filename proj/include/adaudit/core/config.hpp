#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "adaudit/core/types.hpp"

namespace adaudit {

/// Closed vocabularies for demographic fields.
struct Vocabulary {
  std::vector<std::string> age{"18-24", "25-34", "35-44", "45-54", "55-64", "65+"};
  std::vector<std::string> race{"white",    "black",           "asian",
                                "hispanic", "native_american", "pacific_islander",
                                "other",    "undisclosed"};
  std::vector<std::string> education{"high_school", "some_college", "bachelors", "graduate",
                                     "undisclosed"};
  std::vector<std::string> income{"<25k", "25-50k", "50-100k", "100k+", "undisclosed"};
  std::vector<std::string> region{"northeast", "midwest", "south", "west"};
};

struct StudyConfig {
  int observational_days = 7;
  int intervention_days = 7;
  int min_ads_gate = 50;
  int reminder_day = 4;
  int holistic_sample_max = 40;
  int per_ad_per_category_max = 4;
  std::int64_t milestone_payment_units = 10;
  std::uint64_t rng_seed = 0;
  /// Percentages for the seven holistic recognition buckets (1..7).
  std::array<double, 7> recognition_bucket_percent{0, 10, 25, 50, 75, 90, 100};
  Vocabulary vocabulary;

  int max_per_ad_questions() const { return per_ad_per_category_max * 6; }

  /// Throws Error(kInvalidArgument) on any out-of-range value.
  void validate() const;
};

/// Parse a `key = value` file (`#` comments). Unknown keys are an error.
StudyConfig parse_study_config(std::string_view text);
std::string format_study_config(const StudyConfig& config);

/// Throws Error(kInvalidArgument) naming the offending field.
void validate_demographics(const Demographics& d, const Vocabulary& vocab);

}  // namespace adaudit
