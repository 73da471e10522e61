#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace adaudit::stats {

enum class Sides { kOne, kTwo };

/// One test outcome. `df2` is set for F statistics.
struct StatResult {
  std::string procedure;
  std::string term;  // model term for F tests, empty otherwise
  double estimate = 0;
  double statistic = 0;
  double df = 0;
  std::optional<double> df2;
  double p_value = 1;
  std::optional<double> effect_size;  // Cohen's d
  Sides sides = Sides::kTwo;
  std::size_t n = 0;
  /// Conditions worth reading before the numbers, e.g. "zero_variance",
  /// "exact_fit", "boundary_fit", "wald_residual_df".
  std::vector<std::string> flags;

  bool has_flag(const std::string& f) const;
};

/// Infinite statistics serialize as the strings "inf" / "-inf".
nlohmann::ordered_json to_json(const StatResult& r);

}  // namespace adaudit::stats
