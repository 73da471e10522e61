#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace adaudit::stats {

enum class Statistic { kMean, kMedian, kRatioOfSums };

struct BootstrapResult {
  double point = 0;     // statistic on the original data
  double ci_low = 0;    // 2.5th percentile of replicates
  double ci_high = 0;   // 97.5th percentile
  double replicate_mean = 0;
  double replicate_median = 0;
  double replicate_sd = 0;
  std::size_t resample_size = 0;
  std::vector<double> replicates;
};

/// Percentile bootstrap. Each replicate resamples |data| indices with
/// replacement from a generator seeded with `seed`.
/// kRatioOfSums needs `denominator` with the same length as `data`.
BootstrapResult bootstrap_stat(std::span<const double> data, Statistic statistic,
                               int n_resamples, std::uint64_t seed,
                               std::span<const double> denominator = {});

}  // namespace adaudit::stats
