#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adaudit/core/types.hpp"

namespace adaudit::stats {

struct AdMetrics {
  std::size_t delivered = 0;
  std::size_t viewed = 0;
  std::size_t clicked = 0;  // viewed and clicked at least once
  std::optional<double> view_rate;               // viewed / delivered
  std::optional<double> click_rate_among_viewed; // clicked / viewed
};

/// Redacted records are skipped.
AdMetrics compute_ad_metrics(std::span<const AdRecord> ads);
AdMetrics compute_ad_metrics(std::span<const SwapDelivery> deliveries);

/// 100 (interv - obs) / obs; nullopt when obs == 0.
std::optional<double> percent_change(double obs, double interv);

struct PercentChangeSummary {
  double mean = 0;
  std::size_t used = 0;
  std::size_t excluded = 0;
};

/// Mean per-participant percent change over (obs, interv) pairs, skipping
/// zero baselines.
PercentChangeSummary mean_percent_change(std::span<const std::pair<double, double>> pairs);

struct MetricDiff {
  std::string participant_id;
  std::string metric;
  double obs_value = 0;
  double interv_value = 0;
  double diff() const { return interv_value - obs_value; }
};

}  // namespace adaudit::stats
