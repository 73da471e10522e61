#include "adaudit/stats/metrics.hpp"

namespace adaudit::stats {

namespace {

template <class Rec>
void count(AdMetrics& m, const Rec& r) {
  ++m.delivered;
  if (r.view_count > 0) {
    ++m.viewed;
    if (r.click_count > 0) ++m.clicked;
  }
}

void finish(AdMetrics& m) {
  if (m.delivered > 0) m.view_rate = static_cast<double>(m.viewed) / m.delivered;
  if (m.viewed > 0) m.click_rate_among_viewed = static_cast<double>(m.clicked) / m.viewed;
}

}  // namespace

AdMetrics compute_ad_metrics(std::span<const AdRecord> ads) {
  AdMetrics m;
  for (const auto& a : ads) {
    if (!a.redacted) count(m, a);
  }
  finish(m);
  return m;
}

AdMetrics compute_ad_metrics(std::span<const SwapDelivery> deliveries) {
  AdMetrics m;
  for (const auto& d : deliveries) count(m, d);
  finish(m);
  return m;
}

std::optional<double> percent_change(double obs, double interv) {
  if (obs == 0) return std::nullopt;
  return 100 * (interv - obs) / obs;
}

PercentChangeSummary mean_percent_change(std::span<const std::pair<double, double>> pairs) {
  PercentChangeSummary s;
  double sum = 0;
  for (const auto& [obs, interv] : pairs) {
    if (const auto pc = percent_change(obs, interv)) {
      sum += *pc;
      ++s.used;
    } else {
      ++s.excluded;
    }
  }
  if (s.used > 0) s.mean = sum / static_cast<double>(s.used);
  return s;
}

}  // namespace adaudit::stats
