#include "adaudit/stats/bootstrap.hpp"

#include <cmath>

#include "adaudit/common/error.hpp"
#include "adaudit/common/rng.hpp"
#include "adaudit/stats/tests.hpp"

namespace adaudit::stats {

namespace {

double evaluate(Statistic s, std::span<const double> data, std::span<const double> den) {
  switch (s) {
    case Statistic::kMean: return mean(data);
    case Statistic::kMedian: return median(data);
    case Statistic::kRatioOfSums: {
      double num = 0, d = 0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        num += data[i];
        d += den[i];
      }
      return d == 0 ? std::nan("") : num / d;
    }
  }
  return std::nan("");
}

}  // namespace

BootstrapResult bootstrap_stat(std::span<const double> data, Statistic statistic,
                               int n_resamples, std::uint64_t seed,
                               std::span<const double> denominator) {
  if (data.empty()) throw Error(ErrorCode::kPrecondition, "bootstrap of empty data");
  if (n_resamples < 1) throw Error(ErrorCode::kInvalidArgument, "n_resamples must be positive");
  const bool ratio = statistic == Statistic::kRatioOfSums;
  if (ratio && denominator.size() != data.size()) {
    throw Error(ErrorCode::kInvalidArgument, "ratio bootstrap needs a matching denominator");
  }
  BootstrapResult r;
  r.point = evaluate(statistic, data, denominator);
  r.resample_size = data.size();
  r.replicates.reserve(static_cast<std::size_t>(n_resamples));

  Rng rng(seed);
  std::vector<double> sample(data.size()), sample_den(ratio ? data.size() : 0);
  for (int b = 0; b < n_resamples; ++b) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto k = static_cast<std::size_t>(rng.below(data.size()));
      sample[i] = data[k];
      if (ratio) sample_den[i] = denominator[k];
    }
    r.replicates.push_back(evaluate(statistic, sample, sample_den));
  }
  r.ci_low = quantile(r.replicates, 0.025);
  r.ci_high = quantile(r.replicates, 0.975);
  r.replicate_mean = mean(r.replicates);
  r.replicate_median = median(r.replicates);
  r.replicate_sd = r.replicates.size() > 1 ? std::sqrt(variance(r.replicates)) : 0.0;
  return r;
}

}  // namespace adaudit::stats
