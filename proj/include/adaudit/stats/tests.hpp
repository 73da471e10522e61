#pragma once

#include <span>

#include "adaudit/stats/result.hpp"

namespace adaudit::stats {

/// One-sided paired t-test of H1: mean(x - y) > 0.
/// Cohen's d = mean(d) / sd(d), so d = t / sqrt(n).
/// Zero-variance differences with nonzero mean give t = ±inf, p at its
/// limit and the "zero_variance" flag. Throws for n < 2 or size mismatch.
StatResult paired_t_one_sided(std::span<const double> x, std::span<const double> y);

/// Welch two-sample t-test, two-sided, Welch-Satterthwaite df.
/// estimate = mean(a) - mean(b); effect size uses the root mean of the two
/// sample variances. Both variances zero: t = 0 if the means agree (p = 1),
/// else ±inf (p = 0); df falls back to na + nb - 2 and "zero_variance" is set.
StatResult welch_t_two_sided(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> v);
/// Sample variance (n - 1 denominator).
double variance(std::span<const double> v);
double median(std::span<const double> v);
/// Linear-interpolation quantile (type 7), q in [0, 1].
double quantile(std::span<const double> v, double q);

}  // namespace adaudit::stats
