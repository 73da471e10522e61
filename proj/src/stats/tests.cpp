#include "adaudit/stats/tests.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "adaudit/common/error.hpp"
#include "adaudit/stats/distributions.hpp"

namespace adaudit::stats {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_size(std::span<const double> v, const char* what) {
  if (v.size() < 2) {
    throw Error(ErrorCode::kPrecondition, std::string(what) + " needs at least 2 observations");
  }
}

}  // namespace

double mean(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorCode::kPrecondition, "mean of empty sample");
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance(std::span<const double> v) {
  require_size(v, "variance");
  const double m = mean(v);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

double quantile(std::span<const double> v, double q) {
  if (v.empty()) throw Error(ErrorCode::kPrecondition, "quantile of empty sample");
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  const double h = (static_cast<double>(s.size()) - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

double median(std::span<const double> v) { return quantile(v, 0.5); }

StatResult paired_t_one_sided(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::kInvalidArgument, "paired samples differ in length");
  }
  require_size(x, "paired t-test");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
  const double n = static_cast<double>(d.size());
  const double md = mean(d);
  const double sd = std::sqrt(variance(d));

  StatResult r;
  r.procedure = "paired_t_one_sided";
  r.estimate = md;
  r.df = n - 1;
  r.sides = Sides::kOne;
  r.n = d.size();
  if (sd == 0) {
    r.flags.push_back("zero_variance");
    if (md == 0) {
      r.statistic = 0;
      r.p_value = 0.5;
      r.effect_size = 0;
    } else {
      r.statistic = md > 0 ? kInf : -kInf;
      r.p_value = md > 0 ? 0 : 1;
      r.effect_size = r.statistic;
    }
    return r;
  }
  r.statistic = md / (sd / std::sqrt(n));
  r.p_value = student_t_sf(r.statistic, r.df);
  r.effect_size = md / sd;
  return r;
}

StatResult welch_t_two_sided(std::span<const double> a, std::span<const double> b) {
  require_size(a, "welch t-test");
  require_size(b, "welch t-test");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = mean(a), mb = mean(b);
  const double va = variance(a), vb = variance(b);

  StatResult r;
  r.procedure = "welch_t_two_sided";
  r.estimate = ma - mb;
  r.sides = Sides::kTwo;
  r.n = a.size() + b.size();
  if (va == 0 && vb == 0) {
    r.flags.push_back("zero_variance");
    r.df = na + nb - 2;
    if (ma == mb) {
      r.statistic = 0;
      r.p_value = 1;
      r.effect_size = 0;
    } else {
      r.statistic = ma > mb ? kInf : -kInf;
      r.p_value = 0;
      r.effect_size = r.statistic;
    }
    return r;
  }
  const double sa = va / na, sb = vb / nb;
  r.statistic = (ma - mb) / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1) + sb * sb / (nb - 1));
  r.p_value = student_t_two_sided(r.statistic, r.df);
  r.effect_size = (ma - mb) / std::sqrt((va + vb) / 2);
  return r;
}

}  // namespace adaudit::stats
