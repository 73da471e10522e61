#include "adaudit/stats/result.hpp"

#include <algorithm>
#include <cmath>

namespace adaudit::stats {

bool StatResult::has_flag(const std::string& f) const {
  return std::find(flags.begin(), flags.end(), f) != flags.end();
}

namespace {

nlohmann::ordered_json number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return nullptr;
  return v;
}

}  // namespace

nlohmann::ordered_json to_json(const StatResult& r) {
  nlohmann::ordered_json j;
  j["procedure"] = r.procedure;
  if (!r.term.empty()) j["term"] = r.term;
  j["estimate"] = number(r.estimate);
  j["statistic"] = number(r.statistic);
  j["df"] = number(r.df);
  j["df2"] = r.df2 ? number(*r.df2) : nlohmann::ordered_json(nullptr);
  j["p_value"] = number(r.p_value);
  j["effect_size"] = r.effect_size ? number(*r.effect_size) : nlohmann::ordered_json(nullptr);
  j["sides"] = r.sides == Sides::kOne ? "one" : "two";
  j["n"] = r.n;
  j["flags"] = r.flags;
  return j;
}

}  // namespace adaudit::stats
