#include "adaudit/analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "adaudit/common/error.hpp"
#include "adaudit/core/config.hpp"
#include "adaudit/stats/bootstrap.hpp"
#include "adaudit/stats/design.hpp"
#include "adaudit/stats/metrics.hpp"
#include "adaudit/stats/models.hpp"
#include "adaudit/stats/tests.hpp"

namespace adaudit::analysis {

namespace fs = std::filesystem;

// --- loading -------------------------------------------------------------------

namespace {

std::vector<Json> read_jsonl(const fs::path& file) {
  std::vector<Json> rows;
  std::ifstream in(file);
  if (!in) return rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::kInvalidArgument,
                  file.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace

Dataset dataset_from_json(const Json& tables) {
  Dataset d;
  auto rows = [&](const char* key) {
    return tables.contains(key) ? tables.at(key) : Json::array();
  };
  for (const auto& r : rows("participants")) d.participants.push_back(participant_from_json(r));
  for (const auto& r : rows("ads")) d.ads.push_back(ad_from_json(r));
  for (const auto& r : rows("deliveries")) d.deliveries.push_back(delivery_from_json(r));
  for (const auto& r : rows("surveys")) d.surveys.push_back(survey::survey_from_json(r));
  return d;
}

Dataset load_dataset(const fs::path& path) {
  if (fs::is_directory(path)) {
    Json tables = Json::object();
    for (const char* t : {"participants", "ads", "deliveries", "surveys"}) {
      tables[t] = read_jsonl(path / (std::string(t) + ".jsonl"));
    }
    return dataset_from_json(tables);
  }
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot read " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
  if (j.contains("tables")) j = j.at("tables");
  return dataset_from_json(j);
}

// --- names ---------------------------------------------------------------------

Metric parse_metric(std::string_view s) {
  if (s == "interest") return Metric::kInterest;
  if (s == "representativity") return Metric::kRepresentativity;
  if (s == "recognition") return Metric::kRecognition;
  if (s == "views") return Metric::kViews;
  if (s == "clicks") return Metric::kClicks;
  throw Error(ErrorCode::kInvalidArgument, "unknown metric " + std::string(s));
}

Model parse_model(std::string_view s) {
  if (s == "paired") return Model::kPaired;
  if (s == "welch") return Model::kWelch;
  if (s == "ols") return Model::kOls;
  if (s == "lmm") return Model::kLmm;
  throw Error(ErrorCode::kInvalidArgument, "unknown model " + std::string(s));
}

Level parse_level(std::string_view s) {
  if (s == "per_ad") return Level::kPerAd;
  if (s == "holistic") return Level::kHolistic;
  throw Error(ErrorCode::kInvalidArgument, "unknown level " + std::string(s));
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::kInterest: return "interest";
    case Metric::kRepresentativity: return "representativity";
    case Metric::kRecognition: return "recognition";
    case Metric::kViews: return "views";
    case Metric::kClicks: return "clicks";
  }
  return "?";
}

std::string_view to_string(Model m) {
  switch (m) {
    case Model::kPaired: return "paired";
    case Model::kWelch: return "welch";
    case Model::kOls: return "ols";
    case Model::kLmm: return "lmm";
  }
  return "?";
}

std::string_view to_string(Level l) { return l == Level::kPerAd ? "per_ad" : "holistic"; }

const std::vector<std::string>& participant_factors() {
  static const std::vector<std::string> f = {"age",       "gender", "race",  "race_white",
                                             "education", "income", "region"};
  return f;
}

const std::vector<std::string>& observation_factors() {
  static const std::vector<std::string> f = {"seen", "targeted_user", "has_people", "study_phase"};
  return f;
}

// --- observations ----------------------------------------------------------------

namespace {

const char* yes_no(bool b) { return b ? "yes" : "no"; }

std::map<std::string, std::string> participant_factor_values(const Participant& p) {
  const auto& d = p.demographics;
  return {{"age", d.age},
          {"gender", std::string(to_string(d.gender))},
          {"race", d.race_label()},
          {"race_white", yes_no(d.identifies_white_only())},
          {"education", d.education},
          {"income", d.income},
          {"region", d.region}};
}

std::string phase_name(survey::SurveyPhase p) {
  return p == survey::SurveyPhase::kMidpoint ? "observational" : "intervention";
}

}  // namespace

std::vector<Observation> observations(const Dataset& d, Metric metric, Level level) {
  std::map<std::string, std::map<std::string, std::string>> pf;
  for (const auto& p : d.participants) pf[p.id.str()] = participant_factor_values(p);
  std::vector<Observation> out;
  auto emit = [&](const std::string& pid, std::string phase, double value,
                  std::map<std::string, std::string> factors) {
    const auto it = pf.find(pid);
    if (it == pf.end()) return;  // participant row missing from the export
    factors.insert(it->second.begin(), it->second.end());
    factors["study_phase"] = phase;
    out.push_back({pid, std::move(phase), value, std::move(factors)});
  };

  if (metric == Metric::kViews || metric == Metric::kClicks) {
    const bool clicks = metric == Metric::kClicks;
    std::map<AdId, const AdRecord*> by_id;
    for (const auto& ad : d.ads) by_id[ad.id] = &ad;
    auto people = [](const AdRecord* ad) -> std::string {
      if (!ad || !ad->has_people) return "unknown";
      return yes_no(*ad->has_people);
    };
    for (const auto& ad : d.ads) {
      if (ad.redacted || ad.phase != AdPhase::kObservational) continue;
      if (clicks && ad.view_count == 0) continue;
      const bool hit = clicks ? ad.click_count > 0 : ad.view_count > 0;
      emit(ad.participant_id.str(), "observational", hit,
           {{"targeted_user", "self"}, {"has_people", people(&ad)}});
    }
    for (const auto& dl : d.deliveries) {
      if (clicks && dl.view_count == 0) continue;
      const bool hit = clicks ? dl.click_count > 0 : dl.view_count > 0;
      const auto src = by_id.find(dl.source_ad_id);
      emit(dl.recipient_id.str(), "intervention", hit,
           {{"targeted_user", "partner"},
            {"has_people", people(src == by_id.end() ? nullptr : src->second)}});
    }
    return out;
  }

  const StudyConfig defaults;
  for (const auto& s : d.surveys) {
    if (!s.answers) continue;
    const std::string phase = phase_name(s.phase);
    if (level == Level::kHolistic) {
      if (!s.answers->holistic) continue;
      const auto& h = *s.answers->holistic;
      double v = 0;
      switch (metric) {
        case Metric::kInterest: v = h.interest; break;
        case Metric::kRepresentativity: v = h.representativity; break;
        default: v = defaults.recognition_bucket_percent.at(h.recognition_bucket - 1) / 100.0;
      }
      emit(s.participant_id.str(), phase, v,
           {{"targeted_user", s.phase == survey::SurveyPhase::kMidpoint ? "self" : "partner"},
            {"seen", "yes"}});
      continue;
    }
    for (const auto& a : s.answers->per_ad) {
      const auto q = std::find_if(s.per_ad.begin(), s.per_ad.end(),
                                  [&](const auto& q) { return q.ad_id == a.ad_id; });
      if (q == s.per_ad.end()) continue;
      const auto& c = q->category;
      double v = 0;
      if (metric == Metric::kInterest) {
        v = a.interest;
      } else if (metric == Metric::kRepresentativity) {
        v = a.representativity;
      } else {
        if (!c.seen) continue;
        v = a.recognition == survey::Recognition::kYes;
      }
      emit(s.participant_id.str(), phase, v,
           {{"seen", yes_no(c.seen)},
            {"targeted_user", c.self ? "self" : "partner"},
            {"has_people", yes_no(c.people)}});
    }
  }
  return out;
}

// --- models --------------------------------------------------------------------

namespace {

using PhaseMeans = std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>>;

/// participant -> phase -> (sum, count)
PhaseMeans participant_means(const std::vector<Observation>& obs) {
  PhaseMeans m;
  for (const auto& o : obs) {
    auto& cell = m[o.participant][o.phase];
    cell.first += o.value;
    ++cell.second;
  }
  return m;
}

double mean_of(const std::pair<double, std::size_t>& cell) {
  return cell.first / static_cast<double>(cell.second);
}

struct FactorSpec {
  std::vector<std::string> mains;
  std::vector<std::pair<std::string, std::string>> interactions;
};

FactorSpec parse_factors(const std::vector<std::string>& by, const std::vector<std::string>& allowed) {
  FactorSpec spec;
  auto add_main = [&](const std::string& f) {
    if (std::find(allowed.begin(), allowed.end(), f) == allowed.end()) {
      throw Error(ErrorCode::kInvalidArgument, "factor " + f + " is not available for this model");
    }
    if (std::find(spec.mains.begin(), spec.mains.end(), f) == spec.mains.end()) spec.mains.push_back(f);
  };
  for (const auto& entry : by) {
    const auto star = entry.find('*');
    if (star == std::string::npos) {
      add_main(entry);
      continue;
    }
    const auto a = entry.substr(0, star), b = entry.substr(star + 1);
    add_main(a);
    add_main(b);
    spec.interactions.emplace_back(a, b);
  }
  return spec;
}

/// Design over `rows` factor maps; single-level factors are skipped.
stats::DesignMatrix build_design(const std::vector<const std::map<std::string, std::string>*>& rows,
                                 const FactorSpec& spec, std::vector<std::string>& notes) {
  stats::DesignBuilder b(rows.size());
  std::set<std::string> used;
  for (const auto& f : spec.mains) {
    std::vector<std::string> values;
    values.reserve(rows.size());
    for (const auto* r : rows) values.push_back(r->at(f));
    if (std::set<std::string>(values.begin(), values.end()).size() < 2) {
      notes.push_back("factor " + f + " has one level; dropped");
      continue;
    }
    b.categorical(f, std::move(values));
    used.insert(f);
  }
  for (const auto& [a, c] : spec.interactions) {
    if (used.contains(a) && used.contains(c)) b.interaction(a, c);
  }
  auto design = b.build();
  notes.insert(notes.end(), design.notes.begin(), design.notes.end());
  stats::require_full_rank(design);
  return design;
}

std::vector<std::string> default_by(Model model, Metric metric, Level level) {
  if (model == Model::kOls) return {"age", "education", "income", "region", "race*gender"};
  if (metric == Metric::kViews || metric == Metric::kClicks) return {"has_people", "study_phase"};
  if (level == Level::kHolistic) return {"study_phase"};
  if (metric == Metric::kRecognition) return {"targeted_user", "has_people", "study_phase"};
  return {"seen", "targeted_user", "has_people", "study_phase"};
}

}  // namespace

AnalysisReport analyze(const Dataset& d, const AnalysisRequest& request) {
  AnalysisReport r;
  r.request = request;
  const auto obs = observations(d, request.metric, request.level);
  r.observations = obs.size();
  const auto means = participant_means(obs);
  r.participants = means.size();
  const std::vector<std::string> by =
      request.by.empty() && request.model != Model::kWelch
          ? default_by(request.model, request.metric, request.level)
          : request.by;
  if (request.model == Model::kWelch && !request.by.empty()) r.request.by = by;

  switch (request.model) {
    case Model::kPaired: {
      std::vector<double> x, y, diffs;
      std::vector<std::pair<double, double>> pairs;
      for (const auto& [pid, phases] : means) {
        const auto o = phases.find("observational"), i = phases.find("intervention");
        if (o == phases.end() || i == phases.end()) continue;
        x.push_back(mean_of(o->second));
        y.push_back(mean_of(i->second));
        diffs.push_back(y.back() - x.back());
        pairs.emplace_back(x.back(), y.back());
      }
      if (x.size() < 2) {
        throw Error(ErrorCode::kPrecondition, "paired test needs >= 2 participants with both phases");
      }
      r.results.push_back(stats::paired_t_one_sided(x, y));
      r.values.emplace_back("mean_observational", stats::mean(x));
      r.values.emplace_back("mean_intervention", stats::mean(y));
      const auto pc = stats::mean_percent_change(pairs);
      r.values.emplace_back("percent_change_mean", pc.mean);
      r.values.emplace_back("percent_change_used", static_cast<double>(pc.used));
      r.values.emplace_back("percent_change_excluded", static_cast<double>(pc.excluded));
      if (request.bootstrap_resamples > 0) {
        const auto b = stats::bootstrap_stat(diffs, stats::Statistic::kMean, request.bootstrap_resamples,
                                             request.seed);
        r.values.emplace_back("diff_mean", b.point);
        r.values.emplace_back("diff_mean_ci_low", b.ci_low);
        r.values.emplace_back("diff_mean_ci_high", b.ci_high);
      }
      r.notes.push_back("x = observational participant means, y = intervention participant means");
      break;
    }
    case Model::kWelch: {
      if (by.size() != 1) throw Error(ErrorCode::kInvalidArgument, "welch needs exactly one --by factor");
      const auto& f = by.front();
      const auto& allowed = participant_factors();
      if (std::find(allowed.begin(), allowed.end(), f) == allowed.end()) {
        throw Error(ErrorCode::kInvalidArgument, "welch factor must be a participant factor");
      }
      std::map<std::string, std::string> level_of;
      for (const auto& o : obs) level_of[o.participant] = o.factors.at(f);
      std::map<std::string, std::vector<double>> groups;
      for (const auto& [pid, phases] : means) {
        const auto o = phases.find("observational");
        if (o != phases.end()) groups[level_of.at(pid)].push_back(mean_of(o->second));
      }
      if (groups.size() != 2) {
        throw Error(ErrorCode::kPrecondition,
                    "welch factor " + f + " has " + std::to_string(groups.size()) + " levels, need 2");
      }
      const auto& [la, a] = *groups.begin();
      const auto& [lb, bvals] = *std::next(groups.begin());
      auto res = stats::welch_t_two_sided(a, bvals);
      res.term = f + "[" + la + "] - " + f + "[" + lb + "]";
      r.results.push_back(res);
      r.values.emplace_back("mean_" + la, stats::mean(a));
      r.values.emplace_back("mean_" + lb, stats::mean(bvals));
      r.values.emplace_back("n_" + la, static_cast<double>(a.size()));
      r.values.emplace_back("n_" + lb, static_cast<double>(bvals.size()));
      break;
    }
    case Model::kOls: {
      const auto spec = parse_factors(by, participant_factors());
      std::map<std::string, const std::map<std::string, std::string>*> factors_of;
      for (const auto& o : obs) factors_of.emplace(o.participant, &o.factors);
      std::vector<const std::map<std::string, std::string>*> rows;
      std::vector<double> y;
      for (const auto& [pid, phases] : means) {
        const auto o = phases.find("observational");
        if (o == phases.end()) continue;
        rows.push_back(factors_of.at(pid));
        y.push_back(mean_of(o->second));
      }
      const auto design = build_design(rows, spec, r.notes);
      const auto fit = stats::fit_ols_anova(design, Eigen::Map<const Eigen::VectorXd>(y.data(), y.size()));
      r.results = fit.terms;
      for (std::size_t k = 0; k < fit.labels.size(); ++k) {
        r.values.emplace_back("coef " + fit.labels[k], fit.coefficients[static_cast<Eigen::Index>(k)]);
      }
      r.values.emplace_back("rss", fit.rss);
      r.values.emplace_back("df_residual", fit.df_residual);
      r.notes.push_back("response = observational participant means");
      break;
    }
    case Model::kLmm: {
      std::vector<std::string> allowed = participant_factors();
      allowed.insert(allowed.end(), observation_factors().begin(), observation_factors().end());
      const auto spec = parse_factors(by, allowed);
      std::vector<const std::map<std::string, std::string>*> rows;
      std::vector<double> y;
      std::vector<std::string> groups;
      for (const auto& o : obs) {
        for (const auto& f : spec.mains) {
          if (!o.factors.contains(f)) {
            throw Error(ErrorCode::kInvalidArgument, "factor " + f + " is not defined for this metric");
          }
        }
        rows.push_back(&o.factors);
        y.push_back(o.value);
        groups.push_back(o.participant);
      }
      const auto design = build_design(rows, spec, r.notes);
      const auto fit = stats::fit_lmm_random_intercept(
          design, Eigen::Map<const Eigen::VectorXd>(y.data(), y.size()), groups);
      r.results = fit.terms;
      for (std::size_t k = 0; k < fit.labels.size(); ++k) {
        r.values.emplace_back("fixed " + fit.labels[k], fit.fixed_effects[static_cast<Eigen::Index>(k)]);
      }
      r.values.emplace_back("sigma2_b", fit.sigma2_b);
      r.values.emplace_back("sigma2_e", fit.sigma2_e);
      r.values.emplace_back("theta", fit.theta);
      r.values.emplace_back("neg2_reml", fit.neg2_reml);
      r.values.emplace_back("groups", static_cast<double>(fit.groups));
      if (fit.boundary_fit) r.notes.push_back("boundary fit");
      break;
    }
  }
  if (request.model != Model::kWelch) r.request.by = by;
  return r;
}

// --- report text -------------------------------------------------------------------

namespace {

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::string format_report(const AnalysisReport& r) {
  std::ostringstream o;
  const auto& q = r.request;
  o << "metric " << to_string(q.metric) << '\n'
    << "model " << to_string(q.model) << '\n'
    << "level " << to_string(q.level) << '\n';
  o << "by";
  for (const auto& f : q.by) o << ' ' << f;
  o << '\n' << "seed " << q.seed << '\n'
    << "participants " << r.participants << '\n'
    << "observations " << r.observations << '\n';
  for (const auto& [k, v] : r.values) o << "value " << k << ' ' << num(v) << '\n';
  for (const auto& s : r.results) {
    o << "result\n"
      << "  procedure " << s.procedure << '\n'
      << "  term " << (s.term.empty() ? "-" : s.term) << '\n'
      << "  estimate " << num(s.estimate) << '\n'
      << "  statistic " << num(s.statistic) << '\n'
      << "  df " << num(s.df) << '\n'
      << "  df2 " << (s.df2 ? num(*s.df2) : "-") << '\n'
      << "  p_value " << num(s.p_value) << '\n'
      << "  effect_size " << (s.effect_size ? num(*s.effect_size) : "-") << '\n'
      << "  sides " << (s.sides == stats::Sides::kOne ? "one" : "two") << '\n'
      << "  n " << s.n << '\n'
      << "  flags";
    if (s.flags.empty()) o << " -";
    for (const auto& f : s.flags) o << ' ' << f;
    o << "\nend\n";
  }
  for (const auto& n : r.notes) o << "note " << n << '\n';
  return o.str();
}

}  // namespace adaudit::analysis
