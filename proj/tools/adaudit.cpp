// Command-line front end: analyze, pipeline, simulate, serve.

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "adaudit/analysis/analysis.hpp"
#include "adaudit/common/error.hpp"
#include "adaudit/common/public_suffix.hpp"
#include "adaudit/core/config.hpp"
#include "adaudit/filter/rules.hpp"
#include "adaudit/pipeline/blob_store.hpp"
#include "adaudit/pipeline/detect.hpp"
#include "adaudit/pipeline/fetch.hpp"
#include "adaudit/pipeline/jobs.hpp"
#include "adaudit/server/api.hpp"
#include "adaudit/server/http.hpp"
#include "adaudit/server/study.hpp"
#include "adaudit/sim/simulation.hpp"

namespace fs = std::filesystem;
using namespace adaudit;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file_atomic(const fs::path& p, const std::string& text) {
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) throw Error(ErrorCode::kRetryable, "cannot write " + tmp.string());
  }
  fs::rename(tmp, p);
}

std::vector<std::string> split_args(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

StudyConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  auto c = parse_study_config(read_file(path));
  c.validate();
  return c;
}

std::string_view notification_name(NotificationKind k) {
  switch (k) {
    case NotificationKind::kOnboardingGranted: return "onboarding_granted";
    case NotificationKind::kZeroAdsReminder: return "zero_ads_reminder";
    case NotificationKind::kSurveyReleased: return "survey_released";
    case NotificationKind::kOffboarded: return "offboarded";
  }
  return "?";
}

/// Appends notifications to a JSONL outbox for an external mailer.
class OutboxNotifier final : public Notifier {
 public:
  explicit OutboxNotifier(fs::path file) : file_(std::move(file)) {}
  void send(const Notification& n) override {
    const Json row = {{"participant_id", n.participant_id.str()},
                      {"kind", notification_name(n.kind)},
                      {"at", format_iso8601(n.at)},
                      {"detail", n.detail}};
    std::lock_guard lock(mu_);
    std::ofstream(file_, std::ios::app) << row.dump() << '\n';
  }

 private:
  fs::path file_;
  std::mutex mu_;
};

// --- analyze -------------------------------------------------------------------

struct AnalyzeArgs {
  std::string metric = "interest", model = "paired", level = "per_ad", in, out;
  std::vector<std::string> by;
  std::uint64_t seed = 0;
  int bootstrap = 500;
};

int run_analyze(const AnalyzeArgs& a) {
  analysis::AnalysisRequest req;
  req.metric = analysis::parse_metric(a.metric);
  req.model = analysis::parse_model(a.model);
  req.level = analysis::parse_level(a.level);
  req.by = a.by;
  req.seed = a.seed;
  req.bootstrap_resamples = a.bootstrap;
  const auto text = analysis::format_report(analysis::analyze(analysis::load_dataset(a.in), req));
  if (a.out.empty() || a.out == "-") {
    std::cout << text;
  } else {
    write_file_atomic(a.out, text);
  }
  return 0;
}

// --- pipeline ------------------------------------------------------------------

struct PipelineArgs {
  std::string job, window, data = "data", detector, oracle, suffix_rules;
  int workers = 4, max_hops = 10, max_attempts = 3, timeout_ms = 30000;
  double threshold = pipeline::kDefaultPersonThreshold;
};

int run_pipeline(const PipelineArgs& a) {
  const fs::path data = a.data;
  const auto snapshot_path = data / "study.json";
  const auto state_path = data / "pipeline-state.json";
  SystemClock clock;
  NullNotifier quiet;
  server::Study study(StudyConfig{}, clock, quiet);
  study.restore(Json::parse(read_file(snapshot_path)));
  pipeline::PipelineState state;
  if (fs::exists(state_path)) state = pipeline::PipelineState::from_json(Json::parse(read_file(state_path)));

  std::unique_ptr<pipeline::DetectorAdapter> detector;
  if (!a.oracle.empty()) {
    detector = std::make_unique<pipeline::OracleAdapter>(pipeline::OracleAdapter::from_file(a.oracle));
  } else if (!a.detector.empty()) {
    detector = std::make_unique<pipeline::ProcessAdapter>(split_args(a.detector),
                                                          std::chrono::milliseconds(a.timeout_ms));
  } else if (a.job == "detect") {
    throw Error(ErrorCode::kInvalidArgument, "detect needs --detector or --oracle");
  } else {
    detector = std::make_unique<pipeline::StubAdapter>(std::vector<pipeline::Detection>{});
  }
  std::optional<SuffixRules> custom;
  if (!a.suffix_rules.empty()) custom = SuffixRules::parse(read_file(a.suffix_rules));

  pipeline::HttpFetcher fetcher(std::chrono::milliseconds(a.timeout_ms));
  pipeline::BlobStore blobs(data / "blobs");
  pipeline::PipelineOptions opts;
  opts.max_hops = a.max_hops;
  opts.max_image_attempts = a.max_attempts;
  opts.person_threshold = a.threshold;
  opts.workers = a.workers;
  pipeline::Pipeline pipe(study.ad_repository(), fetcher, blobs, *detector, state, clock, opts,
                          custom ? *custom : SuffixRules::embedded());
  const auto run = pipe.run(a.job, parse_iso_window(a.window));
  Json out = {{"run", pipeline::to_json(run)}};
  if (a.job == "domains") {
    Json tables = Json::array();
    for (const auto& t : pipe.last_domains()) tables.push_back(pipeline::to_json(t));
    out["domains"] = tables;
  }
  write_file_atomic(snapshot_path, study.snapshot().dump());
  write_file_atomic(state_path, state.to_json().dump());
  std::cout << out.dump(2) << '\n';
  return 0;
}

// --- simulate --------------------------------------------------------------------

struct SimulateArgs {
  std::string profiles, out = "report", config, transport = "in_process";
  int generate = 0;
  std::uint64_t seed = 1;
  double compress = 20000;
  bool concurrent = false;
};

int run_simulate(const SimulateArgs& a) {
  std::vector<sim::SimProfile> profiles;
  if (!a.profiles.empty()) {
    profiles = sim::profiles_from_json(Json::parse(read_file(a.profiles)));
  } else if (a.generate > 0) {
    profiles = sim::generate_profiles(a.generate, a.seed);
  } else {
    throw Error(ErrorCode::kInvalidArgument, "give --profiles <file> or --generate N");
  }
  sim::SimOptions opts;
  opts.seed = a.seed;
  opts.clock_compression = a.compress;
  opts.concurrent = a.concurrent;
  if (a.transport == "http") {
    opts.transport = sim::TransportMode::kHttp;
  } else if (a.transport != "in_process") {
    throw Error(ErrorCode::kInvalidArgument, "transport must be in_process or http");
  }
  StudyConfig config = load_config(a.config);
  if (a.config.empty()) config.rng_seed = a.seed;
  fs::create_directories(a.out);
  opts.snapshot_out = fs::path(a.out) / "study.json";
  const auto report = sim::run_simulation(config, profiles, opts);
  sim::write_report(report, a.out);
  const auto& c = report.conservation;
  const auto& e = report.exclusivity;
  std::cout << "participants " << report.profiles << ", pairs " << report.pairs << ", dropped "
            << report.dropped.size() << '\n'
            << "ads ingested " << c.ingested << ", stored " << c.stored << ", duplicates "
            << c.duplicates << ", exported " << c.exported << ", redacted " << c.redacted
            << (c.holds() ? " (conserved)" : " (NOT conserved)") << '\n'
            << "swap deliveries " << e.deliveries << ", outside partner pool "
            << e.outside_partner_pool << ", self ads " << e.self_ads << '\n'
            << "report written to " << a.out << '\n';
  return c.holds() && e.outside_partner_pool == 0 && e.self_ads == 0 ? 0 : 1;
}

// --- serve -----------------------------------------------------------------------

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) {
  g_stop = true;
}

struct ServeArgs {
  std::string data = "data", config, host = "127.0.0.1", ruleset, auditor_token;
  int port = 8080, tick_seconds = 300, snapshot_seconds = 60;
};

int run_serve(const ServeArgs& a) {
  const fs::path data = a.data;
  fs::create_directories(data);
  std::string token = a.auditor_token;
  if (token.empty()) {
    if (const char* env = std::getenv("ADAUDIT_AUDITOR_TOKEN")) token = env;
  }
  if (token.empty()) throw Error(ErrorCode::kInvalidArgument, "set --auditor-token or ADAUDIT_AUDITOR_TOKEN");

  SystemClock clock;
  OutboxNotifier outbox(data / "outbox.jsonl");
  server::Study study(load_config(a.config), clock, outbox);
  study.add_auditor_token(token);
  const auto snapshot_path = data / "study.json";
  if (fs::exists(snapshot_path)) study.restore(Json::parse(read_file(snapshot_path)));

  pipeline::BlobStore blobs(data / "blobs");
  server::ApiOptions opts;
  opts.blobs = &blobs;
  opts.snapshot_path = snapshot_path;
  if (!a.ruleset.empty()) {
    const auto parsed = filter::parse_filter_list(read_file(a.ruleset));
    for (const auto& e : parsed.warnings) std::cerr << "ruleset: " << e.line << ": " << e.message << '\n';
    opts.ruleset_document = filter::compile_ruleset(parsed.rules);
  }
  server::ApiRouter router(study, opts);
  server::HttpServer http(router);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const int port = http.start(a.host, a.port);
  std::cerr << "serving on " << a.host << ":" << port << '\n';

  auto last_tick = std::chrono::steady_clock::now();
  auto last_snapshot = last_tick;
  auto save = [&] { write_file_atomic(snapshot_path, study.snapshot().dump()); };
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    const auto now = std::chrono::steady_clock::now();
    if (a.tick_seconds > 0 && now - last_tick >= std::chrono::seconds(a.tick_seconds)) {
      last_tick = now;
      try {
        study.tick();
      } catch (const std::exception& e) {
        std::cerr << "tick: " << e.what() << '\n';
      }
    }
    if (a.snapshot_seconds > 0 && now - last_snapshot >= std::chrono::seconds(a.snapshot_seconds)) {
      last_snapshot = now;
      save();
    }
  }
  http.stop();
  save();
  std::cerr << "stopped; snapshot saved to " << snapshot_path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-phase ad audit platform"};
  app.require_subcommand(1);

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "Run a statistical model over a study export");
  analyze->add_option("--metric", an.metric, "interest|representativity|recognition|views|clicks")
      ->check(CLI::IsMember({"interest", "representativity", "recognition", "views", "clicks"}));
  analyze->add_option("--model", an.model, "paired|welch|ols|lmm")
      ->check(CLI::IsMember({"paired", "welch", "ols", "lmm"}));
  analyze->add_option("--level", an.level, "per_ad|holistic (survey metrics)")
      ->check(CLI::IsMember({"per_ad", "holistic"}));
  analyze->add_option("--by", an.by, "Factors; comma separated, a*b for an interaction")->delimiter(',');
  analyze->add_option("--seed", an.seed, "Bootstrap seed");
  analyze->add_option("--bootstrap", an.bootstrap, "Bootstrap resamples for paired (0 disables)");
  analyze->add_option("--in", an.in, "Export directory (*.jsonl) or JSON file")->required();
  analyze->add_option("--out", an.out, "Report file (default stdout)");

  PipelineArgs pa;
  auto* pipeline_cmd = app.add_subcommand("pipeline", "Nightly data pipeline jobs");
  pipeline_cmd->require_subcommand(1);
  auto* run = pipeline_cmd->add_subcommand("run", "Run one job over a capture window");
  run->add_option("--job", pa.job)->required()->check(CLI::IsMember({"resolve", "persist", "detect", "domains"}));
  run->add_option("--window", pa.window, "ISO range start/end")->required();
  run->add_option("--data", pa.data, "Data directory with study.json and blobs/");
  run->add_option("--detector", pa.detector, "Detector command; the image path is appended");
  run->add_option("--oracle", pa.oracle, "Labels file for the oracle detector");
  run->add_option("--suffix-rules", pa.suffix_rules, "Public suffix rules file");
  run->add_option("--workers", pa.workers)->check(CLI::Range(1, 256));
  run->add_option("--max-hops", pa.max_hops)->check(CLI::Range(1, 100));
  run->add_option("--max-attempts", pa.max_attempts)->check(CLI::Range(1, 100));
  run->add_option("--threshold", pa.threshold)->check(CLI::Range(0.0, 1.0));
  run->add_option("--timeout-ms", pa.timeout_ms)->check(CLI::PositiveNumber);

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Run a simulated study end to end");
  simulate->add_option("--profiles", sa.profiles, "JSON array of simulated participant profiles");
  simulate->add_option("--generate", sa.generate, "Generate N default profiles instead");
  simulate->add_option("--seed", sa.seed);
  simulate->add_option("--compress", sa.compress, "Virtual seconds per wall second; 0 = unpaced")
      ->check(CLI::NonNegativeNumber);
  simulate->add_option("--out", sa.out, "Report directory");
  simulate->add_option("--config", sa.config, "Study config file");
  simulate->add_option("--transport", sa.transport, "in_process|http");
  simulate->add_flag("--concurrent", sa.concurrent, "Run participant sessions on threads");

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "Run the coordination server");
  serve->add_option("--data", sv.data, "Data directory (snapshot, blobs, outbox)");
  serve->add_option("--config", sv.config, "Study config file");
  serve->add_option("--host", sv.host);
  serve->add_option("--port", sv.port)->check(CLI::Range(0, 65535));
  serve->add_option("--ruleset", sv.ruleset, "Filter list served to clients");
  serve->add_option("--auditor-token", sv.auditor_token);
  serve->add_option("--tick-seconds", sv.tick_seconds, "Lifecycle tick period (0 disables)");
  serve->add_option("--snapshot-seconds", sv.snapshot_seconds, "Snapshot period (0 disables)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*analyze) return run_analyze(an);
    if (*run) return run_pipeline(pa);
    if (*simulate) return run_simulate(sa);
    if (*serve) return run_serve(sv);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.field() << ": " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
