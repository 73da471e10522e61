#include "adaudit/pipeline/jobs.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "adaudit/common/error.hpp"
#include "adaudit/pipeline/links.hpp"

namespace adaudit::pipeline {
namespace {

using Json = nlohmann::ordered_json;

/// Run fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

Json detections_json(const std::vector<Detection>& ds) {
  auto arr = Json::array();
  for (const auto& d : ds) {
    arr.push_back({{"category", d.category},
                   {"confidence", d.confidence},
                   {"box", {d.box.x, d.box.y, d.box.w, d.box.h}}});
  }
  return arr;
}

}  // namespace

MemoryAdRepository::MemoryAdRepository(std::vector<AdRecord> ads) {
  for (auto& ad : ads) {
    auto id = ad.id;
    ads_.emplace(std::move(id), std::move(ad));
  }
}

std::vector<AdRecord> MemoryAdRepository::ads_in_window(const TimeWindow& window) const {
  std::lock_guard lock(mu_);
  std::vector<AdRecord> out;
  for (const auto& [id, ad] : ads_) {
    if (window.contains(ad.captured_at)) out.push_back(ad);
  }
  return out;
}

bool MemoryAdRepository::update_ad(const AdId& id, const std::function<void(AdRecord&)>& mutate) {
  std::lock_guard lock(mu_);
  auto it = ads_.find(id);
  if (it == ads_.end() || it->second.redacted) return false;
  mutate(it->second);
  return true;
}

std::vector<AdRecord> MemoryAdRepository::all() const {
  std::lock_guard lock(mu_);
  std::vector<AdRecord> out;
  for (const auto& [id, ad] : ads_) out.push_back(ad);
  return out;
}

Json PipelineState::to_json() const {
  Json j;
  j["image_retries"] = image_retries.to_json();
  Json det = Json::object();
  for (const auto& [id, ds] : detections) det[id.str()] = detections_json(ds);
  j["detections"] = det;
  Json df = Json::object();
  for (const auto& [id, msg] : detect_failures) df[id.str()] = msg;
  j["detect_failures"] = df;
  Json lf = Json::object();
  for (const auto& [id, msg] : link_failures) lf[id.str()] = msg;
  j["link_failures"] = lf;
  return j;
}

PipelineState PipelineState::from_json(const Json& j) {
  PipelineState s;
  if (j.contains("image_retries")) s.image_retries = RetryQueue::from_json(j.at("image_retries"));
  if (j.contains("detections")) {
    for (const auto& [id, arr] : j.at("detections").items()) {
      auto& ds = s.detections[AdId(id)];
      for (const auto& d : arr) {
        const auto& b = d.at("box");
        ds.push_back({d.at("category").get<std::string>(), d.at("confidence").get<double>(),
                      {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                       b.at(3).get<double>()}});
      }
    }
  }
  if (j.contains("detect_failures")) {
    for (const auto& [id, msg] : j.at("detect_failures").items()) {
      s.detect_failures[AdId(id)] = msg.get<std::string>();
    }
  }
  if (j.contains("link_failures")) {
    for (const auto& [id, msg] : j.at("link_failures").items()) {
      s.link_failures[AdId(id)] = msg.get<std::string>();
    }
  }
  return s;
}

Json to_json(const JobRun& run) {
  return {{"job", run.job},
          {"window", format_iso8601(run.window.from) + "/" + format_iso8601(run.window.to)},
          {"processed", run.processed},
          {"failed", run.failed},
          {"skipped", run.skipped},
          {"started", format_iso8601(run.started)},
          {"finished", format_iso8601(run.finished)}};
}

void JobScheduler::add(const std::string& name, JobFn fn) {
  std::lock_guard lock(mu_);
  slots_[name].fn = std::move(fn);
}

JobRun JobScheduler::run(const std::string& name, const TimeWindow& window) {
  Slot* slot = nullptr;
  {
    std::lock_guard lock(mu_);
    auto it = slots_.find(name);
    if (it == slots_.end()) throw Error(ErrorCode::kNotFound, "unknown job: " + name);
    slot = &it->second;
  }
  std::unique_lock running(*slot->running, std::try_to_lock);
  if (!running.owns_lock()) {
    throw Error(ErrorCode::kConflict, "job already running: " + name);
  }
  JobRun run;
  run.job = name;
  run.window = window;
  run.started = clock_.now();
  const JobCounts c = slot->fn(window);
  run.processed = c.processed;
  run.failed = c.failed;
  run.skipped = c.skipped;
  run.finished = clock_.now();
  std::lock_guard lock(mu_);
  history_.push_back(run);
  return run;
}

std::vector<std::string> JobScheduler::jobs() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [name, slot] : slots_) out.push_back(name);
  return out;
}

std::vector<JobRun> JobScheduler::history() const {
  std::lock_guard lock(mu_);
  return history_;
}

Pipeline::Pipeline(AdRepository& ads, Fetcher& fetcher, BlobStore& blobs,
                   DetectorAdapter& detector, PipelineState& state, const Clock& clock,
                   PipelineOptions options, const SuffixRules& suffixes)
    : ads_(ads),
      fetcher_(fetcher),
      blobs_(blobs),
      detector_(detector),
      state_(state),
      options_(options),
      suffixes_(suffixes),
      scheduler_(clock) {
  scheduler_.add("resolve", [this](const TimeWindow& w) { return resolve(w); });
  scheduler_.add("persist", [this](const TimeWindow& w) { return persist(w); });
  scheduler_.add("detect", [this](const TimeWindow& w) { return detect(w); });
  scheduler_.add("domains", [this](const TimeWindow& w) { return domains(w); });
}

std::vector<DomainTable> Pipeline::last_domains() const {
  std::lock_guard lock(mu_);
  return domains_;
}

JobCounts Pipeline::resolve(const TimeWindow& w) {
  const auto ads = ads_.ads_in_window(w);
  std::vector<const AdRecord*> todo;
  JobCounts c;
  for (const auto& ad : ads) {
    if (ad.redacted || ad.resolved_target_url || ad.target_url.empty()) {
      ++c.skipped;
    } else {
      todo.push_back(&ad);
    }
  }
  std::atomic<std::size_t> ok{0}, failed{0};
  parallel_for(todo.size(), options_.workers, [&](std::size_t i) {
    const AdRecord& ad = *todo[i];
    try {
      const auto link = resolve_link(ad.target_url, fetcher_, options_.max_hops);
      ads_.update_ad(ad.id, [&](AdRecord& a) { a.resolved_target_url = link.final_url; });
      std::lock_guard lock(mu_);
      state_.link_failures.erase(ad.id);
      ++ok;
    } catch (const Error& e) {
      std::lock_guard lock(mu_);
      state_.link_failures[ad.id] = std::string(to_string(e.code()));
      ++failed;
    }
  });
  c.processed = ok;
  c.failed = failed;
  return c;
}

JobCounts Pipeline::persist(const TimeWindow& w) {
  const auto ads = ads_.ads_in_window(w);
  std::vector<AdRecord> todo;
  JobCounts c;
  {
    std::lock_guard lock(mu_);
    for (const auto& ad : ads) {
      if (ad.redacted || ad.stored_image_ref || !ad.image_url ||
          state_.image_retries.unretrievable(ad.id)) {
        ++c.skipped;
      } else {
        todo.push_back(ad);
      }
    }
  }
  std::atomic<std::size_t> ok{0}, failed{0};
  parallel_for(todo.size(), options_.workers, [&](std::size_t i) {
    const AdRecord& ad = todo[i];
    const FetchedImage got = fetch_image(*ad.image_url, fetcher_);
    std::string ref;
    if (got.bytes) ref = blobs_.put(*got.bytes);
    std::lock_guard lock(mu_);
    if (got.bytes) {
      ads_.update_ad(ad.id, [&](AdRecord& a) { a.stored_image_ref = ref; });
      state_.image_retries.clear(ad.id);
      ++ok;
    } else {
      state_.image_retries.record_failure(ad.id, got.error, options_.max_image_attempts);
      ++failed;
    }
  });
  c.processed = ok;
  c.failed = failed;
  return c;
}

JobCounts Pipeline::detect(const TimeWindow& w) {
  const auto ads = ads_.ads_in_window(w);
  std::vector<const AdRecord*> todo;
  JobCounts c;
  for (const auto& ad : ads) {
    if (ad.redacted || ad.has_people || !ad.stored_image_ref) {
      ++c.skipped;
    } else {
      todo.push_back(&ad);
    }
  }
  std::atomic<std::size_t> ok{0}, failed{0};
  parallel_for(todo.size(), options_.workers, [&](std::size_t i) {
    const AdRecord& ad = *todo[i];
    try {
      auto found = detector_.detect(blobs_.path_of(*ad.stored_image_ref));
      const bool people = has_people(found, options_.person_threshold);
      ads_.update_ad(ad.id, [&](AdRecord& a) { a.has_people = people; });
      std::lock_guard lock(mu_);
      state_.detections[ad.id] = std::move(found);
      state_.detect_failures.erase(ad.id);
      ++ok;
    } catch (const Error& e) {
      std::lock_guard lock(mu_);
      state_.detect_failures[ad.id] = e.what();
      ++failed;
    }
  });
  c.processed = ok;
  c.failed = failed;
  return c;
}

JobCounts Pipeline::domains(const TimeWindow& w) {
  const auto ads = ads_.ads_in_window(w);
  std::vector<DomainTable> tables;
  for (auto kind : {DomainKind::kSource, DomainKind::kTarget, DomainKind::kResolvedTarget}) {
    tables.push_back(aggregate_domains(ads, kind, suffixes_));
  }
  JobCounts c;
  c.processed = ads.size();
  std::lock_guard lock(mu_);
  domains_ = std::move(tables);
  return c;
}

Json to_json(const DomainTable& table) {
  Json rows = Json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"domain", r.domain}, {"count", r.count}, {"share", r.share}});
  }
  Json presence = Json::array();
  for (const auto& r : table.presence) {
    presence.push_back(
        {{"domain", r.domain}, {"participants", r.participants}, {"share", r.share}});
  }
  return {{"kind", to_string(table.kind)},
          {"rows", rows},
          {"presence", presence},
          {"errors", table.errors}};
}

}  // namespace adaudit::pipeline
