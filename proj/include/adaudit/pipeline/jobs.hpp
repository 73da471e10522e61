#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "adaudit/common/public_suffix.hpp"
#include "adaudit/common/time.hpp"
#include "adaudit/core/types.hpp"
#include "adaudit/pipeline/blob_store.hpp"
#include "adaudit/pipeline/detect.hpp"
#include "adaudit/pipeline/domains.hpp"
#include "adaudit/pipeline/fetch.hpp"

namespace adaudit::pipeline {

/// Where jobs read and write ads. Implementations must make `update_ad`
/// atomic with respect to other writers.
class AdRepository {
 public:
  virtual ~AdRepository() = default;
  /// Copies of the ads captured within `window`, in id order.
  virtual std::vector<AdRecord> ads_in_window(const TimeWindow& window) const = 0;
  /// Apply `mutate` to the stored ad. Returns false when the ad is gone or
  /// redacted, in which case nothing is written.
  virtual bool update_ad(const AdId& id, const std::function<void(AdRecord&)>& mutate) = 0;
};

class MemoryAdRepository final : public AdRepository {
 public:
  explicit MemoryAdRepository(std::vector<AdRecord> ads);
  std::vector<AdRecord> ads_in_window(const TimeWindow& window) const override;
  bool update_ad(const AdId& id, const std::function<void(AdRecord&)>& mutate) override;
  std::vector<AdRecord> all() const;

 private:
  mutable std::mutex mu_;
  std::map<AdId, AdRecord> ads_;
};

/// Pipeline bookkeeping that is not part of an ad record.
struct PipelineState {
  RetryQueue image_retries;
  std::map<AdId, std::vector<Detection>> detections;
  std::map<AdId, std::string> detect_failures;
  std::map<AdId, std::string> link_failures;

  nlohmann::ordered_json to_json() const;
  static PipelineState from_json(const nlohmann::ordered_json& j);
};

struct JobRun {
  std::string job;
  TimeWindow window;
  std::size_t processed = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;  // already done, ineligible or unretrievable
  Instant started{};
  Instant finished{};
};

nlohmann::ordered_json to_json(const JobRun& run);

struct JobCounts {
  std::size_t processed = 0, failed = 0, skipped = 0;
};

/// Named jobs; a job never runs twice concurrently (the second caller gets
/// Error(kConflict)).
class JobScheduler {
 public:
  using JobFn = std::function<JobCounts(const TimeWindow&)>;

  explicit JobScheduler(const Clock& clock) : clock_(clock) {}

  void add(const std::string& name, JobFn fn);
  JobRun run(const std::string& name, const TimeWindow& window);
  std::vector<std::string> jobs() const;
  std::vector<JobRun> history() const;

 private:
  struct Slot {
    JobFn fn;
    std::unique_ptr<std::mutex> running = std::make_unique<std::mutex>();
  };
  const Clock& clock_;
  mutable std::mutex mu_;
  std::map<std::string, Slot> slots_;
  std::vector<JobRun> history_;
};

struct PipelineOptions {
  int max_hops = 10;
  int max_image_attempts = 3;
  double person_threshold = kDefaultPersonThreshold;
  int workers = 4;
};

/// The four post-processing jobs wired to a scheduler: `resolve`,
/// `persist`, `detect`, `domains`. Each job only touches ads that still
/// need its work, so rerunning a window is a no-op.
class Pipeline {
 public:
  Pipeline(AdRepository& ads, Fetcher& fetcher, BlobStore& blobs, DetectorAdapter& detector,
           PipelineState& state, const Clock& clock, PipelineOptions options = {},
           const SuffixRules& suffixes = SuffixRules::embedded());

  JobRun run(const std::string& job, const TimeWindow& window) {
    return scheduler_.run(job, window);
  }
  JobScheduler& scheduler() { return scheduler_; }
  /// Tables from the latest `domains` run (source, target, resolved_target).
  std::vector<DomainTable> last_domains() const;

 private:
  JobCounts resolve(const TimeWindow& w);
  JobCounts persist(const TimeWindow& w);
  JobCounts detect(const TimeWindow& w);
  JobCounts domains(const TimeWindow& w);

  AdRepository& ads_;
  Fetcher& fetcher_;
  BlobStore& blobs_;
  DetectorAdapter& detector_;
  PipelineState& state_;
  PipelineOptions options_;
  const SuffixRules& suffixes_;
  JobScheduler scheduler_;
  mutable std::mutex mu_;  // guards state_ and domains_
  std::vector<DomainTable> domains_;
};

nlohmann::ordered_json to_json(const DomainTable& table);

}  // namespace adaudit::pipeline
