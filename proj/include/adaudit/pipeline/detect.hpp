#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace adaudit::pipeline {

struct Box {
  double x = 0, y = 0, w = 0, h = 0;  // normalized to [0, 1]
};

struct Detection {
  std::string category;  // one of coco_categories(), spaces as underscores
  double confidence = 0;
  Box box;
};

/// The 80 object categories, in their conventional order.
const std::array<std::string_view, 80>& coco_categories();
bool is_known_category(std::string_view name);

inline constexpr double kDefaultPersonThreshold = 0.5;

bool has_people(const std::vector<Detection>& detections, double tau = kDefaultPersonThreshold);

/// Record grammar (docs/detector-records.md): zero or more
///   `det <category> <confidence> <x> <y> <w> <h>`
/// lines followed by a single `end` line. Throws Error(kAdapterFailure)
/// on any deviation.
std::vector<Detection> parse_detection_records(std::string_view text);
std::string format_detection_records(const std::vector<Detection>& detections);

class DetectorAdapter {
 public:
  virtual ~DetectorAdapter() = default;
  /// Throws Error(kAdapterFailure) on crash, timeout or malformed output.
  virtual std::vector<Detection> detect(const std::filesystem::path& image) = 0;
};

/// Runs `argv... <image path>` and parses its standard output.
class ProcessAdapter final : public DetectorAdapter {
 public:
  ProcessAdapter(std::vector<std::string> argv, std::chrono::milliseconds timeout);
  std::vector<Detection> detect(const std::filesystem::path& image) override;

 private:
  std::vector<std::string> argv_;
  std::chrono::milliseconds timeout_;
};

/// Fixed answer for every image.
class StubAdapter final : public DetectorAdapter {
 public:
  explicit StubAdapter(std::vector<Detection> answer) : answer_(std::move(answer)) {}
  std::vector<Detection> detect(const std::filesystem::path&) override { return answer_; }

 private:
  std::vector<Detection> answer_;
};

/// Ground-truth labels keyed by image file name (the blob digest). The
/// labels file holds `<file name> <record line>` rows; images with no row
/// have no detections.
class OracleAdapter final : public DetectorAdapter {
 public:
  static OracleAdapter from_file(const std::filesystem::path& labels);
  explicit OracleAdapter(std::map<std::string, std::vector<Detection>> labels)
      : labels_(std::move(labels)) {}
  std::vector<Detection> detect(const std::filesystem::path& image) override;

 private:
  std::map<std::string, std::vector<Detection>> labels_;
};

}  // namespace adaudit::pipeline
