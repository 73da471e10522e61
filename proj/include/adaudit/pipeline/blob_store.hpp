#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "adaudit/core/ids.hpp"
#include "adaudit/core/types.hpp"
#include "adaudit/pipeline/fetch.hpp"

namespace adaudit::pipeline {

/// Content-addressed files: `sha256:<hex>` stored at `<root>/<hex[0:2]>/<hex>`.
class BlobStore {
 public:
  explicit BlobStore(std::filesystem::path root);

  /// Store bytes (no-op if present) and return their ref.
  std::string put(std::string_view bytes);
  bool contains(const std::string& ref) const;
  std::optional<std::string> get(const std::string& ref) const;
  std::filesystem::path path_of(const std::string& ref) const;
  std::size_t count() const;

  static std::string ref_for(std::string_view bytes);

 private:
  std::filesystem::path root_;
};

struct RetryEntry {
  int attempts = 0;
  std::string last_error;
  bool unretrievable = false;
};

/// Failed image fetches awaiting another attempt.
class RetryQueue {
 public:
  void record_failure(const AdId& ad, const std::string& error, int max_attempts);
  void clear(const AdId& ad) { entries_.erase(ad); }
  const RetryEntry* find(const AdId& ad) const;
  bool unretrievable(const AdId& ad) const;
  const std::map<AdId, RetryEntry>& entries() const { return entries_; }

  nlohmann::ordered_json to_json() const;
  static RetryQueue from_json(const nlohmann::ordered_json& j);

 private:
  std::map<AdId, RetryEntry> entries_;
};

struct FetchedImage {
  std::optional<std::string> bytes;
  std::string error;  // set when bytes is empty
};

/// GET an image, following up to 5 redirects. Never throws.
FetchedImage fetch_image(const std::string& url, Fetcher& fetcher);

enum class PersistOutcome { kStored, kAlreadyStored, kSkipped, kFailed };

/// Fetch `ad.image_url` (following up to 5 redirects) and store it. On
/// success sets `ad.stored_image_ref` and clears any retry entry; on
/// failure leaves `ad` unmodified and records the attempt, marking the ad
/// unretrievable after `max_attempts`. Ads without an image URL, or already
/// unretrievable, are skipped.
PersistOutcome persist_image(AdRecord& ad, Fetcher& fetcher, BlobStore& store,
                             RetryQueue& retries, int max_attempts = 3);

}  // namespace adaudit::pipeline
