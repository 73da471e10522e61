#include "adaudit/pipeline/blob_store.hpp"

#include <unistd.h>

#include <atomic>
#include <fstream>
#include <sstream>

#include "adaudit/common/digest.hpp"
#include "adaudit/common/error.hpp"
#include "adaudit/common/url.hpp"

namespace fs = std::filesystem;

namespace adaudit::pipeline {
namespace {

constexpr std::string_view kPrefix = "sha256:";

std::string hex_of(const std::string& ref) {
  if (ref.size() != kPrefix.size() + 64 || ref.compare(0, kPrefix.size(), kPrefix) != 0) {
    throw Error(ErrorCode::kInvalidArgument, "malformed blob ref: " + ref);
  }
  std::string hex = ref.substr(kPrefix.size());
  for (char c : hex) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) {
      throw Error(ErrorCode::kInvalidArgument, "malformed blob ref: " + ref);
    }
  }
  return hex;
}

}  // namespace

BlobStore::BlobStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
}

std::string BlobStore::ref_for(std::string_view bytes) {
  return std::string(kPrefix) + sha256_hex(bytes);
}

fs::path BlobStore::path_of(const std::string& ref) const {
  const std::string hex = hex_of(ref);
  return root_ / hex.substr(0, 2) / hex;
}

std::string BlobStore::put(std::string_view bytes) {
  const std::string ref = ref_for(bytes);
  const fs::path dest = path_of(ref);
  if (fs::exists(dest)) return ref;
  fs::create_directories(dest.parent_path());
  // Write-then-rename so a reader never sees a partial blob.
  fs::path tmp = dest;
  static std::atomic<std::uint64_t> counter{0};
  tmp += ".tmp" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kRetryable, "cannot write " + tmp.string());
  }
  fs::rename(tmp, dest);
  return ref;
}

bool BlobStore::contains(const std::string& ref) const { return fs::exists(path_of(ref)); }

std::optional<std::string> BlobStore::get(const std::string& ref) const {
  std::ifstream in(path_of(ref), std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t BlobStore::count() const {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(root_)) {
    if (e.is_regular_file() && e.path().extension().empty()) ++n;
  }
  return n;
}

void RetryQueue::record_failure(const AdId& ad, const std::string& error, int max_attempts) {
  RetryEntry& e = entries_[ad];
  ++e.attempts;
  e.last_error = error;
  if (e.attempts >= max_attempts) e.unretrievable = true;
}

const RetryEntry* RetryQueue::find(const AdId& ad) const {
  auto it = entries_.find(ad);
  return it == entries_.end() ? nullptr : &it->second;
}

bool RetryQueue::unretrievable(const AdId& ad) const {
  const RetryEntry* e = find(ad);
  return e && e->unretrievable;
}

nlohmann::ordered_json RetryQueue::to_json() const {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& [id, e] : entries_) {
    arr.push_back({{"ad_id", id.str()},
                   {"attempts", e.attempts},
                   {"last_error", e.last_error},
                   {"unretrievable", e.unretrievable}});
  }
  return arr;
}

RetryQueue RetryQueue::from_json(const nlohmann::ordered_json& j) {
  RetryQueue q;
  for (const auto& row : j) {
    RetryEntry e;
    e.attempts = row.at("attempts").get<int>();
    e.last_error = row.at("last_error").get<std::string>();
    e.unretrievable = row.at("unretrievable").get<bool>();
    q.entries_[AdId(row.at("ad_id").get<std::string>())] = e;
  }
  return q;
}

FetchedImage fetch_image(const std::string& url_text, Fetcher& fetcher) {
  FetchedImage out;
  try {
    Url url = Url::parse(url_text);
    for (int hop = 0;; ++hop) {
      HttpResponse res = fetcher.get(url.str());
      if (res.status >= 300 && res.status < 400 && !res.location.empty() && hop < 5) {
        url = url.resolve(res.location);
        continue;
      }
      if (res.status == 200) {
        out.bytes = std::move(res.body);
      } else {
        out.error = "HTTP " + std::to_string(res.status);
      }
      return out;
    }
  } catch (const Error& e) {
    out.error = e.what();
  }
  return out;
}

PersistOutcome persist_image(AdRecord& ad, Fetcher& fetcher, BlobStore& store,
                             RetryQueue& retries, int max_attempts) {
  if (ad.stored_image_ref) return PersistOutcome::kAlreadyStored;
  if (!ad.image_url || ad.image_url->empty() || retries.unretrievable(ad.id)) {
    return PersistOutcome::kSkipped;
  }
  const FetchedImage got = fetch_image(*ad.image_url, fetcher);
  if (got.bytes) {
    ad.stored_image_ref = store.put(*got.bytes);
    retries.clear(ad.id);
    return PersistOutcome::kStored;
  }
  retries.record_failure(ad.id, got.error, max_attempts);
  return PersistOutcome::kFailed;
}

}  // namespace adaudit::pipeline
