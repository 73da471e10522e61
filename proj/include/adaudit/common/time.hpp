#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace adaudit {

using Instant = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

inline constexpr Seconds kDay{86400};
inline constexpr Seconds kHour{3600};

/// `YYYY-MM-DDTHH:MM:SSZ`.
std::string format_iso8601(Instant t);
/// Accepts `YYYY-MM-DDTHH:MM:SSZ` and `YYYY-MM-DD` (midnight UTC).
Instant parse_iso8601(std::string_view text);

struct TimeWindow {
  Instant from;
  Instant to;  // exclusive

  bool contains(Instant t) const { return from <= t && t < to; }
};

/// `<from>/<to>` with both ends ISO-8601.
TimeWindow parse_iso_window(std::string_view text);

/// Injected time source. The study server and every phase rule read time
/// only through this interface.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual Instant now() const = 0;
};

class SystemClock final : public Clock {
 public:
  Instant now() const override {
    return std::chrono::time_point_cast<Seconds>(std::chrono::system_clock::now());
  }
};

/// Manually advanced clock for tests and the simulation harness.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(Instant start) : now_(start.time_since_epoch().count()) {}

  Instant now() const override { return Instant(Seconds(now_.load())); }
  void advance(Seconds by) { now_ += by.count(); }
  void set(Instant t) { now_ = t.time_since_epoch().count(); }

 private:
  std::atomic<std::int64_t> now_;
};

}  // namespace adaudit
