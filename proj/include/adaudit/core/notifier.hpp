#pragma once

#include <mutex>
#include <string>
#include <vector>

#include "adaudit/common/time.hpp"
#include "adaudit/core/ids.hpp"

namespace adaudit {

enum class NotificationKind { kOnboardingGranted, kZeroAdsReminder, kSurveyReleased, kOffboarded };

struct Notification {
  ParticipantId participant_id;
  NotificationKind kind;
  Instant at;
  std::string detail;
};

/// Outbound participant messages. Delivery (email or otherwise) is pluggable.
class Notifier {
 public:
  virtual ~Notifier() = default;
  virtual void send(const Notification& n) = 0;
};

class NullNotifier final : public Notifier {
 public:
  void send(const Notification&) override {}
};

/// Keeps every notification in memory; used by tests and the simulator.
class RecordingNotifier final : public Notifier {
 public:
  void send(const Notification& n) override {
    std::lock_guard lock(mu_);
    sent_.push_back(n);
  }
  std::vector<Notification> sent() const {
    std::lock_guard lock(mu_);
    return sent_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<Notification> sent_;
};

}  // namespace adaudit
