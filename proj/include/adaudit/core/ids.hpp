#pragma once

#include <compare>
#include <functional>
#include <ostream>
#include <string>

namespace adaudit {

/// Opaque string identifier tagged by entity kind, so a participant id can
/// never be passed where an ad id is expected.
template <class Tag>
class Id {
 public:
  Id() = default;
  explicit Id(std::string value) : value_(std::move(value)) {}

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  friend auto operator<=>(const Id&, const Id&) = default;
  friend bool operator==(const Id&, const Id&) = default;
  friend std::ostream& operator<<(std::ostream& os, const Id& id) { return os << id.value_; }

 private:
  std::string value_;
};

using ParticipantId = Id<struct ParticipantTag>;
using AdId = Id<struct AdTag>;
using DeliveryId = Id<struct DeliveryTag>;
using SurveyId = Id<struct SurveyTag>;

}  // namespace adaudit

template <class Tag>
struct std::hash<adaudit::Id<Tag>> {
  std::size_t operator()(const adaudit::Id<Tag>& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
