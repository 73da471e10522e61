#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adaudit/common/rng.hpp"
#include "adaudit/filter/rules.hpp"

namespace adaudit::fixtures {

/// Synthetic filter list with `n` rules mixing host-anchored, path,
/// wildcard, option-bearing, exception and cosmetic rules.
inline std::string synthetic_filter_list(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::string text = "[Adblock Plus 2.0]\n! synthetic list\n";
  for (int i = 0; i < n; ++i) {
    const auto d = std::to_string(rng.below(5000));
    switch (rng.below(10)) {
      case 0: case 1: case 2:
        text += "||ad" + std::to_string(i) + ".host" + d + ".com^\n";
        break;
      case 3:
        text += "||cdn" + d + ".net/ads/" + std::to_string(i) + "/*.js$script\n";
        break;
      case 4:
        text += "/banner" + std::to_string(i) + "/*^\n";
        break;
      case 5:
        text += "||track" + std::to_string(i) + ".io^$third-party\n";
        break;
      case 6:
        text += "-adunit-" + std::to_string(i) + "-\n";
        break;
      case 7:
        text += "@@||ad" + std::to_string(rng.below(static_cast<std::uint64_t>(i) + 1)) +
                ".host" + d + ".com/safe/\n";
        break;
      case 8:
        text += "site" + d + ".com##.ad-" + std::to_string(i) + "\n";
        break;
      default:
        text += "|https://pixel" + std::to_string(i) + ".example/" + "$image\n";
        break;
    }
  }
  return text;
}

struct SyntheticRequest {
  std::string url;
  std::string page;
  filter::ResourceType type;
};

inline std::vector<SyntheticRequest> synthetic_requests(int n, int rule_count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SyntheticRequest> out;
  out.reserve(n);
  const filter::ResourceType types[] = {filter::ResourceType::kImage,
                                        filter::ResourceType::kScript,
                                        filter::ResourceType::kOther};
  for (int i = 0; i < n; ++i) {
    const auto k = std::to_string(rng.below(static_cast<std::uint64_t>(rule_count)));
    const auto d = std::to_string(rng.below(5000));
    std::string url;
    switch (rng.below(6)) {
      case 0: url = "https://ad" + k + ".host" + d + ".com/x/y.png?z=" + k; break;
      case 1: url = "https://cdn" + d + ".net/ads/" + k + "/lib.js"; break;
      case 2: url = "https://static.site" + d + ".com/banner" + k + "/img/1.gif"; break;
      case 3: url = "https://track" + k + ".io/p?uid=" + d; break;
      case 4: url = "https://pixel" + k + ".example/t.gif"; break;
      default: url = "https://www.news" + d + ".org/article/" + k + "-adunit-" + k + "-x.html"; break;
    }
    out.push_back({url, "https://www.site" + d + ".com/page", types[rng.below(3)]});
  }
  return out;
}

}  // namespace adaudit::fixtures
