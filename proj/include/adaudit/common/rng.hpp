#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace adaudit {

/// Seeded generator with platform-independent derived draws.
///
/// The engine is `std::mt19937_64`, whose output sequence is fixed by the
/// standard. The distribution helpers below are implemented here instead of
/// using `<random>` distributions, whose algorithms vary between standard
/// library vendors, so that every seeded run is bit-reproducible anywhere.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for a named purpose, e.g. `derive(seed, "swap")`.
  static Rng derive(std::uint64_t seed, std::string_view label);

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  /// Poisson draw (Knuth for small means, normal approximation above 60).
  std::int64_t poisson(double mean);

 private:
  std::mt19937_64 engine_;
};

/// 64-bit FNV-1a, used to mix labels into seeds.
std::uint64_t fnv1a64(std::string_view text);

/// Uniform shuffle (Fisher-Yates, high index downwards).
template <class T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

/// k distinct indices drawn uniformly from [0, n), in draw order.
/// Partial Fisher-Yates: position i swaps with a uniform pick from [i, n).
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng);

/// Uniform sample of min(k, |items|) items without replacement.
template <class T>
std::vector<T> sample_without_replacement(const std::vector<T>& items,
                                          std::size_t k, Rng& rng) {
  std::vector<T> out;
  const auto picks = sample_indices(items.size(), std::min(k, items.size()), rng);
  out.reserve(picks.size());
  for (auto i : picks) out.push_back(items[i]);
  return out;
}

}  // namespace adaudit
