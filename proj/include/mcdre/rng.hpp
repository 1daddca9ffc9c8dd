#pragma once

// Portable deterministic randomness. std:: distributions are implementation
// defined, so everything that must be byte-stable across platforms goes
// through this generator.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace mcdre {

/// FNV-1a over a string, used to derive named sub-streams.
constexpr std::uint64_t hash_name(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// SplitMix64 stream.
class Rng {
 public:
  explicit constexpr Rng(std::uint64_t seed = 0) noexcept : state_(seed) {}

  /// Independent stream keyed by (seed, name).
  static constexpr Rng derive(std::uint64_t seed, std::string_view name) noexcept {
    return Rng(mix64(seed ^ mix64(hash_name(name))));
  }

  constexpr std::uint64_t next_u64() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  /// Uniform in [0, 1) with 53 random bits.
  constexpr double uniform01() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). n must be positive.
  constexpr std::uint64_t below(std::uint64_t n) noexcept {
    // rejection sampling keeps the result unbiased
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  constexpr bool bernoulli(double p) noexcept { return uniform01() < p; }

  template <class Vec>
  constexpr void shuffle(Vec& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      auto tmp = v[i - 1];
      v[i - 1] = v[j];
      v[j] = tmp;
    }
  }

  constexpr std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace mcdre
