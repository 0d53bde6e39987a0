#pragma once

#include <cstdint>

namespace mcaudit {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Counter-based uniform source. The variate for (trial, column) depends only on
/// the seed and the two counters, so evaluation order and threading never matter.
class RandomSource {
 public:
  constexpr explicit RandomSource(std::uint64_t seed = 42) : seed_(seed) {}

  constexpr std::uint64_t seed() const { return seed_; }

  constexpr std::uint64_t bits(std::uint64_t trial, std::uint64_t column) const {
    std::uint64_t h = detail::splitmix64(seed_);
    h = detail::splitmix64(h ^ trial);
    h = detail::splitmix64(h ^ (column * 0xD1B54A32D192ED03ULL));
    return h;
  }

  /// Uniform in the open interval (0,1).
  constexpr double uniform(std::uint64_t trial, std::uint64_t column) const {
    return (static_cast<double>(bits(trial, column) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// An independent source for auxiliary draws (score permutations, resampling).
  constexpr RandomSource derive(std::uint64_t tag) const {
    return RandomSource(detail::splitmix64(seed_ ^ detail::splitmix64(tag + 0x5851F42D4C957F2DULL)));
  }

 private:
  std::uint64_t seed_;
};

constexpr double uniform_for(const RandomSource& src, std::uint64_t trial, std::uint64_t assumption) {
  return src.uniform(trial, assumption);
}

}  // namespace mcaudit
