// Splittable counter-based random generator.
//
// Every draw is a pure function of (seed, tag, indices), so any parameter can
// be regenerated independently of draw order and across platforms.
#pragma once

#include <cstdint>
#include <string_view>

namespace gne {

/// SplitMix64 finalizer; bijective 64-bit mix with good avalanche.
std::uint64_t splitmix64(std::uint64_t z);

/// FNV-1a hash of a byte string.
std::uint64_t fnv1a(std::string_view s);

/// Counter-based generator: stateless draws keyed by a tag and two indices.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed) : seed_(seed) {}

  /// 64 uniformly distributed bits for (tag, a, b).
  std::uint64_t word(std::string_view tag, std::uint64_t a = 0, std::uint64_t b = 0) const;

  /// Uniform double in [0, 1) with 53-bit resolution.
  double unit(std::string_view tag, std::uint64_t a = 0, std::uint64_t b = 0) const;

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi, std::string_view tag, std::uint64_t a = 0,
                 std::uint64_t b = 0) const;

  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n, std::string_view tag, std::uint64_t a = 0,
                      std::uint64_t b = 0) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

}  // namespace gne
