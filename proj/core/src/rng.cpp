#include "gne/rng.hpp"

namespace gne {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t SplitRng::word(std::string_view tag, std::uint64_t a, std::uint64_t b) const {
  std::uint64_t h = splitmix64(seed_ ^ fnv1a(tag));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  return h;
}

double SplitRng::unit(std::string_view tag, std::uint64_t a, std::uint64_t b) const {
  return static_cast<double>(word(tag, a, b) >> 11) * 0x1.0p-53;
}

double SplitRng::uniform(double lo, double hi, std::string_view tag, std::uint64_t a,
                         std::uint64_t b) const {
  return lo + (hi - lo) * unit(tag, a, b);
}

std::uint64_t SplitRng::below(std::uint64_t n, std::string_view tag, std::uint64_t a,
                              std::uint64_t b) const {
  return word(tag, a, b) % n;
}

}  // namespace gne
