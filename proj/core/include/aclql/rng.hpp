#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace aclql {

/// Identifies which part of a run consumes a random stream.
enum class RngComponent : std::uint64_t {
  kInit = 1,
  kBatch = 2,
  kBehaviorSample = 3,
  kPolicySample = 4,
  kTargetSample = 5,
  kPairing = 6,
  kActorSample = 7,
  kEval = 8,
  kDataGen = 9,
  kFiniteDiff = 10,
  kBcBatch = 11,
  kTabular = 12,
  kSynthetic = 13,
};

/// Counter-based stream derivation: the stream for (seed, component, counter)
/// depends on nothing else, so reordering consumers never perturbs others.
class Rng {
 public:
  explicit Rng(std::uint64_t state) : engine_(state) {}

  static Rng stream(std::uint64_t seed, RngComponent component, std::uint64_t counter = 0);

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

inline Rng Rng::stream(std::uint64_t seed, RngComponent component, std::uint64_t counter) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(component));
  h = splitmix64(h ^ counter);
  return Rng(h);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace aclql
