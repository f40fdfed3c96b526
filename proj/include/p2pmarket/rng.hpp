#ifndef P2PMARKET_RNG_HPP
#define P2PMARKET_RNG_HPP

// Stateless counter-based random draws. Every draw is a hash of the master
// seed and a key (stream, hour, day, agent, slot), so results never depend on
// evaluation order or thread schedule.

#include <cstdint>

namespace p2pmarket {

enum class Stream : std::uint64_t {
  TypeSample = 1,
  PolicyAssign = 2,
  Quantity = 3,
  Selection = 4,
  Regeneration = 5,
  Oracle = 6,
};

struct DrawKey {
  Stream stream;
  std::uint64_t hour = 0;
  std::uint64_t day = 0;
  std::uint64_t agent = 0;
  std::uint64_t slot = 0;
};

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t bits(const DrawKey& key) const {
    std::uint64_t h = mix(seed_ ^ 0x6a09e667f3bcc909ULL);
    h = mix(h ^ static_cast<std::uint64_t>(key.stream));
    h = mix(h ^ key.hour);
    h = mix(h ^ key.day);
    h = mix(h ^ key.agent);
    return mix(h ^ key.slot);
  }

  /// Uniform in [0,1) with 53 random bits.
  double uniform(const DrawKey& key) const {
    return static_cast<double>(bits(key) >> 11) * 0x1.0p-53;
  }

  double uniform(const DrawKey& key, double lo, double hi) const {
    return lo + (hi - lo) * uniform(key);
  }

 private:
  // SplitMix64 finalizer.
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
};

/// Sequential SplitMix64 generator for test-instance generation.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [lo, hi].
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next() % span);
  }

 private:
  std::uint64_t state_;
};

}  // namespace p2pmarket

#endif  // P2PMARKET_RNG_HPP
