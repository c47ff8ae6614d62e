#pragma once

#include <cstdint>
#include <string_view>

namespace unitr {

// Portable seedable generator (SplitMix64). Every draw is defined by integer
// arithmetic, so integer decisions agree bit-for-bit across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller (one value per call).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent child stream keyed by name; does not advance this stream.
  Rng fork(std::string_view name) const;

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace unitr
