#include "unitr/rng.hpp"

#include <cmath>
#include <numbers>

#include "unitr/common.hpp"

namespace unitr {

std::uint64_t Rng::below(std::uint64_t n) {
  // Lemire-style rejection keeps the result unbiased.
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::fork(std::string_view name) const {
  Rng mixer(state_ ^ fnv1a(name));
  mixer.next_u64();
  return Rng(mixer.next_u64());
}

}  // namespace unitr
