#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>

namespace qswitch {

/// Counter-based generator: every draw is a pure function of
/// (seed, counter, lane), so trajectories can be replayed from any step
/// without carrying generator state.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t bits(std::uint64_t counter, std::uint32_t lane = 0) const {
    std::uint64_t z = mix(seed_ ^ 0x6a09e667f3bcc909ULL);
    z = mix(z ^ counter);
    return mix(z ^ (static_cast<std::uint64_t>(lane) * 0x9e3779b97f4a7c15ULL + 0x3c6ef372fe94f82bULL));
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform(std::uint64_t counter, std::uint32_t lane = 0) const {
    return static_cast<double>(bits(counter, lane) >> 11) * 0x1.0p-53;
  }

  /// Uniform in (0, 1]; safe to pass to log().
  double uniform_open0(std::uint64_t counter, std::uint32_t lane = 0) const {
    return (static_cast<double>(bits(counter, lane) >> 11) + 1.0) * 0x1.0p-53;
  }

 private:
  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
};

/// Inverse-CDF draw from a probability vector given u in [0,1).
/// Zero-probability entries are never returned.
inline std::size_t sample_index(std::span<const double> probs, double u) {
  if (probs.empty()) throw std::invalid_argument("sample_index: empty distribution");
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = i;
    acc += probs[i];
    if (u < acc) return i;
  }
  // u landed in the rounding gap above the accumulated mass
  return last_positive;
}

}  // namespace qswitch
