#pragma once

#include <cstdint>

namespace qpmc {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Deterministic random stream derived from a global seed and a use counter.
// Bit-identical across platforms, unlike the std distributions.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t counter) {
    state_ = seed;
    std::uint64_t mix = splitmix64(state_) ^ (counter * 0xD1B54A32D192ED03ull);
    state_ = mix;
    splitmix64(state_);
  }

  std::uint64_t next() { return splitmix64(state_); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::uint64_t state_;
};

}  // namespace qpmc
