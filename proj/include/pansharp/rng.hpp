#pragma once

#include <cmath>
#include <cstdint>

namespace pansharp {

// Counter-based generator: every draw is a pure function of (seed, counter),
// so streams can be forked per sample and replayed bit-exactly from a
// recorded seed regardless of call interleaving elsewhere.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64() { return scramble(seed_, counter_++); }

  // [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) {
    return n <= 1 ? 0 : static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Box-Muller; draws two uniforms per sample, no cached state.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // Independent sub-stream; forking does not advance this generator.
  CounterRng fork(std::uint64_t stream) const {
    return CounterRng(scramble(seed_ ^ 0x9e3779b97f4a7c15ull, stream));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  // splitmix64 finalizer applied to seed + counter * golden ratio.
  static std::uint64_t scramble(std::uint64_t seed, std::uint64_t n) {
    std::uint64_t z = seed + (n + 1) * 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace pansharp
