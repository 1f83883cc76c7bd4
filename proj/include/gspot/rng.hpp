#pragma once

#include <cmath>
#include <cstdint>

namespace gspot {

// Deterministic, platform-independent PRNG (splitmix64 core).
// std:: distributions are implementation-defined, which would break
// manifest/checkpoint hash reproducibility across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Box-Muller, no cached pair so the stream stays a pure function of
  // the call sequence.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // [0, n)
  int64_t uniform_int(int64_t n) {
    if (n <= 0) return 0;
    // 128-bit multiply keeps the mapping unbiased enough for n << 2^53.
    uint64_t x = next_u64() >> 11;
    return static_cast<int64_t>((static_cast<double>(x) * 0x1.0p-53) * static_cast<double>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Derive an independent stream id from a base seed and indices.
  static uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static uint64_t mix(uint64_t a, uint64_t b, uint64_t c) {
    return mix(mix(a, b), c);
  }

 private:
  uint64_t state_;
};

}  // namespace gspot
