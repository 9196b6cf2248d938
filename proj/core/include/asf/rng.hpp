#pragma once

#include <cmath>
#include <cstdint>

namespace asf {

// Deterministic 64-bit generator (splitmix64 stream seeding + xoshiro-style
// output through mt19937_64 would drag in implementation-defined
// distributions, so the distributions below are hand-rolled and stable
// across standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // warm up so that small seeds diverge quickly
    next_u64();
    next_u64();
  }

  // Derive an independent stream, e.g. one per video or per batch item.
  // Serial and parallel consumers of derived streams agree bitwise.
  Rng derive(std::uint64_t index) const {
    return Rng(mix(state_ ^ 0x9e3779b97f4a7c15ULL, index));
  }

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // modulo bias is negligible for n << 2^64 and keeps the stream simple
    return next_u64() % n;
  }

  // Standard normal via Box-Muller (one value per call, no caching so the
  // stream position is predictable).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace asf
