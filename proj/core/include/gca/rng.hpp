#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

namespace gca {

// Deterministic random source. All transforms are hand-rolled on top of
// mt19937_64 because libstdc++'s distribution objects are not specified
// bit-for-bit across versions, and reproducibility of whole training runs
// is a hard requirement here. Every method consumes a fixed number of
// engine draws regardless of the values drawn, so call counts depend only
// on shapes. That property is what lets gradient checks freeze sampled
// noise by reseeding.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1), 53-bit resolution. One engine draw.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi). One engine draw.
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. Two engine draws, no cached spare.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Standard Gumbel: -ln(-ln U). One engine draw.
  double gumbel() {
    double u = std::clamp(uniform(), 1e-12, 1.0 - 1e-12);
    return -std::log(-std::log(u));
  }

  // Uniform index in [0, n). One engine draw. Modulo bias is irrelevant at
  // the n used here (dataset sizes << 2^64).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(engine_() % static_cast<std::uint64_t>(n));
  }

  // Independent child stream; consumes one draw from the parent. Used to
  // give each domain / worker its own sequence without draw-order coupling.
  Rng fork(std::uint64_t stream_id) {
    std::uint64_t x = engine_() + 0x9e3779b97f4a7c15ull * (stream_id + 1);
    // splitmix64 finalizer
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return Rng(x);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace gca
