#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace vox {

// Deterministic RNG wrapper. All sampling goes through explicit helpers so
// checkpoints and augmentation records replay bit-identically; the standard
// distribution objects are avoided on purpose.
struct Rng {
  std::mt19937_64 g;

  explicit Rng(std::uint64_t seed) : g(seed) {}

  std::uint64_t next() { return g(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }

  double normal() {
    // Box-Muller; one sample per call keeps the stream layout simple.
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }
};

// splitmix64-style mixing for per-step substreams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace vox
