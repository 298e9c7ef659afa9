#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace blgcn {

/// Seeded random source. Every stochastic routine takes one explicitly; no
/// global state. Independent streams derived from one root seed give
/// reproducible results regardless of the order streams are consumed in.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  static Rng stream(std::uint64_t root, std::uint64_t index);

  double normal();                        // N(0, 1)
  double normal(double mean, double std) { return mean + std * normal(); }
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t below(std::size_t n);       // uniform integer in [0, n)

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace blgcn
