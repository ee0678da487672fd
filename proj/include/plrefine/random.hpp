#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace plr {

// Seeded generator with platform-independent draws.
//
// std::mt19937_64 is bit-specified by the standard, the std distributions are
// not, so every draw is derived here from raw 64-bit outputs. Each method
// consumes a fixed number of engine outputs (poisson included), so two runs
// that make the same calls see the same stream.
class RandomState {
 public:
  explicit RandomState(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  // Independent stream keyed by (seed, keys...). Used to give every frame,
  // round and purpose its own reproducible stream.
  static RandomState derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; always consumes two outputs.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0, n); n must be > 0.
  std::size_t index(std::size_t n);

  bool bernoulli(double p) { return uniform() < p; }

  // Inverse-CDF Poisson from a single uniform, monotone in `mean` for a fixed
  // draw. Means above 700 are rejected (exp(-mean) underflows).
  std::uint32_t poisson(double mean);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace plr
