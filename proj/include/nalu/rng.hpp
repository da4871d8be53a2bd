#pragma once

#include <cstdint>

namespace nalu {

// SplitMix64 stream. Same seed gives the same sequence on every platform;
// split(k) derives an independent child stream keyed by k.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  // Uniform double in [0, 1) with 53 random bits.
  double uniform();
  // Uniform double in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  bool coin(double p = 0.5) { return uniform() < p; }

  // Child stream; depends only on this stream's seed and k, not on how many
  // draws have been made.
  Rng split(std::uint64_t k) const;

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t z);

}  // namespace nalu
