#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "saelab/matrix.hpp"

namespace saelab {

/// Counter-based random stream. Each draw is a pure function of
/// (seed, counter), so a stream is reproducible across platforms and child
/// streams can be derived without sharing state.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform in (0, 1]; safe as a log() argument.
  double uniform_open_zero();
  double uniform(double lo, double hi);
  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// One standard normal draw (Box-Muller; consumes two uniforms).
  double normal();

  /// Derive an independent stream; does not advance this one.
  RngStream split(std::uint64_t stream_id) const;

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

std::uint64_t mix64(std::uint64_t x);

Matrix sample_normal(RngStream& rng, std::size_t rows, std::size_t cols, double mean, double stddev);

/// Fisher-Yates permutation of [0, n).
std::vector<std::size_t> permutation(RngStream& rng, std::size_t n);

}  // namespace saelab
