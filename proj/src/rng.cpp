#include "saelab/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "saelab/error.hpp"

namespace saelab {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t c = counter_++;
  return mix64(mix64(seed_) ^ mix64(c ^ 0xd1b54a32d192ed03ULL));
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_open_zero() {
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t RngStream::below(std::uint64_t n) {
  require(n > 0, "RngStream::below: n must be positive");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double RngStream::normal() {
  const double u1 = uniform_open_zero();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RngStream RngStream::split(std::uint64_t stream_id) const {
  return RngStream(mix64(seed_ ^ mix64(stream_id + 0x632be59bd9b4e019ULL)), 0);
}

Matrix sample_normal(RngStream& rng, std::size_t rows, std::size_t cols, double mean,
                     double stddev) {
  require(stddev >= 0.0, "sample_normal: std must be non-negative");
  Matrix out(rows, cols);
  auto v = out.values();
  std::size_t i = 0;
  // Box-Muller yields a pair per two uniforms; both halves are used.
  for (; i + 1 < v.size(); i += 2) {
    const double r = std::sqrt(-2.0 * std::log(rng.uniform_open_zero()));
    const double t = 2.0 * std::numbers::pi * rng.uniform();
    v[i] = mean + stddev * r * std::cos(t);
    v[i + 1] = mean + stddev * r * std::sin(t);
  }
  if (i < v.size()) v[i] = mean + stddev * rng.normal();
  return out;
}

std::vector<std::size_t> permutation(RngStream& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

}  // namespace saelab
