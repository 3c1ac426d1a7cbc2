#pragma once

#include <cstdint>

namespace motionforge {

/// Counter-based random source. Every draw is a pure function of
/// (seed, stream, counter), so parallel and serial consumers agree exactly.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t bits(std::uint64_t counter) const;
  /// Uniform in the open interval (0, 1).
  double uniform(std::uint64_t counter) const;
  /// Standard normal via Box-Muller on counters 2k and 2k+1.
  double normal(std::uint64_t counter) const;

  /// Independent child stream.
  CounterRng fork(std::uint64_t sub) const;

  std::uint64_t key() const { return key_; }

 private:
  struct RawKey {};
  CounterRng(RawKey, std::uint64_t key) : key_(key) {}
  std::uint64_t key_;
};

/// Sequential convenience wrapper that walks a CounterRng's counter.
class RngStream {
 public:
  explicit RngStream(CounterRng rng) : rng_(rng) {}
  RngStream(std::uint64_t seed, std::uint64_t stream) : rng_(seed, stream) {}

  double uniform() { return rng_.uniform(next_++); }
  double normal() { return rng_.normal(next_++); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace motionforge
