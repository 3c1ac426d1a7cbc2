#include "motionforge/rng.hpp"

#include <cmath>
#include <numbers>

namespace motionforge {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix64(mix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL))) {}

std::uint64_t CounterRng::bits(std::uint64_t counter) const {
  return mix64(key_ ^ mix64(counter * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL));
}

double CounterRng::uniform(std::uint64_t counter) const {
  // 53 random mantissa bits, shifted off zero.
  return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t counter) const {
  const double u1 = uniform(2 * counter);
  const double u2 = uniform(2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

CounterRng CounterRng::fork(std::uint64_t sub) const {
  return CounterRng(RawKey{}, mix64(key_ + mix64(sub ^ 0x5851f42d4c957f2dULL)));
}

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n <= 1) {
    return 0;
  }
  return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
}

}  // namespace motionforge
