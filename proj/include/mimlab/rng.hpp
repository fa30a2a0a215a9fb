#pragma once

// Counter-based random streams. A stream is keyed by (global seed, purpose
// tag, epoch, sample index); draw i is a pure function of (key, i), so streams
// are reproducible independent of iteration or thread order.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string_view>

namespace mimlab {

namespace detail {
inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace detail

class RngStream {
 public:
  RngStream(uint64_t seed, std::string_view purpose, uint64_t epoch = 0, uint64_t index = 0) {
    uint64_t k = detail::mix64(seed);
    k = detail::mix64(k ^ detail::fnv1a(purpose));
    k = detail::mix64(k ^ (epoch * 0x9e3779b97f4a7c15ULL));
    k = detail::mix64(k ^ (index * 0xc2b2ae3d27d4eb4fULL));
    key_ = k;
  }

  uint64_t next_u64() { return detail::mix64(key_ + (counter_++) * 0x9e3779b97f4a7c15ULL); }

  // uniform in [0, 1)
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // unbiased integer in [0, n)
  uint64_t bounded(uint64_t n) {
    __uint128_t m = static_cast<__uint128_t>(next_u64()) * n;
    auto lo = static_cast<uint64_t>(m);
    if (lo < n) {
      const uint64_t t = (0 - n) % n;
      while (lo < t) {
        m = static_cast<__uint128_t>(next_u64()) * n;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

  // standard normal via Box-Muller
  double normal() {
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // normal(0, sigma) rejected outside +-2 sigma
  double trunc_normal(double sigma) {
    double z = normal();
    while (std::abs(z) > 2.0) z = normal();
    return z * sigma;
  }

  bool coin(double p) { return uniform01() < p; }

 private:
  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace mimlab
