#include "hfda/rng.hpp"

#include <cmath>

namespace hfda {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(splitmix64(seed ^ splitmix64(stream))) {}

Rng Rng::split(std::uint64_t stream_id) const {
  return Rng(seed_, splitmix64(stream_ + 0x632be59bd9b4e019ULL) ^ stream_id);
}

double Rng::uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::uniform_int(std::uint64_t lo, std::uint64_t hi) {
  const std::uint64_t span = hi - lo;
  if (span == ~0ULL) return engine_();
  const std::uint64_t range = span + 1;
  // 2^64 mod range; rejecting draws below it leaves a multiple of range.
  const std::uint64_t threshold = (0ULL - range) % range;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x < threshold);
  return lo + x % range;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform01() - 1.0;
    v = 2.0 * uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  has_spare_ = true;
  return u * factor;
}

}  // namespace hfda
