#pragma once

#include <cstdint>
#include <random>

namespace hfda {

/// Seeded random stream with platform-independent draws.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Distributions from <random> are implementation-defined, so the
/// uniform, integer and Gaussian transforms are done here instead. Independent
/// streams are derived from (seed, stream id) through SplitMix64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  /// New generator whose draws are independent of this one's for a distinct id.
  Rng split(std::uint64_t stream_id) const;

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform01();

  /// Uniform integer on the closed range [lo, hi] (unbiased rejection).
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);

  /// Standard normal variate via the Marsaglia polar method.
  double normal();

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace hfda
