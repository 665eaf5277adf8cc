#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sysid {

// SplitMix64 finalizer, used only to spread seeds and stream ids.
inline constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic random stream addressed by (seed, stream id).
///
/// Identical (seed, stream) pairs yield identical sample sequences.
/// substream(id) derives a new stream from the same master seed, so one
/// seed can drive separate process-noise and excitation streams whose
/// draws never interleave.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), gen_(mix64(mix64(seed) ^ mix64(stream))) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_; }

  RngStream substream(std::uint64_t id) const {
    return RngStream(seed_, mix64(stream_ ^ mix64(id + 0x632be59bd9b4e019ULL)));
  }

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// -1 or +1 with equal probability.
  double sign() { return (next_u64() >> 63) ? 1.0 : -1.0; }

  /// Standard normal (Marsaglia polar; consumes a variable number of draws).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double a = 0.0, b = 0.0, s = 0.0;
    do {
      a = 2.0 * uniform01() - 1.0;
      b = 2.0 * uniform01() - 1.0;
      s = a * a + b * b;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = b * f;
    has_spare_ = true;
    return a * f;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sysid
