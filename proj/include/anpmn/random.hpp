// Counter-based random streams.
//
// Philox4x32-10 (Salmon et al., SC'11) keyed by a 64-bit stream id. Every
// stream is addressable independently, so (seed, trajectory, level) tuples map
// to reproducible noise realizations regardless of generation order or thread
// count. Gaussian draws use Box-Muller on 53-bit uniforms.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace anpmn {

/// SplitMix64 finalizer; used to fold tuples of integers into a stream key.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x5851F42D4C957F2DULL;
  for (auto p : parts) h = mix64(h ^ mix64(p));
  return h;
}

class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox4x32(std::uint64_t key, std::uint64_t counter = 0)
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
        counter_(counter) {}

  /// Stateless block function: 128 random bits for a given counter.
  Block block(std::uint64_t counter) const {
    return apply({static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32), 0u, 0u},
                 key_);
  }

  /// The raw 10-round bijection on a full 128-bit counter.
  static Block apply(Block ctr, std::array<std::uint32_t, 2> k) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ k[0], lo1, hi0 ^ ctr[3] ^ k[1], lo0};
      k[0] += kW0;
      k[1] += kW1;
    }
    return ctr;
  }

  std::uint64_t next_u64() {
    if (lane_ == 0) buf_ = block(counter_++);
    const std::uint64_t v = (std::uint64_t{buf_[lane_]} << 32) | buf_[lane_ + 1];
    lane_ = (lane_ + 2) % 4;
    return v;
  }

  /// Uniform in (0, 1); never returns 0 so it is safe under log().
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  std::array<std::uint32_t, 2> key_;
  std::uint64_t counter_;
  Block buf_{};
  int lane_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace anpmn
