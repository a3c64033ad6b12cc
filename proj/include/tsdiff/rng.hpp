#pragma once

// Counter-based random streams (Philox4x32-10).
//
// Every random draw in the library is addressed by (seed, purpose, a, b):
// two runs that ask for the same address see the same numbers regardless of
// call order or batching. Samplers use a = chain index and b = iteration, so
// per-chain and batched runs agree bit for bit.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace tsdiff {

using Philox4x32Counter = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

inline Philox4x32Counter philox4x32_10(Philox4x32Counter ctr, Philox4x32Key key) {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kW0;
      key[1] += kW1;
    }
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Named sub-streams derived from the root seed.
enum class Purpose : std::uint32_t {
  data = 1,
  init = 2,
  training = 3,
  sampling = 4,
  perturbation = 5,
  diagnostics = 6,
  projection = 7,
  reference = 8,
};

class Stream {
 public:
  Stream(std::uint64_t seed, Purpose purpose, std::uint64_t a = 0, std::uint32_t b = 0) {
    const std::uint64_t k =
        splitmix64(seed) ^ splitmix64(0xA24BAED4963EE407ull * static_cast<std::uint64_t>(purpose));
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    sub_ = b;
    a_lo_ = static_cast<std::uint32_t>(a);
    a_hi_ = static_cast<std::uint32_t>(a >> 32);
  }

  std::uint32_t next_u32() {
    if (pos_ == 4) refill();
    return buf_[pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r = next_u64();
    while (r >= limit) r = next_u64();
    return r % n;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  void fill_normal(std::span<double> out) {
    for (double& v : out) v = normal();
  }

 private:
  void refill() {
    buf_ = philox4x32_10({block_, sub_, a_lo_, a_hi_}, key_);
    ++block_;
    pos_ = 0;
  }

  Philox4x32Key key_{};
  std::uint32_t sub_ = 0;
  std::uint32_t a_lo_ = 0;
  std::uint32_t a_hi_ = 0;
  std::uint32_t block_ = 0;
  Philox4x32Counter buf_{};
  int pos_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tsdiff
