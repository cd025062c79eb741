#pragma once

// Counter-based random streams (Philox4x32-10). Every variate is a pure
// function of (seed, tag, replica, step, index), so replicas are reproducible
// and independent of execution order or thread count.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace flowcross {

using Philox4x32Counter = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

namespace detail {

inline void philox_round(Philox4x32Counter& ctr, const Philox4x32Key& key) {
  constexpr std::uint64_t kM0 = 0xD2511F53u;
  constexpr std::uint64_t kM1 = 0xCD9E8D57u;
  const std::uint64_t p0 = kM0 * ctr[0];
  const std::uint64_t p1 = kM1 * ctr[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

}  // namespace detail

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
inline Philox4x32Counter philox4x32_10(Philox4x32Counter ctr, Philox4x32Key key) {
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kW0;
      key[1] += kW1;
    }
    detail::philox_round(ctr, key);
  }
  return ctr;
}

/// Maps 64 random bits to the open interval (0, 1). 52 bits keep the
/// half-offset exactly representable, so 1.0 is never produced.
inline double bits_to_open_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

/// Domain separation between the independent noise sources of a replica.
enum class StreamTag : std::uint32_t {
  kSheet = 1,    // Wiener-sheet cell increments
  kReduced = 2,  // (W1, W2) increments of the reduced system
  kBridge = 3,   // Brownian-bridge walk increments
  kAux = 4,
};

/// A replica's view of the counter-based generator.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint32_t replica = 0;

  RngStream with_replica(std::uint32_t r) const { return {seed, r}; }

  Philox4x32Counter raw(StreamTag tag, std::uint32_t step, std::uint32_t index) const {
    const Philox4x32Key key = {static_cast<std::uint32_t>(seed),
                               static_cast<std::uint32_t>(seed >> 32)};
    return philox4x32_10({static_cast<std::uint32_t>(tag), replica, step, index}, key);
  }

  std::array<double, 2> uniform_pair(StreamTag tag, std::uint32_t step,
                                     std::uint32_t index) const {
    const auto w = raw(tag, step, index);
    const std::uint64_t b0 = (std::uint64_t{w[0]} << 32) | w[1];
    const std::uint64_t b1 = (std::uint64_t{w[2]} << 32) | w[3];
    return {bits_to_open_unit(b0), bits_to_open_unit(b1)};
  }

  /// Two independent standard normals (Box-Muller).
  std::array<double, 2> normal_pair(StreamTag tag, std::uint32_t step,
                                    std::uint32_t index) const {
    const auto [u1, u2] = uniform_pair(tag, step, index);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
  }

  double normal(StreamTag tag, std::uint32_t step, std::uint32_t index) const {
    const auto [u1, u2] = uniform_pair(tag, step, index);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
};

}  // namespace flowcross
