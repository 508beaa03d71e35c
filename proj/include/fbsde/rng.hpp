#pragma once

// Counter-based random number generation.
//
// Every draw is a pure function of (seed, stream, c0, c1, c2, c3), so batches
// can be produced in any order (or in parallel) and still reproduce
// bit-identically. The generator is Philox-4x64 with 10 rounds.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace fbsde {

namespace detail {

inline void mulhilo64(std::uint64_t a, std::uint64_t b, std::uint64_t& hi,
                      std::uint64_t& lo) {
  const unsigned __int128 prod =
      static_cast<unsigned __int128>(a) * static_cast<unsigned __int128>(b);
  hi = static_cast<std::uint64_t>(prod >> 64);
  lo = static_cast<std::uint64_t>(prod);
}

}  // namespace detail

/// Philox-4x64-10 block cipher: 256-bit counter, 128-bit key, 256-bit output.
struct Philox4x64 {
  static constexpr std::uint64_t kMult0 = 0xD2E7470EE14C6C93ULL;
  static constexpr std::uint64_t kMult1 = 0xCA5A826395121157ULL;
  static constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;

  static std::array<std::uint64_t, 4> block(std::uint64_t key0,
                                            std::uint64_t key1,
                                            std::array<std::uint64_t, 4> c) {
    for (int round = 0; round < 10; ++round) {
      std::uint64_t hi0, lo0, hi1, lo1;
      detail::mulhilo64(kMult0, c[0], hi0, lo0);
      detail::mulhilo64(kMult1, c[2], hi1, lo1);
      c = {hi1 ^ c[1] ^ key0, lo1, hi0 ^ c[3] ^ key1, lo0};
      key0 += kWeyl0;
      key1 += kWeyl1;
    }
    return c;
  }
};

/// Maps 64 random bits to a uniform in the open interval (0,1).
inline double uniform_from_bits(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Distinguishes the independent noise sources that share one seed.
enum class NoiseRole : std::uint32_t {
  kPrimary = 0,   // increments of W
  kPaired = 1,    // increments of W'
  kInner = 2,     // inner resampling for conditional expectations
  kGeneric = 3,   // ad-hoc draws (tests, probe designs)
};

/// Packs a noise role and a coordinate index into one counter lane.
inline std::uint64_t noise_lane(NoiseRole role, std::uint64_t coordinate) {
  return (static_cast<std::uint64_t>(role) << 32) | coordinate;
}

/// One standard normal draw, fully determined by its coordinates.
///
/// The (path, step, lane, tag) tuple must be unique per draw; `tag` is free
/// for extra indices such as inner-resampling replicates.
inline double normal_draw(std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t path, std::uint64_t step,
                          std::uint64_t lane, std::uint64_t tag = 0) {
  const auto words = Philox4x64::block(seed, stream, {path, step, lane, tag});
  const double u1 = uniform_from_bits(words[0]);
  const double u2 = uniform_from_bits(words[1]);
  // Box-Muller; u1 in (0,1) keeps the log argument strictly positive.
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

/// Uniform draw in (0,1) with the same addressing scheme as normal_draw.
inline double uniform_draw(std::uint64_t seed, std::uint64_t stream,
                           std::uint64_t path, std::uint64_t step,
                           std::uint64_t lane, std::uint64_t tag = 0) {
  const auto words = Philox4x64::block(seed, stream, {path, step, lane, tag});
  return uniform_from_bits(words[0]);
}

}  // namespace fbsde
