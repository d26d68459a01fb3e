#pragma once

// Counter-based Philox4x32-10 generator (Salmon et al., "Parallel random
// numbers: as easy as 1, 2, 3", SC 2011). Every draw is a pure function of
// (key, counter), so streams can be indexed by (seed, replica, step) and
// evaluated in any order.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace gsvie::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

namespace detail {

inline constexpr std::uint32_t kMul0 = 0xD2511F53u;
inline constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
inline constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

constexpr Counter round(const Counter& c, const Key& k) noexcept {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
  return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
          static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
}

}  // namespace detail

/// Philox4x32 with 10 rounds.
constexpr Counter philox4x32(Counter ctr, Key key) noexcept {
  ctr = detail::round(ctr, key);
  for (int r = 1; r < 10; ++r) {
    key[0] += detail::kWeyl0;
    key[1] += detail::kWeyl1;
    ctr = detail::round(ctr, key);
  }
  return ctr;
}

/// Uniform in (0, 1] with 53 random bits; never returns 0 so log() is safe.
constexpr double to_unit_open_closed(std::uint32_t hi, std::uint32_t lo) noexcept {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

/// Keyed stream address: one standard normal per (seed, replica, step, tag).
struct StreamAddress {
  std::uint64_t seed = 0;
  std::uint64_t replica = 0;
  std::uint32_t step = 0;
  std::uint32_t tag = 0;
};

inline Counter draw_block(const StreamAddress& a) noexcept {
  const Key key{static_cast<std::uint32_t>(a.seed), static_cast<std::uint32_t>(a.seed >> 32)};
  const Counter ctr{a.step, static_cast<std::uint32_t>(a.replica),
                    static_cast<std::uint32_t>(a.replica >> 32), a.tag};
  return philox4x32(ctr, key);
}

/// Standard normal via the cosine branch of Box-Muller on one Philox block.
inline double standard_normal(const StreamAddress& a) noexcept {
  const Counter w = draw_block(a);
  const double u1 = to_unit_open_closed(w[0], w[1]);
  const double u2 = to_unit_open_closed(w[2], w[3]);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Uniform in (0, 1] at the given address.
inline double uniform(const StreamAddress& a) noexcept {
  const Counter w = draw_block(a);
  return to_unit_open_closed(w[0], w[1]);
}

/// Sequential convenience wrapper over a keyed stream; used by samplers
/// that want "the next" number without managing counters by hand.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t replica, std::uint32_t tag = 0) noexcept
      : addr_{seed, replica, 0, tag} {}

  double uniform() noexcept {
    const double u = rng::uniform(addr_);
    ++addr_.step;
    return u;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * (1.0 - uniform()); }

  double normal() noexcept {
    const double z = standard_normal(addr_);
    ++addr_.step;
    return z;
  }

 private:
  StreamAddress addr_;
};

}  // namespace gsvie::rng
