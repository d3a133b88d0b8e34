#pragma once

#include <boost/math/special_functions/erf.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace flowlab {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A block of four 32-bit words is a pure function of (counter, key), so any
/// draw can be regenerated from its coordinates without replaying a stream.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Uniform on the open interval (0, 1): (k + 1/2) 2^-52 with k the top 52
/// bits, exact in double at both ends.
inline double uniform_open(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

/// Standard normal by inversion: Phi^{-1}(u) = -sqrt(2) erfc^{-1}(2u).
inline double normal_from_uniform(double u) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u); }

/// Gaussian draws addressed by (seed, path, step, component).
///
/// Counter layout: {step, component / 2, path low word, path high word};
/// key = seed split into two words. Each block yields two 64-bit lanes, one
/// per component parity.
class CounterNormal {
 public:
  explicit CounterNormal(std::uint64_t seed) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  std::uint64_t bits(std::uint64_t path, std::uint32_t step, std::uint32_t component) const noexcept {
    const Philox4x32::Counter ctr{step, component / 2, static_cast<std::uint32_t>(path),
                                  static_cast<std::uint32_t>(path >> 32)};
    const auto out = Philox4x32::generate(ctr, key_);
    const unsigned lane = (component % 2) * 2;
    return (static_cast<std::uint64_t>(out[lane]) << 32) | out[lane + 1];
  }

  double operator()(std::uint64_t path, std::uint32_t step, std::uint32_t component) const {
    return normal_from_uniform(uniform_open(bits(path, step, component)));
  }

 private:
  Philox4x32::Key key_;
};

}  // namespace flowlab
