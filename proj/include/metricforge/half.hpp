#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <span>

namespace metricforge {

/// IEEE-754 binary16 storage type. Arithmetic is always done in float; this
/// type only exists to hold rounded values.
struct Half {
  std::uint16_t bits = 0;

  friend constexpr bool operator==(Half, Half) = default;
};

/// float -> binary16, round-to-nearest-even. NaN payloads collapse to a
/// quiet NaN; overflow goes to infinity.
inline Half to_half(float value) {
  constexpr std::uint32_t kF32Infinity = 255u << 23;
  constexpr std::uint32_t kF16Overflow = (127u + 16u) << 23;
  constexpr std::uint32_t kDenormMagic = ((127u - 15u) + (23u - 10u) + 1u) << 23;

  std::uint32_t u = std::bit_cast<std::uint32_t>(value);
  const std::uint32_t sign = u & 0x80000000u;
  u ^= sign;

  std::uint16_t out;
  if (u >= kF16Overflow) {
    out = (u > kF32Infinity) ? 0x7e00 : 0x7c00;
  } else if (u < (113u << 23)) {
    // Result is subnormal or zero: let the FPU do the rounding by adding a
    // magic number that aligns the mantissa.
    const float shifted = std::bit_cast<float>(u) + std::bit_cast<float>(kDenormMagic);
    out = static_cast<std::uint16_t>(std::bit_cast<std::uint32_t>(shifted) - kDenormMagic);
  } else {
    const std::uint32_t mant_odd = (u >> 13) & 1u;
    u += (static_cast<std::uint32_t>(15 - 127) << 23) + 0xfffu;
    u += mant_odd;
    out = static_cast<std::uint16_t>(u >> 13);
  }
  return Half{static_cast<std::uint16_t>(out | (sign >> 16))};
}

inline float half_to_float_slow(Half h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h.bits & 0x8000u) << 16;
  const std::uint32_t exponent = (h.bits >> 10) & 0x1fu;
  const std::uint32_t mantissa = h.bits & 0x3ffu;
  if (exponent == 0) {
    // zero or subnormal: mantissa * 2^-24 is exact in float
    const float magnitude = static_cast<float>(mantissa) * 0x1p-24f;
    return std::bit_cast<float>(std::bit_cast<std::uint32_t>(magnitude) | sign);
  }
  if (exponent == 31) {
    return std::bit_cast<float>(sign | 0x7f800000u | (mantissa << 13));
  }
  return std::bit_cast<float>(sign | ((exponent + 112u) << 23) | (mantissa << 13));
}

namespace detail {

inline const std::array<float, 65536>& half_table() {
  static const auto table = [] {
    std::array<float, 65536> t{};
    for (std::uint32_t i = 0; i < t.size(); ++i) {
      t[i] = half_to_float_slow(Half{static_cast<std::uint16_t>(i)});
    }
    return t;
  }();
  return table;
}

}  // namespace detail

inline float to_float(Half h) { return detail::half_table()[h.bits]; }

/// Rounds a float through binary16 and back.
inline float round_to_half(float value) { return to_float(to_half(value)); }

inline void round_to_half(std::span<float> values) {
  for (float& v : values) v = round_to_half(v);
}

}  // namespace metricforge
