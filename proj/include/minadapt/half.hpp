#pragma once

#include <cstdint>
#include <cstring>

namespace minadapt {

// IEEE 754 binary16 conversions. Model parameters are stored at 16 bits per
// value; arithmetic runs at full precision. Round-to-nearest-even.

inline std::uint16_t float_to_half(float f) noexcept {
    std::uint32_t x;
    std::memcpy(&x, &f, 4);
    const std::uint32_t sign = (x >> 16) & 0x8000u;
    const std::uint32_t mant = x & 0x007FFFFFu;
    const std::int32_t exp = static_cast<std::int32_t>((x >> 23) & 0xFF) - 127;

    if (exp == 128) {  // inf / nan
        return static_cast<std::uint16_t>(sign | 0x7C00u | (mant ? 0x0200u : 0u));
    }
    if (exp > 15) {  // overflow -> inf
        return static_cast<std::uint16_t>(sign | 0x7C00u);
    }
    const std::uint32_t m = mant | 0x00800000u;  // implicit bit at position 23
    if (exp >= -14) {
        // half = (exp+14)<<10 plus the 11-bit significand (implicit bit lands
        // at bit 10, completing the biased exponent); round-up carries flow
        // into the exponent field on their own, including the inf boundary.
        std::uint32_t half = m >> 13;
        const std::uint32_t rem = m & 0x1FFFu;
        if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;
        half += static_cast<std::uint32_t>(exp + 14) << 10;
        return static_cast<std::uint16_t>(sign | half);
    }
    if (exp >= -25) {  // subnormal half: value = h * 2^-24, h = m * 2^(exp+1)
        const int shift = -exp - 1;  // 14..24
        std::uint32_t half = m >> shift;
        const std::uint32_t rem = m & ((1u << shift) - 1);
        const std::uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half & 1u))) ++half;
        return static_cast<std::uint16_t>(sign | half);
    }
    return static_cast<std::uint16_t>(sign);  // underflow -> signed zero
}

inline float half_to_float(std::uint16_t h) noexcept {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    const std::uint32_t exp = (h >> 10) & 0x1Fu;
    std::uint32_t mant = h & 0x03FFu;
    std::uint32_t x;
    if (exp == 0) {
        if (mant == 0) {
            x = sign;
        } else {  // subnormal: renormalize
            int e = -1;
            std::uint32_t m = mant;
            do {
                ++e;
                m <<= 1;
            } while ((m & 0x0400u) == 0);
            x = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23)
                | ((m & 0x03FFu) << 13);
        }
    } else if (exp == 31) {
        x = sign | 0x7F800000u | (mant << 13);
    } else {
        x = sign | ((exp - 15 + 127) << 23) | (mant << 13);
    }
    float f;
    std::memcpy(&f, &x, 4);
    return f;
}

// Snaps a value onto the binary16 grid. Parameter updates go through this so
// that "stored at 16-bit precision" holds at every step, not just at save.
inline double half_round(double v) noexcept {
    return static_cast<double>(half_to_float(float_to_half(static_cast<float>(v))));
}

}  // namespace minadapt
