// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Software E4M3 codec, OCP layout: 1 sign, 4 exponent (bias 7), 3 mantissa.
// No infinities; the only NaN pattern is S.1111.111; max finite is +-448.
// Subnormals are m * 2^-9. Encoding rounds to nearest-even and saturates
// at +-448 (including +-inf inputs).

#include <cmath>
#include <cstdint>
#include <limits>

namespace skvq {
namespace fp8 {

inline constexpr std::uint8_t kNanCode = 0x7F;
inline constexpr std::uint8_t kMaxCode = 0x7E; // 448.0
inline constexpr float kMaxFinite = 448.0f;

inline float decode(std::uint8_t code) {
    const int sign = (code >> 7) & 1;
    const int exp = (code >> 3) & 0xF;
    const int man = code & 7;
    if (exp == 15 && man == 7) return std::numeric_limits<float>::quiet_NaN();
    double v;
    if (exp == 0) {
        v = man * 0x1p-9;
    } else {
        v = (8 + man) * std::ldexp(1.0, exp - 10);
    }
    return static_cast<float>(sign ? -v : v);
}

namespace detail {

// round-to-nearest-even of a value that is exactly representable in double
inline long round_half_even(double x) {
    const double f = std::floor(x);
    const double d = x - f;
    long n = static_cast<long>(f);
    if (d > 0.5) return n + 1;
    if (d < 0.5) return n;
    return (n % 2 == 0) ? n : n + 1;
}

enum class Round { nearest, down, up };

// magnitude encoding of a (code for |x| with the rounding applied to |x|,
// directed modes round the magnitude toward zero / away from zero)
inline std::uint8_t encode_mag(double a, Round mode) {
    if (a >= kMaxFinite) return kMaxCode; // saturate (every mode)
    if (a <= 0.0) return 0;
    if (a < 0x1p-6) { // subnormal band
        const double t = a * 0x1p9;
        long q = 0;
        switch (mode) {
            case Round::nearest: q = round_half_even(t); break;
            case Round::down: q = static_cast<long>(std::floor(t)); break;
            case Round::up: q = static_cast<long>(std::ceil(t)); break;
        }
        if (q <= 0) return 0;
        if (q >= 8) return 0x08; // first normal, 2^-6
        return static_cast<std::uint8_t>(q);
    }
    int e = static_cast<int>(std::floor(std::log2(a)));
    // guard against log2 landing one binade off at boundaries
    if (std::ldexp(1.0, e) > a) --e;
    if (std::ldexp(1.0, e + 1) <= a) ++e;
    const double t = a * std::ldexp(1.0, 3 - e); // in [8, 16)
    long q = 0;
    switch (mode) {
        case Round::nearest: q = round_half_even(t); break;
        case Round::down: q = static_cast<long>(std::floor(t)); break;
        case Round::up: q = static_cast<long>(std::ceil(t)); break;
    }
    if (q == 16) {
        ++e;
        q = 8;
    }
    if (e > 8 || (e == 8 && q - 8 == 7)) return kMaxCode; // would hit the NaN slot
    return static_cast<std::uint8_t>(((e + 7) << 3) | (q - 8));
}

} // namespace detail

inline std::uint8_t encode(float x) {
    if (std::isnan(x)) return kNanCode;
    const std::uint8_t sign = std::signbit(x) ? 0x80 : 0x00;
    return sign | detail::encode_mag(std::fabs(static_cast<double>(x)), detail::Round::nearest);
}

// largest representable value <= x (x finite, |x| <= 448 after saturation)
inline std::uint8_t encode_floor(float x) {
    if (std::isnan(x)) return kNanCode;
    const double a = static_cast<double>(x);
    if (a >= 0.0) return detail::encode_mag(a, detail::Round::down);
    return 0x80 | detail::encode_mag(-a, detail::Round::up);
}

// smallest representable value >= x
inline std::uint8_t encode_ceil(float x) {
    if (std::isnan(x)) return kNanCode;
    const double a = static_cast<double>(x);
    if (a >= 0.0) return detail::encode_mag(a, detail::Round::up);
    return 0x80 | detail::encode_mag(-a, detail::Round::down);
}

} // namespace fp8
} // namespace skvq
