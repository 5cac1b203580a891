// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Software IEEE binary16 codec (1/5/10, bias 15), used to store group
// quantization parameters in the FP16 format. Same rounding mode set as the
// E4M3 codec so the two formats are interchangeable behind GroupParams.

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

namespace skvq {
namespace f16 {

inline float decode(std::uint16_t code) {
    const int sign = (code >> 15) & 1;
    const int exp = (code >> 10) & 0x1F;
    const int man = code & 0x3FF;
    double v;
    if (exp == 31) {
        if (man != 0) return std::numeric_limits<float>::quiet_NaN();
        v = std::numeric_limits<double>::infinity();
    } else if (exp == 0) {
        v = man * 0x1p-24;
    } else {
        v = (1024 + man) * std::ldexp(1.0, exp - 25);
    }
    return static_cast<float>(sign ? -v : v);
}

namespace detail {

inline long round_half_even(double x) {
    const double f = std::floor(x);
    const double d = x - f;
    long n = static_cast<long>(f);
    if (d > 0.5) return n + 1;
    if (d < 0.5) return n;
    return (n % 2 == 0) ? n : n + 1;
}

enum class Round { nearest, down, up };

inline std::uint16_t encode_mag(double a, Round mode) {
    constexpr double kMax = 65504.0;
    if (std::isinf(a) || a > kMax) {
        // nearest: values past the overflow midpoint go to inf; directed
        // modes saturate downward / overflow upward
        if (mode == Round::down) return 0x7BFF;                    // 65504
        if (mode == Round::up || a >= 65520.0 || std::isinf(a)) return 0x7C00; // inf
        return 0x7BFF;
    }
    if (a <= 0.0) return 0;
    if (a < 0x1p-14) { // subnormal band
        const double t = a * 0x1p24;
        long q = 0;
        switch (mode) {
            case Round::nearest: q = round_half_even(t); break;
            case Round::down: q = static_cast<long>(std::floor(t)); break;
            case Round::up: q = static_cast<long>(std::ceil(t)); break;
        }
        if (q <= 0) return 0;
        if (q >= 1024) return 0x0400;
        return static_cast<std::uint16_t>(q);
    }
    int e = static_cast<int>(std::floor(std::log2(a)));
    if (std::ldexp(1.0, e) > a) --e;
    if (std::ldexp(1.0, e + 1) <= a) ++e;
    const double t = a * std::ldexp(1.0, 10 - e); // in [1024, 2048)
    long q = 0;
    switch (mode) {
        case Round::nearest: q = round_half_even(t); break;
        case Round::down: q = static_cast<long>(std::floor(t)); break;
        case Round::up: q = static_cast<long>(std::ceil(t)); break;
    }
    if (q == 2048) {
        ++e;
        q = 1024;
    }
    if (e > 15) return (mode == Round::down) ? std::uint16_t{0x7BFF} : std::uint16_t{0x7C00};
    return static_cast<std::uint16_t>(((e + 15) << 10) | (q - 1024));
}

} // namespace detail

inline std::uint16_t encode(float x) {
    if (std::isnan(x)) return 0x7E00;
    const std::uint16_t sign = std::signbit(x) ? 0x8000 : 0x0000;
    return sign | detail::encode_mag(std::fabs(static_cast<double>(x)), detail::Round::nearest);
}

inline std::uint16_t encode_floor(float x) {
    if (std::isnan(x)) return 0x7E00;
    const double a = static_cast<double>(x);
    if (a >= 0.0) return detail::encode_mag(a, detail::Round::down);
    return 0x8000 | detail::encode_mag(-a, detail::Round::up);
}

inline std::uint16_t encode_ceil(float x) {
    if (std::isnan(x)) return 0x7E00;
    const double a = static_cast<double>(x);
    if (a >= 0.0) return detail::encode_mag(a, detail::Round::up);
    return 0x8000 | detail::encode_mag(-a, detail::Round::down);
}

} // namespace f16
} // namespace skvq
