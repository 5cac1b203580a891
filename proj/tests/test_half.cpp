// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdint>

#include <gtest/gtest.h>

#include "skvq/half.hpp"

namespace f16 = skvq::f16;

TEST(Half, GoldenValues) {
    EXPECT_EQ(f16::decode(0x3C00), 1.0f);
    EXPECT_EQ(f16::decode(0x0000), 0.0f);
    EXPECT_EQ(f16::decode(0x7BFF), 65504.0f);
    EXPECT_EQ(f16::decode(0x0001), 0x1p-24f);
    EXPECT_EQ(f16::decode(0x0400), 0x1p-14f);
    EXPECT_EQ(f16::decode(0xBC00), -1.0f);
    EXPECT_TRUE(std::isinf(f16::decode(0x7C00)));
    EXPECT_TRUE(std::isnan(f16::decode(0x7E00)));

    EXPECT_EQ(f16::encode(1.0f), 0x3C00);
    EXPECT_EQ(f16::encode(65504.0f), 0x7BFF);
    EXPECT_EQ(f16::encode(-1.0f), 0xBC00);
    EXPECT_EQ(f16::encode(0.0f), 0x0000);
}

TEST(Half, ExhaustiveRoundTrip) {
    for (int c = 0; c < 0x7C00; ++c) {
        const auto code = static_cast<std::uint16_t>(c);
        EXPECT_EQ(f16::encode(f16::decode(code)), code) << "code " << c;
        const auto neg = static_cast<std::uint16_t>(code | 0x8000);
        if (c != 0) {
            EXPECT_EQ(f16::encode(f16::decode(neg)), neg) << "code " << c;
        }
    }
}

TEST(Half, MonotoneDecode) {
    for (int c = 0; c + 1 <= 0x7C00; ++c) {
        EXPECT_LT(f16::decode(static_cast<std::uint16_t>(c)),
                  f16::decode(static_cast<std::uint16_t>(c + 1)));
    }
}

TEST(Half, OverflowAndNan) {
    EXPECT_EQ(f16::encode(65520.0f), 0x7C00);
    EXPECT_EQ(f16::encode(1e9f), 0x7C00);
    EXPECT_EQ(f16::encode(65504.01f), 0x7BFF);
    EXPECT_EQ(f16::encode(std::numeric_limits<float>::infinity()), 0x7C00);
    EXPECT_EQ(f16::encode(std::nanf("")), 0x7E00);
    EXPECT_EQ(f16::encode_floor(1e9f), 0x7BFF);
    EXPECT_EQ(f16::encode_ceil(65504.01f), 0x7C00);
}

TEST(Half, RoundToNearestEvenTies) {
    for (std::uint16_t c : {std::uint16_t{0x3C00}, std::uint16_t{0x4100}, std::uint16_t{0x0801}}) {
        const double lo = f16::decode(c);
        const double hi = f16::decode(static_cast<std::uint16_t>(c + 1));
        const float mid = static_cast<float>((lo + hi) / 2.0);
        const std::uint16_t got = f16::encode(mid);
        const std::uint16_t even = (c % 2 == 0) ? c : static_cast<std::uint16_t>(c + 1);
        EXPECT_EQ(got, even) << "tie between " << c << " and " << c + 1;
    }
}

TEST(Half, DirectedRounding) {
    std::uint64_t state = 0x243F6A8885A308D3ull;
    for (int i = 0; i < 20000; ++i) {
        state = state * 6364136223846793005ull + 1442695040888963407ull;
        const double u = static_cast<double>(state >> 11) * 0x1p-53;
        const float x = static_cast<float>((u - 0.5) * std::ldexp(1.0, (i % 40) - 20));
        const float down = f16::decode(f16::encode_floor(x));
        const float up = f16::decode(f16::encode_ceil(x));
        EXPECT_LE(down, x);
        EXPECT_GE(up, x);
        const float rne = f16::decode(f16::encode(x));
        EXPECT_TRUE(rne == down || rne == up);
    }
}

TEST(Half, DirectedExactValuesFix) {
    for (std::uint16_t c : {std::uint16_t{0x3C00}, std::uint16_t{0x0001}, std::uint16_t{0x7BFF}}) {
        const float v = f16::decode(c);
        EXPECT_EQ(f16::encode_floor(v), c);
        EXPECT_EQ(f16::encode_ceil(v), c);
        EXPECT_EQ(f16::encode_floor(-v), static_cast<std::uint16_t>(c | 0x8000));
        EXPECT_EQ(f16::encode_ceil(-v), static_cast<std::uint16_t>(c | 0x8000));
    }
}
