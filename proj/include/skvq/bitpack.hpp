// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Dense code packing for quantized groups. Binary widths (1/2/3/4/8 bits)
// use an LSB-first bitstream; the ternary width packs 5 base-3 digits per
// byte, also LSB-first, for 1.6 bits per element.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "skvq/common.hpp"

namespace skvq {

enum class CodeWidth : std::uint8_t {
    b1 = 1,
    b2 = 2,
    b3 = 3,
    b4 = 4,
    b8 = 8,
    ternary = 30,
};

inline bool is_binary_width(CodeWidth w) { return w != CodeWidth::ternary; }

inline int width_bits(CodeWidth w) {
    SKVQ_REQUIRE(is_binary_width(w), "width_bits: ternary has no integer bit width");
    return static_cast<int>(w);
}

// Declared storage cost per element, before group parameter overhead.
inline double code_bits(CodeWidth w) {
    return is_binary_width(w) ? static_cast<double>(width_bits(w)) : 1.6;
}

// Largest valid code for the width (quantization levels are [0, qmax]).
inline std::uint8_t code_qmax(CodeWidth w) {
    return is_binary_width(w) ? static_cast<std::uint8_t>((1u << width_bits(w)) - 1u) : std::uint8_t{2};
}

inline std::size_t packed_bytes(CodeWidth w, std::size_t count) {
    if (w == CodeWidth::ternary) return (count + 4) / 5;
    return (count * static_cast<std::size_t>(width_bits(w)) + 7) / 8;
}

inline std::vector<std::uint8_t> pack_codes(CodeWidth w, const std::vector<std::uint8_t>& codes) {
    const std::uint8_t qmax = code_qmax(w);
    for (std::uint8_t c : codes) SKVQ_REQUIRE(c <= qmax, "pack_codes: code out of range");
    std::vector<std::uint8_t> out(packed_bytes(w, codes.size()), 0);
    if (w == CodeWidth::ternary) {
        for (std::size_t i = 0; i < codes.size(); ++i) {
            static const std::uint8_t kPow3[5] = {1, 3, 9, 27, 81};
            out[i / 5] = static_cast<std::uint8_t>(out[i / 5] + codes[i] * kPow3[i % 5]);
        }
        return out;
    }
    const int bits = width_bits(w);
    for (std::size_t i = 0; i < codes.size(); ++i) {
        const std::size_t pos = i * static_cast<std::size_t>(bits);
        std::size_t byte = pos / 8;
        int shift = static_cast<int>(pos % 8);
        std::uint16_t val = static_cast<std::uint16_t>(codes[i]) << shift;
        out[byte] |= static_cast<std::uint8_t>(val & 0xFF);
        if (shift + bits > 8) out[byte + 1] |= static_cast<std::uint8_t>(val >> 8);
    }
    return out;
}

inline std::vector<std::uint8_t> unpack_codes(CodeWidth w, const std::vector<std::uint8_t>& bytes,
                                              std::size_t count) {
    SKVQ_REQUIRE(bytes.size() == packed_bytes(w, count), "unpack_codes: size mismatch");
    std::vector<std::uint8_t> codes(count);
    if (w == CodeWidth::ternary) {
        for (std::size_t i = 0; i < count; ++i) {
            std::uint8_t v = bytes[i / 5];
            for (std::size_t k = 0; k < i % 5; ++k) v /= 3;
            codes[i] = static_cast<std::uint8_t>(v % 3);
        }
        return codes;
    }
    const int bits = width_bits(w);
    const std::uint16_t mask = static_cast<std::uint16_t>((1u << bits) - 1u);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t pos = i * static_cast<std::size_t>(bits);
        std::size_t byte = pos / 8;
        int shift = static_cast<int>(pos % 8);
        std::uint16_t val = bytes[byte];
        if (shift + bits > 8) val |= static_cast<std::uint16_t>(bytes[byte + 1]) << 8;
        codes[i] = static_cast<std::uint8_t>((val >> shift) & mask);
    }
    return codes;
}

} // namespace skvq
