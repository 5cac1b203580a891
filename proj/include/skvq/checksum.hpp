// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// CRC-32 (IEEE 802.3, reflected, polynomial 0xEDB88320) over byte spans.
// Check value: crc32 of "123456789" is 0xCBF43926.

#include <array>
#include <cstddef>
#include <cstdint>

namespace skvq {

namespace detail {

constexpr std::array<std::uint32_t, 256> make_crc32_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t n = 0; n < 256; ++n) {
        std::uint32_t c = n;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? (0xEDB88320u ^ (c >> 1)) : (c >> 1);
        table[n] = c;
    }
    return table;
}

inline constexpr std::array<std::uint32_t, 256> kCrc32Table = make_crc32_table();

} // namespace detail

class Crc32 {
public:
    void update(const void* data, std::size_t len) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        for (std::size_t i = 0; i < len; ++i)
            state_ = detail::kCrc32Table[(state_ ^ p[i]) & 0xFF] ^ (state_ >> 8);
    }

    std::uint32_t value() const { return state_ ^ 0xFFFFFFFFu; }

private:
    std::uint32_t state_ = 0xFFFFFFFFu;
};

inline std::uint32_t crc32(const void* data, std::size_t len) {
    Crc32 c;
    c.update(data, len);
    return c.value();
}

} // namespace skvq
