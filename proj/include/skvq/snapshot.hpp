// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Engine cache snapshot: every layer's sliding cache in one file, so a
// decode session can be suspended and resumed. The trailing CRC32 is
// verified before any field is parsed, so a truncated or corrupted file
// fails with a checksum error instead of a malformed read.
//
// SKVQ file layout (little-endian):
//   magic "SKVQ", version u16
//   n_layers u32, window u32, k_channels u32, v_channels u32
//   per layer: the cache stream written by SlidingKvCache::serialize
//   trailing CRC32 over everything before the checksum field

#include <cstdint>
#include <string>
#include <vector>

#include "skvq/attention.hpp"
#include "skvq/io.hpp"

namespace skvq {

inline std::vector<std::uint8_t> serialize_snapshot(const Engine& engine) {
    const int n_layers = engine.model().config.n_layers;
    ByteWriter w;
    w.bytes("SKVQ", 4);
    w.u16(1);
    w.u32(static_cast<std::uint32_t>(n_layers));
    w.u32(static_cast<std::uint32_t>(engine.window()));
    w.u32(static_cast<std::uint32_t>(engine.cache(0).k_channels()));
    w.u32(static_cast<std::uint32_t>(engine.cache(0).v_channels()));
    for (int l = 0; l < n_layers; ++l) engine.cache(l).serialize(w);
    w.u32(w.crc_from(0));
    return w.buffer();
}

inline void restore_snapshot(Engine& engine, std::vector<std::uint8_t> data) {
    SKVQ_REQUIRE(data.size() > 8, "snapshot: too short");
    ByteReader r(std::move(data));
    {
        const auto& buf = r.buffer();
        std::uint32_t expect = 0;
        for (int b = 0; b < 4; ++b)
            expect |= static_cast<std::uint32_t>(buf[buf.size() - 4 + b]) << (8 * b);
        SKVQ_REQUIRE(expect == r.crc_range(0, buf.size() - 4), "snapshot: checksum mismatch");
    }
    const auto magic = r.bytes(4);
    SKVQ_REQUIRE(std::string(magic.begin(), magic.end()) == "SKVQ", "snapshot: bad magic");
    SKVQ_REQUIRE(r.u16() == 1, "snapshot: unsupported version");
    const int n_layers = engine.model().config.n_layers;
    SKVQ_REQUIRE(r.u32() == static_cast<std::uint32_t>(n_layers),
                 "snapshot: layer count mismatch");
    SKVQ_REQUIRE(r.u32() == static_cast<std::uint32_t>(engine.window()),
                 "snapshot: window mismatch");
    SKVQ_REQUIRE(r.u32() == static_cast<std::uint32_t>(engine.cache(0).k_channels()),
                 "snapshot: key channel mismatch");
    SKVQ_REQUIRE(r.u32() == static_cast<std::uint32_t>(engine.cache(0).v_channels()),
                 "snapshot: value channel mismatch");
    engine.reset();
    for (int l = 0; l < n_layers; ++l) engine.cache(l).deserialize(r);
    (void)r.u32();
    r.require_end();
}

inline void save_snapshot(const Engine& engine, const std::string& path) {
    ByteWriter w;
    const auto bytes = serialize_snapshot(engine);
    w.bytes(bytes.data(), bytes.size());
    w.write_file(path);
}

inline void load_snapshot(Engine& engine, const std::string& path) {
    restore_snapshot(engine, ByteReader::from_file(path).buffer());
}

} // namespace skvq
