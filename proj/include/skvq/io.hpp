// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Little-endian binary buffer reader/writer used by every on-disk format
// here (model, calibration artifact, cache snapshot). Integers are written
// byte-by-byte so the layout does not depend on host endianness.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "skvq/checksum.hpp"
#include "skvq/common.hpp"

namespace skvq {

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(const void* data, std::size_t len) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        buf_.insert(buf_.end(), p, p + len);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }

    std::size_t size() const { return buf_.size(); }
    const std::vector<std::uint8_t>& buffer() const { return buf_; }

    std::uint32_t crc_from(std::size_t offset) const {
        SKVQ_REQUIRE(offset <= buf_.size(), "crc_from: offset past end");
        return crc32(buf_.data() + offset, buf_.size() - offset);
    }

    void write_file(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        SKVQ_REQUIRE(out.is_open(), "cannot open for writing: " + path);
        out.write(reinterpret_cast<const char*>(buf_.data()),
                  static_cast<std::streamsize>(buf_.size()));
        SKVQ_REQUIRE(out.good(), "write failed: " + path);
    }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::vector<std::uint8_t> data) : buf_(std::move(data)) {}

    static ByteReader from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        SKVQ_REQUIRE(in.is_open(), "cannot open for reading: " + path);
        const std::streamsize len = in.tellg();
        in.seekg(0);
        std::vector<std::uint8_t> data(static_cast<std::size_t>(len));
        in.read(reinterpret_cast<char*>(data.data()), len);
        SKVQ_REQUIRE(in.good(), "read failed: " + path);
        return ByteReader(std::move(data));
    }

    std::uint8_t u8() {
        need(1);
        return buf_[pos_++];
    }
    std::uint16_t u16() { return static_cast<std::uint16_t>(read_le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(read_le(4)); }
    std::uint64_t u64() { return read_le(8); }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::vector<std::uint8_t> bytes(std::size_t len) {
        need(len);
        std::vector<std::uint8_t> out(buf_.begin() + pos_, buf_.begin() + pos_ + len);
        pos_ += len;
        return out;
    }
    std::string str() {
        const std::uint32_t len = u32();
        need(len);
        std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), len);
        pos_ += len;
        return s;
    }

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return buf_.size() - pos_; }
    const std::vector<std::uint8_t>& buffer() const { return buf_; }

    std::uint32_t crc_range(std::size_t offset, std::size_t len) const {
        SKVQ_REQUIRE(offset + len <= buf_.size(), "crc_range: out of bounds");
        return crc32(buf_.data() + offset, len);
    }

    void require_end() const { SKVQ_REQUIRE(pos_ == buf_.size(), "trailing bytes after payload"); }

private:
    void need(std::size_t n) const {
        SKVQ_REQUIRE(buf_.size() - pos_ >= n, "unexpected end of data");
    }
    std::uint64_t read_le(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

} // namespace skvq
