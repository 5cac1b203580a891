// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Interchangeable per-row cache quantizers. The sliding cache calls one of
// these whenever a token row leaves the full-precision window, so baselines
// (plain RTN, symmetric RTN, smoothing) and the grouped clipped quantizer
// differ only in the strategy object plugged in. A 16-bit width is the
// lossless passthrough for every strategy.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "skvq/quant.hpp"
#include "skvq/reorder.hpp"

namespace skvq {

enum class StrategyKind : std::uint8_t {
    group_clip = 0,
    rtn = 1,
    rtn_sym = 2,
    smooth = 3,
    lossless = 4,
};

inline const char* strategy_name(StrategyKind k) {
    switch (k) {
        case StrategyKind::group_clip: return "skvq";
        case StrategyKind::rtn: return "rtn";
        case StrategyKind::rtn_sym: return "rtn-sym";
        case StrategyKind::smooth: return "smooth";
        case StrategyKind::lossless: return "fp16";
    }
    return "?";
}

class QuantStrategy {
public:
    virtual ~QuantStrategy() = default;
    virtual StrategyKind kind() const = 0;
    virtual QuantizedBlock encode_row(std::span<const float> row) const = 0;
    virtual std::vector<float> decode_row(const QuantizedBlock& block) const = 0;
    // Declared storage cost per element including parameter overhead.
    virtual double declared_bits() const = 0;
    // Exact stored bits for one encoded row, for measured accounting.
    virtual std::size_t block_bits(const QuantizedBlock& block) const = 0;
    virtual int channels() const = 0;
    // Refill the decoded h/z floats from the raw parameter codes after a
    // block comes back from a snapshot.
    virtual void rehydrate(QuantizedBlock&) const {}

    std::string name() const { return strategy_name(kind()); }
};

// Asymmetric grouped quantization with per-group clipping scales. With
// identity bounds and all-ones alphas this is plain asymmetric RTN.
class GroupClipStrategy : public QuantStrategy {
public:
    GroupClipStrategy(QuantSpec spec, std::vector<int> bounds, std::vector<float> alphas,
                      StrategyKind kind = StrategyKind::group_clip)
        : spec_(spec), bounds_(std::move(bounds)), alphas_(std::move(alphas)), kind_(kind) {
        validate_bounds(bounds_, static_cast<std::size_t>(bounds_.back()));
        SKVQ_REQUIRE(alphas_.size() == bounds_.size() - 1, "GroupClipStrategy: alpha count mismatch");
        for (float a : alphas_)
            SKVQ_REQUIRE(a > 0.0f && a <= 1.0f, "GroupClipStrategy: alpha outside (0,1]");
    }

    StrategyKind kind() const override { return kind_; }
    int channels() const override { return bounds_.back(); }

    QuantizedBlock encode_row(std::span<const float> row) const override {
        return quantize_row(row, bounds_, alphas_, spec_);
    }

    std::vector<float> decode_row(const QuantizedBlock& block) const override {
        return dequantize_row(block, bounds_, spec_);
    }

    double declared_bits() const override { return average_bits(spec_); }

    std::size_t block_bits(const QuantizedBlock& block) const override {
        return block.packed.size() * 8 + block.params.size() * 2 * param_bits(spec_.param_format);
    }

    void rehydrate(QuantizedBlock& b) const override {
        for (auto& p : b.params) {
            p.h = detail::param_decode(p.h_code, spec_.param_format);
            p.z = detail::param_decode(p.z_code, spec_.param_format);
        }
    }

    const QuantSpec& spec() const { return spec_; }
    const std::vector<int>& bounds() const { return bounds_; }
    const std::vector<float>& alphas() const { return alphas_; }

private:
    QuantSpec spec_;
    std::vector<int> bounds_;
    std::vector<float> alphas_;
    StrategyKind kind_;
};

// Symmetric RTN: zero point fixed at 0, h = max|x| / half_levels, signed
// codes stored with a +half_levels offset. Only the scale is stored, so the
// parameter overhead is half the asymmetric one.
class SymmetricRtnStrategy : public QuantStrategy {
public:
    SymmetricRtnStrategy(QuantSpec spec, int channels) : spec_(spec), channels_(channels) {
        SKVQ_REQUIRE(channels_ >= 1, "SymmetricRtnStrategy: no channels");
        SKVQ_REQUIRE(spec.bits != CodeWidth::b1, "SymmetricRtnStrategy: 1-bit not supported");
    }

    StrategyKind kind() const override { return StrategyKind::rtn_sym; }
    int channels() const override { return channels_; }

    QuantizedBlock encode_row(std::span<const float> row) const override {
        SKVQ_REQUIRE(static_cast<int>(row.size()) == channels_, "encode_row: channel mismatch");
        const int offset = half_levels();
        QuantizedBlock block;
        std::vector<std::uint8_t> codes(row.size());
        for (int g0 = 0; g0 < channels_; g0 += spec_.group_size) {
            const int g1 = std::min(channels_, g0 + spec_.group_size);
            float amax = 0.0f;
            for (int i = g0; i < g1; ++i) {
                SKVQ_REQUIRE(std::isfinite(row[i]), "encode_row: non-finite input");
                amax = std::max(amax, std::fabs(row[i]));
            }
            double h_ideal = static_cast<double>(amax) / offset;
            if (!(h_ideal > 0.0)) h_ideal = 0x1p-24;
            GroupParams p;
            p.h_code = spec_.param_format == ParamFormat::fp16
                           ? f16::encode(static_cast<float>(h_ideal))
                           : std::uint16_t{fp8::encode(static_cast<float>(h_ideal))};
            p.h = detail::param_decode(p.h_code, spec_.param_format);
            if (p.h <= 0.0f) {
                p.h_code = detail::param_encode_ceil(static_cast<float>(h_ideal), spec_.param_format);
                p.h = detail::param_decode(p.h_code, spec_.param_format);
            }
            p.z = 0.0f;
            p.z_code = 0;
            block.params.push_back(p);
            for (int i = g0; i < g1; ++i) {
                long q = std::lround(static_cast<double>(row[i]) / p.h);
                if (q < -offset) q = -offset;
                if (q > offset) q = offset;
                codes[i] = static_cast<std::uint8_t>(q + offset);
            }
        }
        block.packed = pack_codes(spec_.bits, codes);
        return block;
    }

    std::vector<float> decode_row(const QuantizedBlock& block) const override {
        const auto codes = unpack_codes(spec_.bits, block.packed, static_cast<std::size_t>(channels_));
        const int offset = half_levels();
        std::vector<float> out(codes.size());
        std::size_t g = 0;
        for (int g0 = 0; g0 < channels_; g0 += spec_.group_size, ++g) {
            const int g1 = std::min(channels_, g0 + spec_.group_size);
            SKVQ_REQUIRE(g < block.params.size(), "decode_row: missing group params");
            const double h = block.params[g].h;
            for (int i = g0; i < g1; ++i)
                out[i] = static_cast<float>(h * (static_cast<int>(codes[i]) - offset));
        }
        return out;
    }

    double declared_bits() const override {
        return code_bits(spec_.bits) + 1.0 * param_bits(spec_.param_format) / spec_.group_size;
    }

    std::size_t block_bits(const QuantizedBlock& block) const override {
        return block.packed.size() * 8 + block.params.size() * param_bits(spec_.param_format);
    }

    void rehydrate(QuantizedBlock& b) const override {
        for (auto& p : b.params) {
            p.h = detail::param_decode(p.h_code, spec_.param_format);
            p.z = detail::param_decode(p.z_code, spec_.param_format);
        }
    }

    const QuantSpec& spec() const { return spec_; }

private:
    int half_levels() const {
        if (spec_.bits == CodeWidth::ternary) return 1;
        const int n = width_bits(spec_.bits);
        return n >= 2 ? (1 << (n - 1)) - 1 : 1;
    }

    QuantSpec spec_;
    int channels_;
};

// Per-channel smoothing: divide by a positive factor before asymmetric RTN
// and multiply back after dequantization.
class SmoothStrategy : public QuantStrategy {
public:
    SmoothStrategy(QuantSpec spec, std::vector<float> factors)
        : inner_(spec, identity_entry(static_cast<int>(factors.size()), spec.group_size).bounds,
                 std::vector<float>((factors.size() + spec.group_size - 1) / spec.group_size, 1.0f),
                 StrategyKind::smooth),
          factors_(std::move(factors)) {
        for (float f : factors_) SKVQ_REQUIRE(f > 0.0f && std::isfinite(f), "SmoothStrategy: bad factor");
    }

    StrategyKind kind() const override { return StrategyKind::smooth; }
    int channels() const override { return static_cast<int>(factors_.size()); }

    QuantizedBlock encode_row(std::span<const float> row) const override {
        SKVQ_REQUIRE(row.size() == factors_.size(), "encode_row: channel mismatch");
        std::vector<float> scaled(row.size());
        for (std::size_t i = 0; i < row.size(); ++i) scaled[i] = row[i] / factors_[i];
        return inner_.encode_row(scaled);
    }

    std::vector<float> decode_row(const QuantizedBlock& block) const override {
        std::vector<float> out = inner_.decode_row(block);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factors_[i];
        return out;
    }

    double declared_bits() const override { return inner_.declared_bits(); }
    std::size_t block_bits(const QuantizedBlock& block) const override {
        return inner_.block_bits(block);
    }
    void rehydrate(QuantizedBlock& b) const override { inner_.rehydrate(b); }

    const std::vector<float>& factors() const { return factors_; }

private:
    GroupClipStrategy inner_;
    std::vector<float> factors_;
};

// Full-precision passthrough. Rows are kept exactly; the declared cost is 16
// bits per element, the cache's accounting convention for fp tokens.
class LosslessStrategy : public QuantStrategy {
public:
    explicit LosslessStrategy(int channels) : channels_(channels) {
        SKVQ_REQUIRE(channels_ >= 1, "LosslessStrategy: no channels");
    }

    StrategyKind kind() const override { return StrategyKind::lossless; }
    int channels() const override { return channels_; }

    QuantizedBlock encode_row(std::span<const float> row) const override {
        SKVQ_REQUIRE(static_cast<int>(row.size()) == channels_, "encode_row: channel mismatch");
        QuantizedBlock block;
        block.packed.resize(row.size() * 4);
        for (std::size_t i = 0; i < row.size(); ++i) {
            const auto bits = std::bit_cast<std::uint32_t>(row[i]);
            for (int b = 0; b < 4; ++b)
                block.packed[i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
        }
        return block;
    }

    std::vector<float> decode_row(const QuantizedBlock& block) const override {
        SKVQ_REQUIRE(block.packed.size() == static_cast<std::size_t>(channels_) * 4,
                     "decode_row: byte count mismatch");
        std::vector<float> out(channels_);
        for (int i = 0; i < channels_; ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b)
                bits |= static_cast<std::uint32_t>(block.packed[i * 4 + b]) << (8 * b);
            out[i] = std::bit_cast<float>(bits);
        }
        return out;
    }

    double declared_bits() const override { return 16.0; }
    std::size_t block_bits(const QuantizedBlock&) const override {
        return static_cast<std::size_t>(channels_) * 16;
    }

private:
    int channels_;
};

} // namespace skvq
