// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Group-wise asymmetric quantization with a clipping scale alpha in (0,1].
// Codes follow q = clamp(round((x - z)/h), 0, qmax) with z = alpha*min and
// h = alpha*(max-min)/qmax, except that z and h are stored in the configured
// parameter format and the decoded values drive both quantize and dequantize.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "skvq/bitpack.hpp"
#include "skvq/common.hpp"
#include "skvq/float8.hpp"
#include "skvq/half.hpp"

namespace skvq {

enum class ParamFormat : std::uint8_t { fp16 = 0, fp8 = 1 };

inline int param_bits(ParamFormat f) { return f == ParamFormat::fp16 ? 16 : 8; }

struct QuantSpec {
    CodeWidth bits = CodeWidth::b2;
    int group_size = 32;
    ParamFormat param_format = ParamFormat::fp16;

    bool operator==(const QuantSpec&) const = default;
};

inline void validate(const QuantSpec& spec) {
    SKVQ_REQUIRE(spec.group_size >= 1, "QuantSpec: group_size must be >= 1");
}

inline double average_bits(const QuantSpec& spec) {
    validate(spec);
    return code_bits(spec.bits) + 2.0 * param_bits(spec.param_format) / spec.group_size;
}

// Decoded h/z are what quantize and dequantize use; the raw codes are what
// the snapshot serializes. FP8 codes occupy the low byte.
struct GroupParams {
    float h = 0.0f;
    float z = 0.0f;
    std::uint16_t h_code = 0;
    std::uint16_t z_code = 0;

    bool operator==(const GroupParams&) const = default;
};

namespace detail {

inline std::uint16_t param_encode_floor(float x, ParamFormat f) {
    return f == ParamFormat::fp16 ? f16::encode_floor(x) : std::uint16_t{fp8::encode_floor(x)};
}

inline std::uint16_t param_encode_ceil(float x, ParamFormat f) {
    return f == ParamFormat::fp16 ? f16::encode_ceil(x) : std::uint16_t{fp8::encode_ceil(x)};
}

inline float param_decode(std::uint16_t code, ParamFormat f) {
    return f == ParamFormat::fp16 ? f16::decode(code)
                                  : fp8::decode(static_cast<std::uint8_t>(code));
}

// z rounds toward -inf and h rounds up from the stored z, so the stored grid
// always covers [z_ideal, top_ideal] and the half-step error bound holds
// against the stored scale for either parameter format.
inline GroupParams store_params(double z_ideal, double top_ideal, int qmax, ParamFormat f) {
    GroupParams p;
    p.z_code = param_encode_floor(static_cast<float>(z_ideal), f);
    p.z = param_decode(p.z_code, f);
    double h_needed = (top_ideal - static_cast<double>(p.z)) / qmax;
    if (!(h_needed > 0.0)) h_needed = std::max(std::fabs(z_ideal), 1.0) * 0x1p-24;
    p.h_code = param_encode_ceil(static_cast<float>(h_needed), f);
    p.h = param_decode(p.h_code, f);
    return p;
}

} // namespace detail

struct GroupQuantResult {
    std::vector<std::uint8_t> codes;
    GroupParams params;
};

inline GroupQuantResult quantize_group(std::span<const float> values, float alpha,
                                       const QuantSpec& spec) {
    validate(spec);
    SKVQ_REQUIRE(!values.empty(), "quantize_group: empty input");
    SKVQ_REQUIRE(alpha > 0.0f && alpha <= 1.0f, "quantize_group: alpha outside (0,1]");
    float lo = values[0];
    float hi = values[0];
    for (float v : values) {
        SKVQ_REQUIRE(std::isfinite(v), "quantize_group: non-finite input");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const int qmax = code_qmax(spec.bits);
    GroupQuantResult r;
    if (hi == lo) {
        const double tiny = std::max(std::fabs(static_cast<double>(lo)), 1.0) * 0x1p-24;
        r.params.z_code = detail::param_encode_floor(lo, spec.param_format);
        r.params.z = detail::param_decode(r.params.z_code, spec.param_format);
        r.params.h_code = detail::param_encode_ceil(static_cast<float>(tiny), spec.param_format);
        r.params.h = detail::param_decode(r.params.h_code, spec.param_format);
        r.codes.assign(values.size(), 0);
        return r;
    }
    const double a = static_cast<double>(alpha);
    r.params = detail::store_params(a * lo, a * hi, qmax, spec.param_format);
    r.codes.resize(values.size());
    const double z = r.params.z;
    const double inv_h = 1.0 / r.params.h;
    for (std::size_t i = 0; i < values.size(); ++i) {
        long q = std::lround((static_cast<double>(values[i]) - z) * inv_h);
        if (q < 0) q = 0;
        if (q > qmax) q = qmax;
        r.codes[i] = static_cast<std::uint8_t>(q);
    }
    return r;
}

inline std::vector<float> dequantize_group(std::span<const std::uint8_t> codes,
                                           const GroupParams& params, const QuantSpec& spec) {
    validate(spec);
    const int qmax = code_qmax(spec.bits);
    std::vector<float> out(codes.size());
    const double h = params.h;
    const double z = params.z;
    for (std::size_t i = 0; i < codes.size(); ++i) {
        SKVQ_REQUIRE(codes[i] <= qmax, "dequantize_group: code out of range");
        out[i] = static_cast<float>(z + h * codes[i]);
    }
    return out;
}

// One token row of one cache: all groups packed into a single contiguous
// bitstream in group order, one parameter pair per group.
struct QuantizedBlock {
    std::vector<std::uint8_t> packed;
    std::vector<GroupParams> params;
    bool retained_fp = false;
};

// bounds holds group start offsets plus a trailing end offset, so group g
// covers [bounds[g], bounds[g+1]).
inline void validate_bounds(const std::vector<int>& bounds, std::size_t row_len) {
    SKVQ_REQUIRE(bounds.size() >= 2, "group bounds: need at least one group");
    SKVQ_REQUIRE(bounds.front() == 0, "group bounds: must start at 0");
    SKVQ_REQUIRE(bounds.back() == static_cast<int>(row_len), "group bounds: must end at row length");
    for (std::size_t g = 0; g + 1 < bounds.size(); ++g)
        SKVQ_REQUIRE(bounds[g] < bounds[g + 1], "group bounds: must be strictly increasing");
}

inline QuantizedBlock quantize_row(std::span<const float> row, const std::vector<int>& bounds,
                                   const std::vector<float>& alphas, const QuantSpec& spec) {
    validate_bounds(bounds, row.size());
    const std::size_t n_groups = bounds.size() - 1;
    SKVQ_REQUIRE(alphas.size() == n_groups, "quantize_row: alpha count mismatch");
    QuantizedBlock block;
    block.params.reserve(n_groups);
    std::vector<std::uint8_t> all_codes;
    all_codes.reserve(row.size());
    for (std::size_t g = 0; g < n_groups; ++g) {
        auto res = quantize_group(row.subspan(bounds[g], bounds[g + 1] - bounds[g]), alphas[g], spec);
        block.params.push_back(res.params);
        all_codes.insert(all_codes.end(), res.codes.begin(), res.codes.end());
    }
    block.packed = pack_codes(spec.bits, all_codes);
    return block;
}

inline std::vector<float> dequantize_row(const QuantizedBlock& block, const std::vector<int>& bounds,
                                         const QuantSpec& spec) {
    const std::size_t row_len = static_cast<std::size_t>(bounds.back());
    validate_bounds(bounds, row_len);
    const std::size_t n_groups = bounds.size() - 1;
    SKVQ_REQUIRE(block.params.size() == n_groups, "dequantize_row: param count mismatch");
    const std::vector<std::uint8_t> codes = unpack_codes(spec.bits, block.packed, row_len);
    std::vector<float> out(row_len);
    for (std::size_t g = 0; g < n_groups; ++g) {
        const std::size_t len = bounds[g + 1] - bounds[g];
        auto piece = dequantize_group(
            std::span<const std::uint8_t>(codes.data() + bounds[g], len), block.params[g], spec);
        std::copy(piece.begin(), piece.end(), out.begin() + bounds[g]);
    }
    return out;
}

} // namespace skvq
