// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Sliding-window quantized KV cache. The newest min(w, total) tokens stay at
// full precision; once a token slides out of that window it is either kept
// full precision by a filter rule (attention sinks) or quantized through the
// plugged-in strategy. `processed` counts tokens already handled, so decode
// steps touch only the tokens that just slid out.

#include <cstdint>
#include <deque>
#include <memory>
#include <vector>

#include "skvq/common.hpp"
#include "skvq/io.hpp"
#include "skvq/mat.hpp"
#include "skvq/strategy.hpp"

namespace skvq {

class FilterRule {
public:
    virtual ~FilterRule() = default;
    virtual const char* name() const = 0;
    // Decide whether the token keeps full precision when it leaves the
    // window. A token is retained if ANY active rule returns true.
    virtual bool retain(long token_index, std::span<const float> k_row,
                        std::span<const float> v_row, long ctx_len) const = 0;
};

class AttentionSinkRule : public FilterRule {
public:
    explicit AttentionSinkRule(long n_sink) : n_sink_(n_sink) {
        SKVQ_REQUIRE(n_sink >= 0, "AttentionSinkRule: negative sink count");
    }

    const char* name() const override { return "attention-sink"; }
    bool retain(long token_index, std::span<const float>, std::span<const float>,
                long) const override {
        return token_index < n_sink_;
    }

    long n_sink() const { return n_sink_; }

private:
    long n_sink_;
};

struct RetainedToken {
    long index = 0;
    std::vector<float> k;
    std::vector<float> v;

    bool operator==(const RetainedToken&) const = default;
};

inline bool operator==(const QuantizedBlock& a, const QuantizedBlock& b) {
    return a.packed == b.packed && a.params == b.params && a.retained_fp == b.retained_fp;
}

class SlidingKvCache {
public:
    SlidingKvCache(int window, const QuantStrategy* k_strat, const QuantStrategy* v_strat)
        : window_(window), k_strat_(k_strat), v_strat_(v_strat) {
        SKVQ_REQUIRE(window >= 0, "SlidingKvCache: negative window");
        SKVQ_REQUIRE(k_strat && v_strat, "SlidingKvCache: missing strategies");
    }

    int window() const { return window_; }
    long total() const { return total_; }
    long processed() const { return processed_; }
    int k_channels() const { return k_strat_->channels(); }
    int v_channels() const { return v_strat_->channels(); }

    void append(const Mat& k_rows, const Mat& v_rows) {
        SKVQ_REQUIRE(k_rows.rows == v_rows.rows, "append: K/V row count mismatch");
        SKVQ_REQUIRE(k_rows.cols == k_channels() && v_rows.cols == v_channels(),
                     "append: channel count mismatch");
        for (int i = 0; i < k_rows.rows; ++i) {
            fp_k_.emplace_back(k_rows.row(i).begin(), k_rows.row(i).end());
            fp_v_.emplace_back(v_rows.row(i).begin(), v_rows.row(i).end());
        }
        total_ += k_rows.rows;
    }

    void advance(const std::vector<const FilterRule*>& filters) {
        while (processed_ < total_ - window_) {
            const long t = processed_;
            std::vector<float>& k = fp_k_.front();
            std::vector<float>& v = fp_v_.front();
            bool keep = false;
            for (const FilterRule* f : filters) {
                if (f && f->retain(t, k, v, total_)) {
                    keep = true;
                    break;
                }
            }
            if (keep) {
                retained_.push_back({t, std::move(k), std::move(v)});
            } else {
                quant_k_.push_back(k_strat_->encode_row(k));
                quant_v_.push_back(v_strat_->encode_row(v));
            }
            fp_k_.pop_front();
            fp_v_.pop_front();
            ++processed_;
        }
    }

    // Full-context rows in token order: dequantized for quantized tokens,
    // bit-exact fp rows for retained and window tokens. Read-only.
    void materialize(Mat& k_out, Mat& v_out) const {
        k_out = Mat(static_cast<int>(total_), k_channels());
        v_out = Mat(static_cast<int>(total_), v_channels());
        std::size_t ret_i = 0;
        std::size_t slot = 0;
        for (long t = 0; t < processed_; ++t) {
            if (ret_i < retained_.size() && retained_[ret_i].index == t) {
                copy_row(k_out, t, retained_[ret_i].k);
                copy_row(v_out, t, retained_[ret_i].v);
                ++ret_i;
                continue;
            }
            copy_row(k_out, t, k_strat_->decode_row(quant_k_[slot]));
            copy_row(v_out, t, v_strat_->decode_row(quant_v_[slot]));
            ++slot;
        }
        for (long t = processed_; t < total_; ++t) {
            copy_row(k_out, t, fp_k_[static_cast<std::size_t>(t - processed_)]);
            copy_row(v_out, t, fp_v_[static_cast<std::size_t>(t - processed_)]);
        }
    }

    long quantized_tokens() const { return static_cast<long>(quant_k_.size()); }
    long retained_tokens() const { return static_cast<long>(retained_.size()); }
    long fp_tokens() const { return total_ - quantized_tokens(); }

    // Exact stored bits under the accounting convention: strategy bytes for
    // quantized tokens, 16 bits per element for fp (window/retained) tokens.
    std::uint64_t stored_bits() const {
        std::uint64_t bits = 0;
        for (const auto& b : quant_k_) bits += k_strat_->block_bits(b);
        for (const auto& b : quant_v_) bits += v_strat_->block_bits(b);
        bits += static_cast<std::uint64_t>(fp_tokens()) * 16u *
                static_cast<std::uint64_t>(k_channels() + v_channels());
        return bits;
    }

    const std::vector<RetainedToken>& retained() const { return retained_; }

    bool state_equal(const SlidingKvCache& other) const {
        return window_ == other.window_ && total_ == other.total_ &&
               processed_ == other.processed_ && quant_k_ == other.quant_k_ &&
               quant_v_ == other.quant_v_ && retained_ == other.retained_ &&
               fp_k_ == other.fp_k_ && fp_v_ == other.fp_v_;
    }

    void serialize(ByteWriter& w) const {
        w.u64(static_cast<std::uint64_t>(total_));
        w.u64(static_cast<std::uint64_t>(processed_));
        w.u32(static_cast<std::uint32_t>(retained_.size()));
        for (const auto& r : retained_) {
            w.u64(static_cast<std::uint64_t>(r.index));
            write_row(w, r.k);
            write_row(w, r.v);
        }
        w.u32(static_cast<std::uint32_t>(quant_k_.size()));
        for (std::size_t i = 0; i < quant_k_.size(); ++i) {
            write_block(w, quant_k_[i]);
            write_block(w, quant_v_[i]);
        }
        w.u32(static_cast<std::uint32_t>(fp_k_.size()));
        for (std::size_t i = 0; i < fp_k_.size(); ++i) {
            write_row(w, fp_k_[i]);
            write_row(w, fp_v_[i]);
        }
    }

    void deserialize(ByteReader& r) {
        total_ = static_cast<long>(r.u64());
        processed_ = static_cast<long>(r.u64());
        retained_.clear();
        quant_k_.clear();
        quant_v_.clear();
        fp_k_.clear();
        fp_v_.clear();
        const std::uint32_t n_ret = r.u32();
        for (std::uint32_t i = 0; i < n_ret; ++i) {
            RetainedToken t;
            t.index = static_cast<long>(r.u64());
            t.k = read_row(r, k_channels());
            t.v = read_row(r, v_channels());
            retained_.push_back(std::move(t));
        }
        const std::uint32_t n_q = r.u32();
        for (std::uint32_t i = 0; i < n_q; ++i) {
            quant_k_.push_back(read_block(r));
            k_strat_->rehydrate(quant_k_.back());
            quant_v_.push_back(read_block(r));
            v_strat_->rehydrate(quant_v_.back());
        }
        const std::uint32_t n_fp = r.u32();
        for (std::uint32_t i = 0; i < n_fp; ++i) {
            fp_k_.push_back(read_row(r, k_channels()));
            fp_v_.push_back(read_row(r, v_channels()));
        }
        SKVQ_REQUIRE(processed_ + static_cast<long>(fp_k_.size()) == total_,
                     "cache snapshot: token counts inconsistent");
        SKVQ_REQUIRE(static_cast<long>(retained_.size() + quant_k_.size()) == processed_,
                     "cache snapshot: processed region inconsistent");
    }

private:
    static void copy_row(Mat& dst, long row, const std::vector<float>& src) {
        SKVQ_REQUIRE(static_cast<int>(src.size()) == dst.cols, "materialize: row width mismatch");
        std::copy(src.begin(), src.end(), dst.row(static_cast<int>(row)).begin());
    }

    static void write_row(ByteWriter& w, const std::vector<float>& row) {
        for (float v : row) w.f32(v);
    }

    static std::vector<float> read_row(ByteReader& r, int n) {
        std::vector<float> row(static_cast<std::size_t>(n));
        for (float& v : row) v = r.f32();
        return row;
    }

    static void write_block(ByteWriter& w, const QuantizedBlock& b) {
        w.u32(static_cast<std::uint32_t>(b.packed.size()));
        w.bytes(b.packed.data(), b.packed.size());
        w.u32(static_cast<std::uint32_t>(b.params.size()));
        for (const auto& p : b.params) {
            w.u16(p.h_code);
            w.u16(p.z_code);
        }
        w.u8(b.retained_fp ? 1 : 0);
    }

    QuantizedBlock read_block(ByteReader& r) const {
        QuantizedBlock b;
        b.packed = r.bytes(r.u32());
        const std::uint32_t n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            GroupParams p;
            p.h_code = r.u16();
            p.z_code = r.u16();
            b.params.push_back(p);
        }
        b.retained_fp = r.u8() != 0;
        return b;
    }

    int window_;
    const QuantStrategy* k_strat_;
    const QuantStrategy* v_strat_;
    long total_ = 0;
    long processed_ = 0;
    std::vector<QuantizedBlock> quant_k_;
    std::vector<QuantizedBlock> quant_v_;
    std::vector<RetainedToken> retained_;
    std::deque<std::vector<float>> fp_k_;
    std::deque<std::vector<float>> fp_v_;
};

} // namespace skvq
