// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Offline clip-scale search. For every layer, cache side, and channel group
// we pick the alpha in a fixed grid that minimizes the squared error of the
// attention-module output on a calibration set, with every token quantized
// (window 0) so the schedule reflects the worst case. Coordinate descent
// runs one pass, K groups first, then V groups with attention weights from
// the chosen K alphas. The grid is scanned from high alpha to low with a
// strict-improvement rule, so ties resolve toward no clipping, and a final
// whole-layer comparison against the all-ones schedule makes non-regression
// unconditional.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "skvq/attention.hpp"
#include "skvq/mat.hpp"
#include "skvq/model.hpp"
#include "skvq/quant.hpp"
#include "skvq/reference.hpp"
#include "skvq/reorder.hpp"
#include "skvq/rng.hpp"

namespace skvq {

struct CalibrationSet {
    std::vector<std::vector<int>> sequences;
};

inline CalibrationSet make_random_calibration(const ModelConfig& cfg, int n_seqs, int seq_len,
                                              std::uint64_t seed) {
    SKVQ_REQUIRE(n_seqs >= 1 && seq_len >= 2, "make_random_calibration: bad shape");
    Rng rng(seed);
    CalibrationSet calib;
    calib.sequences.resize(static_cast<std::size_t>(n_seqs));
    for (auto& seq : calib.sequences) {
        seq.resize(static_cast<std::size_t>(seq_len));
        for (int& t : seq) t = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.vocab)));
    }
    return calib;
}

inline std::vector<float> default_alpha_grid() {
    std::vector<float> grid;
    for (int i = 0; i <= 10; ++i) grid.push_back(static_cast<float>(80 + 2 * i) / 100.0f);
    return grid;
}

struct ClipSchedule {
    QuantSpec spec_k;
    QuantSpec spec_v;
    std::vector<std::vector<float>> k_alphas;
    std::vector<std::vector<float>> v_alphas;
    std::string search_method = "coordinate-descent/k-then-v/single-pass";

    int n_layers() const { return static_cast<int>(k_alphas.size()); }

    bool operator==(const ClipSchedule&) const = default;
};

inline ClipSchedule all_ones_schedule(const ReorderPlan& plan, QuantSpec spec_k, QuantSpec spec_v) {
    ClipSchedule s;
    s.spec_k = spec_k;
    s.spec_v = spec_v;
    for (const auto& e : plan.k_entries) s.k_alphas.emplace_back(e.n_groups(), 1.0f);
    for (const auto& e : plan.v_entries) s.v_alphas.emplace_back(e.n_groups(), 1.0f);
    return s;
}

// Per-layer channel statistics of the unfused model on the calibration set.
struct StatsCapture {
    std::vector<ChannelStats> k_stats;
    std::vector<ChannelStats> v_stats;
};

inline StatsCapture collect_model_stats(const Model& base, const CalibrationSet& calib) {
    SKVQ_REQUIRE(!calib.sequences.empty(), "collect_model_stats: empty calibration set");
    StatsCapture out;
    out.k_stats.resize(static_cast<std::size_t>(base.config.n_layers));
    out.v_stats.resize(static_cast<std::size_t>(base.config.n_layers));
    for (const auto& seq : calib.sequences) {
        ReferenceEngine eng(base);
        eng.enable_capture();
        eng.forward_chunk(seq);
        const auto& caps = eng.captures();
        for (int l = 0; l < base.config.n_layers; ++l) {
            for (const auto& row : caps[l].k) out.k_stats[l].update(row);
            for (const auto& row : caps[l].v) out.v_stats[l].update(row);
        }
    }
    return out;
}

inline ReorderPlan build_plan(const StatsCapture& stats, const ModelConfig& cfg, int group_size,
                              std::uint64_t seed) {
    ReorderPlan plan;
    for (std::size_t l = 0; l < stats.k_stats.size(); ++l) {
        plan.k_entries.push_back(cluster_per_head(stats.k_stats[l], cfg.n_kv_heads, cfg.head_dim,
                                                  group_size, seed + 1000 * l));
        plan.v_entries.push_back(cluster_per_head(stats.v_stats[l], cfg.n_kv_heads, cfg.head_dim,
                                                  group_size, seed + 1000 * l + 500));
    }
    return plan;
}

inline ReorderPlan identity_plan(const ModelConfig& cfg, int group_size) {
    ReorderPlan plan;
    for (int l = 0; l < cfg.n_layers; ++l) {
        plan.k_entries.push_back(identity_entry(cfg.kv_dim(), group_size));
        plan.v_entries.push_back(identity_entry(cfg.kv_dim(), group_size));
    }
    return plan;
}

inline Model fuse_model(const Model& base, const ReorderPlan& plan) {
    SKVQ_REQUIRE(plan.n_layers() == base.config.n_layers, "fuse_model: layer count mismatch");
    Model fused = base;
    for (int l = 0; l < base.config.n_layers; ++l) {
        auto& lw = fused.layers[l];
        fuse_into_weights(plan.k_entries[l], plan.v_entries[l], lw.w_q, lw.w_k, lw.w_v, lw.w_o,
                          base.config.n_heads, base.config.n_kv_heads, base.config.head_dim);
    }
    return fused;
}

// Smoothing factors for the SmoothQuant-style baseline: per-channel absolute
// max over the calibration set, exponent 1.0, zero-range channels get 1.
inline std::vector<float> smoothing_factors(const ChannelStats& stats) {
    std::vector<float> f(static_cast<std::size_t>(stats.channels()));
    for (int c = 0; c < stats.channels(); ++c) {
        const float amax = std::max(std::fabs(stats.min[c]), std::fabs(stats.max[c]));
        f[static_cast<std::size_t>(c)] = amax > 0.0f ? amax : 1.0f;
    }
    return f;
}

// Full-precision capture of the fused model on the calibration set, the
// ground truth the alpha search compares against.
struct CalibContext {
    const Model* fused = nullptr;
    const ReorderPlan* plan = nullptr;
    std::vector<std::vector<LayerCapture>> captures;
};

inline CalibContext make_calib_context(const Model& fused, const ReorderPlan& plan,
                                       const CalibrationSet& calib) {
    SKVQ_REQUIRE(!calib.sequences.empty(), "make_calib_context: empty calibration set");
    SKVQ_REQUIRE(plan.n_layers() == fused.config.n_layers, "make_calib_context: plan mismatch");
    CalibContext ctx;
    ctx.fused = &fused;
    ctx.plan = &plan;
    for (const auto& seq : calib.sequences) {
        ReferenceEngine eng(fused);
        eng.enable_capture();
        eng.forward_chunk(seq);
        ctx.captures.push_back(eng.captures());
    }
    return ctx;
}

namespace detail {

// Dequantized copy of one cache side with the given per-group alphas.
inline Mat dequant_side(const std::vector<std::vector<float>>& rows, const ReorderEntry& entry,
                        const std::vector<float>& alphas, const QuantSpec& spec) {
    Mat out(static_cast<int>(rows.size()), entry.channels());
    for (std::size_t t = 0; t < rows.size(); ++t) {
        const QuantizedBlock block = quantize_row(rows[t], entry.bounds, alphas, spec);
        const std::vector<float> deq = dequantize_row(block, entry.bounds, spec);
        std::copy(deq.begin(), deq.end(), out.row(static_cast<int>(t)).begin());
    }
    return out;
}

// Squared error of the attention-module output of one layer against the fp
// capture, with the given dequantized K/V tensors. Also returns the element
// count so callers can form a mean.
inline void attn_sq_err(const ModelConfig& cfg, const Mat& w_o, const LayerCapture& cap,
                        const Mat& k_hat, const Mat& v_hat, double& sq_sum, std::uint64_t& count) {
    const int n = static_cast<int>(cap.q.size());
    const int q_per_kv = cfg.n_heads / cfg.n_kv_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
    Mat ctx(n, cfg.d_model);
    std::vector<float> scores;
    for (int i = 0; i < n; ++i) {
        for (int h = 0; h < cfg.n_heads; ++h) {
            const int kv_head = h / q_per_kv;
            auto q_slice = std::span<const float>(cap.q[static_cast<std::size_t>(i)].data() +
                                                      h * cfg.head_dim,
                                                  static_cast<std::size_t>(cfg.head_dim));
            scores.assign(static_cast<std::size_t>(i) + 1, 0.0f);
            for (int t = 0; t <= i; ++t) {
                auto k_slice = std::span<const float>(k_hat.row(t).data() + kv_head * cfg.head_dim,
                                                      static_cast<std::size_t>(cfg.head_dim));
                scores[static_cast<std::size_t>(t)] =
                    static_cast<float>(dot(q_slice, k_slice) * inv_sqrt);
            }
            softmax_inplace(scores);
            float* out = ctx.row(i).data() + h * cfg.head_dim;
            for (int c = 0; c < cfg.head_dim; ++c) {
                double acc = 0.0;
                for (int t = 0; t <= i; ++t)
                    acc += static_cast<double>(scores[static_cast<std::size_t>(t)]) *
                           v_hat.at(t, kv_head * cfg.head_dim + c);
                out[c] = static_cast<float>(acc);
            }
        }
    }
    const Mat attn = matmul_nt(ctx, w_o);
    for (int i = 0; i < n; ++i) {
        const auto& ref = cap.attn_out[static_cast<std::size_t>(i)];
        for (int c = 0; c < cfg.d_model; ++c) {
            const double d = static_cast<double>(attn.at(i, c)) - ref[static_cast<std::size_t>(c)];
            sq_sum += d * d;
        }
        count += static_cast<std::uint64_t>(cfg.d_model);
    }
}

inline double layer_loss(const CalibContext& ctx, int layer, const std::vector<float>& k_alphas,
                         const std::vector<float>& v_alphas, const QuantSpec& spec_k,
                         const QuantSpec& spec_v) {
    const auto& cfg = ctx.fused->config;
    const auto& k_entry = ctx.plan->k_entries[static_cast<std::size_t>(layer)];
    const auto& v_entry = ctx.plan->v_entries[static_cast<std::size_t>(layer)];
    double sq = 0.0;
    std::uint64_t n = 0;
    for (const auto& seq_caps : ctx.captures) {
        const auto& cap = seq_caps[static_cast<std::size_t>(layer)];
        const Mat k_hat = dequant_side(cap.k, k_entry, k_alphas, spec_k);
        const Mat v_hat = dequant_side(cap.v, v_entry, v_alphas, spec_v);
        attn_sq_err(cfg, ctx.fused->layers[static_cast<std::size_t>(layer)].w_o, cap, k_hat, v_hat,
                    sq, n);
    }
    return n ? sq / static_cast<double>(n) : 0.0;
}

} // namespace detail

inline void validate_grid(const std::vector<float>& grid) {
    SKVQ_REQUIRE(!grid.empty(), "alpha grid: empty");
    for (float a : grid) SKVQ_REQUIRE(a > 0.0f && a <= 1.0f, "alpha grid: value outside (0,1]");
}

// Mean squared error of one layer's attention output under a candidate
// schedule, over the whole calibration capture. This is the plain two-pass
// evaluation; the search below calls it for its final per-layer decisions.
inline double evaluate_clip_loss(const CalibContext& ctx, int layer, const ClipSchedule& schedule) {
    SKVQ_REQUIRE(layer >= 0 && layer < ctx.fused->config.n_layers, "evaluate_clip_loss: bad layer");
    return detail::layer_loss(ctx, layer, schedule.k_alphas[static_cast<std::size_t>(layer)],
                              schedule.v_alphas[static_cast<std::size_t>(layer)], schedule.spec_k,
                              schedule.spec_v);
}

// Loss of the identity (16-bit lossless) quantizer: the reconstruction is
// the captured rows themselves, so the evaluation path's zero point is
// exactly zero and any drift in the recomputation shows up here.
inline double evaluate_identity_loss(const CalibContext& ctx, int layer) {
    SKVQ_REQUIRE(layer >= 0 && layer < ctx.fused->config.n_layers,
                 "evaluate_identity_loss: bad layer");
    const auto& cfg = ctx.fused->config;
    const auto copy_rows = [](const std::vector<std::vector<float>>& rows) {
        Mat out(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
        for (std::size_t t = 0; t < rows.size(); ++t)
            std::copy(rows[t].begin(), rows[t].end(), out.row(static_cast<int>(t)).begin());
        return out;
    };
    double sq = 0.0;
    std::uint64_t n = 0;
    for (const auto& seq_caps : ctx.captures) {
        const auto& cap = seq_caps[static_cast<std::size_t>(layer)];
        detail::attn_sq_err(cfg, ctx.fused->layers[static_cast<std::size_t>(layer)].w_o, cap,
                            copy_rows(cap.k), copy_rows(cap.v), sq, n);
    }
    return n ? sq / static_cast<double>(n) : 0.0;
}

inline ClipSchedule calibrate_alpha(const CalibContext& ctx, QuantSpec spec_k, QuantSpec spec_v,
                                    const std::vector<float>& grid) {
    validate_grid(grid);
    std::vector<float> order(grid);
    std::sort(order.begin(), order.end(), std::greater<float>());

    ClipSchedule schedule = all_ones_schedule(*ctx.plan, spec_k, spec_v);
    schedule.spec_k = spec_k;
    schedule.spec_v = spec_v;
    for (auto& v : schedule.k_alphas)
        for (float& a : v) a = order.front();
    for (auto& v : schedule.v_alphas)
        for (float& a : v) a = order.front();

    const int n_layers = ctx.fused->config.n_layers;
    for (int l = 0; l < n_layers; ++l) {
        auto& k_alphas = schedule.k_alphas[static_cast<std::size_t>(l)];
        auto& v_alphas = schedule.v_alphas[static_cast<std::size_t>(l)];
        auto search_side = [&](std::vector<float>& alphas) {
            for (std::size_t g = 0; g < alphas.size(); ++g) {
                float best_a = order.front();
                alphas[g] = best_a;
                double best_loss = detail::layer_loss(ctx, l, k_alphas, v_alphas, spec_k, spec_v);
                for (std::size_t i = 1; i < order.size(); ++i) {
                    alphas[g] = order[i];
                    const double loss =
                        detail::layer_loss(ctx, l, k_alphas, v_alphas, spec_k, spec_v);
                    if (loss < best_loss) {
                        best_loss = loss;
                        best_a = order[i];
                    }
                }
                alphas[g] = best_a;
            }
        };
        search_side(k_alphas);
        search_side(v_alphas);

        const ClipSchedule ones = all_ones_schedule(*ctx.plan, spec_k, spec_v);
        const double chosen_loss = evaluate_clip_loss(ctx, l, schedule);
        ClipSchedule layer_ones = schedule;
        layer_ones.k_alphas[static_cast<std::size_t>(l)] = ones.k_alphas[static_cast<std::size_t>(l)];
        layer_ones.v_alphas[static_cast<std::size_t>(l)] = ones.v_alphas[static_cast<std::size_t>(l)];
        const double ones_loss = evaluate_clip_loss(ctx, l, layer_ones);
        if (ones_loss < chosen_loss) {
            schedule.k_alphas[static_cast<std::size_t>(l)] =
                layer_ones.k_alphas[static_cast<std::size_t>(l)];
            schedule.v_alphas[static_cast<std::size_t>(l)] =
                layer_ones.v_alphas[static_cast<std::size_t>(l)];
        }
    }
    return schedule;
}

inline ClipSchedule calibrate_alpha(const Model& fused, const ReorderPlan& plan, QuantSpec spec_k,
                                    QuantSpec spec_v, const CalibrationSet& calib,
                                    const std::vector<float>& grid) {
    const CalibContext ctx = make_calib_context(fused, plan, calib);
    return calibrate_alpha(ctx, spec_k, spec_v, grid);
}

// Reconstruction-MSE grid search for a single group, used for the synthetic
// outlier checks: returns the best alpha and its MSE.
inline std::pair<float, double> best_alpha_for_group(std::span<const float> values,
                                                     const QuantSpec& spec,
                                                     const std::vector<float>& grid) {
    validate_grid(grid);
    std::vector<float> order(grid);
    std::sort(order.begin(), order.end(), std::greater<float>());
    float best_a = order.front();
    double best_mse = std::numeric_limits<double>::infinity();
    for (float a : order) {
        const auto res = quantize_group(values, a, spec);
        const auto deq = dequantize_group(res.codes, res.params, spec);
        const double m = mse(values, deq);
        if (m < best_mse) {
            best_mse = m;
            best_a = a;
        }
    }
    return {best_a, best_mse};
}

} // namespace skvq
