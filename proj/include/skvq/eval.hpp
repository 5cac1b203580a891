// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Evaluation harness: builds engines for the quantization variants under
// comparison, measures attention-output MSE against the full-precision
// reference and teacher-forced perplexity, and emits one CSV row per
// variant. The ablation ladder adds one mechanism at a time (window, clip
// calibration, channel reorder, attention sinks) so each increment's effect
// is visible in isolation.

#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "skvq/attention.hpp"
#include "skvq/calibration.hpp"
#include "skvq/model.hpp"
#include "skvq/reference.hpp"
#include "skvq/rng.hpp"
#include "skvq/strategy.hpp"

namespace skvq {

// Stored code width plus the lossless escape hatch: 16 bits means "keep
// full precision", which every strategy honors exactly.
struct BitsChoice {
    bool lossless = false;
    CodeWidth width = CodeWidth::b2;

    bool operator==(const BitsChoice&) const = default;
};

inline BitsChoice parse_bits(const std::string& s) {
    if (s == "16") return {true, CodeWidth::b8};
    if (s == "ternary" || s == "1.5" || s == "1.6") return {false, CodeWidth::ternary};
    if (s == "1") return {false, CodeWidth::b1};
    if (s == "2") return {false, CodeWidth::b2};
    if (s == "3") return {false, CodeWidth::b3};
    if (s == "4") return {false, CodeWidth::b4};
    if (s == "8") return {false, CodeWidth::b8};
    fail("bits: expected 1|2|3|4|8|16|ternary, got '" + s + "'");
}

inline std::string bits_label(BitsChoice b) {
    if (b.lossless) return "16";
    if (b.width == CodeWidth::ternary) return "ternary";
    return std::to_string(width_bits(b.width));
}

inline ParamFormat parse_param_format(const std::string& s) {
    if (s == "fp16") return ParamFormat::fp16;
    if (s == "fp8") return ParamFormat::fp8;
    fail("param_format: expected fp16|fp8, got '" + s + "'");
}

inline double declared_bits_for(BitsChoice b, int group_size, ParamFormat fmt) {
    if (b.lossless) return 16.0;
    return average_bits(QuantSpec{b.width, group_size, fmt});
}

inline StrategyKind parse_strategy(const std::string& s) {
    if (s == "skvq") return StrategyKind::group_clip;
    if (s == "rtn") return StrategyKind::rtn;
    if (s == "rtn-sym") return StrategyKind::rtn_sym;
    if (s == "smooth") return StrategyKind::smooth;
    if (s == "fp16") return StrategyKind::lossless;
    fail("strategy: expected skvq|rtn|rtn-sym|smooth|fp16, got '" + s + "'");
}

// Everything needed to assemble per-layer strategies. Null plan means
// identity channel order; null schedule means no clipping (all alphas 1);
// smoothing factors are only consulted by the smooth kind.
struct StrategyRequest {
    StrategyKind kind = StrategyKind::group_clip;
    BitsChoice bits_k;
    BitsChoice bits_v;
    int group_size = 32;
    ParamFormat fmt = ParamFormat::fp16;
    const ReorderPlan* plan = nullptr;
    const ClipSchedule* schedule = nullptr;
    const std::vector<std::vector<float>>* k_smooth = nullptr;
    const std::vector<std::vector<float>>* v_smooth = nullptr;
};

namespace detail {

inline std::unique_ptr<QuantStrategy> make_side_strategy(const StrategyRequest& req, int layer,
                                                         bool value_side, int channels) {
    const BitsChoice bits = value_side ? req.bits_v : req.bits_k;
    if (bits.lossless || req.kind == StrategyKind::lossless)
        return std::make_unique<LosslessStrategy>(channels);
    const QuantSpec spec{bits.width, req.group_size, req.fmt};
    switch (req.kind) {
        case StrategyKind::group_clip:
        case StrategyKind::rtn: {
            const ReorderEntry entry =
                req.plan ? (value_side ? req.plan->v_entries[static_cast<std::size_t>(layer)]
                                       : req.plan->k_entries[static_cast<std::size_t>(layer)])
                         : identity_entry(channels, req.group_size);
            std::vector<float> alphas(static_cast<std::size_t>(entry.n_groups()), 1.0f);
            if (req.schedule) {
                alphas = value_side ? req.schedule->v_alphas[static_cast<std::size_t>(layer)]
                                    : req.schedule->k_alphas[static_cast<std::size_t>(layer)];
            }
            return std::make_unique<GroupClipStrategy>(spec, entry.bounds, std::move(alphas),
                                                       req.kind);
        }
        case StrategyKind::rtn_sym:
            return std::make_unique<SymmetricRtnStrategy>(spec, channels);
        case StrategyKind::smooth: {
            SKVQ_REQUIRE(req.k_smooth && req.v_smooth, "smooth strategy needs factors");
            const auto& factors = value_side ? (*req.v_smooth)[static_cast<std::size_t>(layer)]
                                             : (*req.k_smooth)[static_cast<std::size_t>(layer)];
            return std::make_unique<SmoothStrategy>(spec, factors);
        }
        default: fail("make_side_strategy: unhandled kind");
    }
}

} // namespace detail

inline std::vector<std::unique_ptr<QuantStrategy>> make_layer_strategies(
    const ModelConfig& cfg, const StrategyRequest& req, bool value_side) {
    if (req.plan) {
        SKVQ_REQUIRE(req.plan->n_layers() == cfg.n_layers,
                     "make_layer_strategies: plan layer count mismatch");
    }
    if (req.schedule) {
        SKVQ_REQUIRE(req.schedule->n_layers() == cfg.n_layers,
                     "make_layer_strategies: schedule layer count mismatch");
    }
    std::vector<std::unique_ptr<QuantStrategy>> out;
    for (int l = 0; l < cfg.n_layers; ++l)
        out.push_back(detail::make_side_strategy(req, l, value_side, cfg.kv_dim()));
    return out;
}

// An engine plus the model copy it reads. The model must stay put for the
// engine's lifetime, so both live behind stable pointers.
struct EngineBundle {
    std::unique_ptr<Model> model;
    std::unique_ptr<Engine> engine;
};

inline EngineBundle make_engine_bundle(const Model& base, const StrategyRequest& req, int window,
                                       long sink) {
    EngineBundle b;
    b.model = std::make_unique<Model>(req.plan ? fuse_model(base, *req.plan) : base);
    auto k_strats = make_layer_strategies(base.config, req, false);
    auto v_strats = make_layer_strategies(base.config, req, true);
    std::vector<std::unique_ptr<FilterRule>> filters;
    if (sink > 0) filters.push_back(std::make_unique<AttentionSinkRule>(sink));
    b.engine = std::make_unique<Engine>(*b.model, std::move(k_strats), std::move(v_strats),
                                        std::move(filters), window, req.plan);
    return b;
}

// Decodes a sequence one token at a time with capture enabled, so the
// sliding window actually quantizes history as it would during generation.
inline void run_capture_decode(Engine& engine, std::span<const int> tokens) {
    engine.reset();
    engine.enable_capture();
    for (std::size_t t = 0; t < tokens.size(); ++t)
        (void)engine.forward_chunk(std::span<const int>(&tokens[t], 1));
}

inline std::vector<LayerCapture> reference_outputs(const Model& base,
                                                   std::span<const int> tokens) {
    ReferenceEngine ref(base);
    ref.enable_capture();
    for (std::size_t t = 0; t < tokens.size(); ++t)
        (void)ref.forward_chunk(std::span<const int>(&tokens[t], 1));
    return ref.captures();
}

// Mean squared difference between two capture sets' attention outputs,
// averaged over layers, tokens, and hidden channels.
inline double attn_capture_mse(const std::vector<LayerCapture>& a,
                               const std::vector<LayerCapture>& b) {
    SKVQ_REQUIRE(a.size() == b.size(), "attn_capture_mse: layer count mismatch");
    double sum = 0.0;
    std::uint64_t count = 0;
    for (std::size_t l = 0; l < a.size(); ++l) {
        SKVQ_REQUIRE(a[l].attn_out.size() == b[l].attn_out.size(),
                     "attn_capture_mse: token count mismatch");
        for (std::size_t t = 0; t < a[l].attn_out.size(); ++t) {
            const auto& ra = a[l].attn_out[t];
            const auto& rb = b[l].attn_out[t];
            SKVQ_REQUIRE(ra.size() == rb.size(), "attn_capture_mse: row size mismatch");
            for (std::size_t c = 0; c < ra.size(); ++c) {
                const double d = static_cast<double>(ra[c]) - static_cast<double>(rb[c]);
                sum += d * d;
            }
            count += ra.size();
        }
    }
    SKVQ_REQUIRE(count > 0, "attn_capture_mse: empty captures");
    return sum / static_cast<double>(count);
}

struct EvalVariant {
    std::string label;
    StrategyKind kind = StrategyKind::group_clip;
    int window = 0;
    long sink = 0;
    bool reorder = false;
    bool clip = false;
    ParamFormat fmt = ParamFormat::fp16;
};

struct EvalRow {
    std::string strategy;
    std::string bits_key;
    std::string bits_value;
    int group_size = 0;
    int window = 0;
    long sink = 0;
    double avg_bits = 0.0;
    double mse = 0.0;
    double ppl = 0.0;
};

struct EvalOptions {
    BitsChoice bits_k;
    BitsChoice bits_v;
    int group_size = 16;
    int window = 48;
    long sink = 4;
    int calib_seqs = 4;
    int calib_len = 96;
    int eval_seqs = 3;
    int eval_len = 160;
    std::vector<float> alpha_grid = default_alpha_grid();
    std::uint64_t seed = 1;
};

// Shared per-model precomputation for a variant sweep: calibration data,
// channel statistics, both reorder plans, clip schedules for both plans,
// smoothing factors, and the reference attention outputs per eval sequence.
class EvalContext {
public:
    EvalContext(const Model& base, const EvalOptions& opts) : base_(base), opts_(opts) {
        calib_ = make_random_calibration(base.config, opts.calib_seqs, opts.calib_len,
                                         opts.seed * 7919 + 11);
        eval_ = make_random_calibration(base.config, opts.eval_seqs, opts.eval_len,
                                        opts.seed * 7919 + 29);
        stats_ = collect_model_stats(base, calib_);
        identity_ = identity_plan(base.config, opts.group_size);
        clustered_ = build_plan(stats_, base.config, opts.group_size, opts.seed);
        for (const auto& s : stats_.k_stats) k_smooth_.push_back(smoothing_factors(s));
        for (const auto& s : stats_.v_stats) v_smooth_.push_back(smoothing_factors(s));
        for (const auto& seq : eval_.sequences) ref_outputs_.push_back(reference_outputs(base, seq));
    }

    const Model& base() const { return base_; }
    const EvalOptions& options() const { return opts_; }
    const CalibrationSet& calib() const { return calib_; }
    const CalibrationSet& eval_set() const { return eval_; }
    const StatsCapture& stats() const { return stats_; }
    const ReorderPlan& plan(bool reorder) const { return reorder ? clustered_ : identity_; }
    const std::vector<std::vector<float>>& k_smooth() const { return k_smooth_; }
    const std::vector<std::vector<float>>& v_smooth() const { return v_smooth_; }

    // Clip schedules are calibrated lazily and cached per (plan, format).
    const ClipSchedule& schedule(bool reorder, ParamFormat fmt) {
        SKVQ_REQUIRE(!opts_.bits_k.lossless && !opts_.bits_v.lossless,
                     "schedule: lossless bits need no calibration");
        auto& slot = schedules_[(reorder ? 1 : 0) + (fmt == ParamFormat::fp8 ? 2 : 0)];
        if (!slot) {
            const QuantSpec spec_k{opts_.bits_k.width, opts_.group_size, fmt};
            const QuantSpec spec_v{opts_.bits_v.width, opts_.group_size, fmt};
            const Model fused = fuse_model(base_, plan(reorder));
            slot = std::make_unique<ClipSchedule>(
                calibrate_alpha(fused, plan(reorder), spec_k, spec_v, calib_, opts_.alpha_grid));
        }
        return *slot;
    }

    EvalRow run(const EvalVariant& v) {
        StrategyRequest req;
        req.kind = v.kind;
        req.bits_k = opts_.bits_k;
        req.bits_v = opts_.bits_v;
        req.group_size = opts_.group_size;
        req.fmt = v.fmt;
        const bool quantized = v.kind != StrategyKind::lossless &&
                               !(opts_.bits_k.lossless && opts_.bits_v.lossless);
        const bool grouped =
            v.kind == StrategyKind::group_clip || v.kind == StrategyKind::rtn;
        if (quantized && grouped && (v.reorder || v.clip))
            req.plan = &plan(v.reorder);
        if (quantized && grouped && v.clip) req.schedule = &schedule(v.reorder, v.fmt);
        if (v.kind == StrategyKind::smooth) {
            req.k_smooth = &k_smooth_;
            req.v_smooth = &v_smooth_;
        }

        EngineBundle bundle = make_engine_bundle(base_, req, v.window, v.sink);
        double sq_sum = 0.0;
        double ppl_sum = 0.0;
        double quant_bits = 0.0;
        double quant_elems = 0.0;
        for (std::size_t s = 0; s < eval_.sequences.size(); ++s) {
            const auto& seq = eval_.sequences[s];
            run_capture_decode(*bundle.engine, seq);
            sq_sum += attn_capture_mse(bundle.engine->captures(), ref_outputs_[s]);
            for (int l = 0; l < base_.config.n_layers; ++l) {
                const auto& cache = bundle.engine->cache(l);
                const double elems = cache.k_channels() + cache.v_channels();
                const double fp_rows = static_cast<double>(cache.fp_tokens());
                quant_bits += static_cast<double>(cache.stored_bits()) - 16.0 * fp_rows * elems;
                quant_elems += static_cast<double>(cache.quantized_tokens()) * elems;
            }
            bundle.engine->reset();
            ppl_sum += bundle.engine->perplexity(seq);
        }

        EvalRow row;
        row.strategy = v.label;
        row.bits_key = bits_label(opts_.bits_k);
        row.bits_value = bits_label(opts_.bits_v);
        row.group_size = opts_.group_size;
        row.window = v.window;
        row.sink = v.sink;
        // Byte-count-derived bits per stored element of the quantized
        // stream; the declared formula fills in only when nothing was
        // quantized, so accounting bugs stay visible.
        row.avg_bits =
            quant_elems > 0.0
                ? quant_bits / quant_elems
                : (bundle.engine->declared_bits_k() + bundle.engine->declared_bits_v()) / 2.0;
        if (v.kind == StrategyKind::lossless) {
            row.bits_key = "16";
            row.bits_value = "16";
        }
        row.mse = sq_sum / static_cast<double>(eval_.sequences.size());
        row.ppl = ppl_sum / static_cast<double>(eval_.sequences.size());
        return row;
    }

private:
    const Model& base_;
    EvalOptions opts_;
    CalibrationSet calib_;
    CalibrationSet eval_;
    StatsCapture stats_;
    ReorderPlan identity_;
    ReorderPlan clustered_;
    std::vector<std::vector<float>> k_smooth_;
    std::vector<std::vector<float>> v_smooth_;
    std::vector<std::vector<LayerCapture>> ref_outputs_;
    std::unique_ptr<ClipSchedule> schedules_[4];
};

// One mechanism at a time: plain round-to-nearest, then the fp window, then
// clip calibration, then channel reorder, then attention sinks.
inline std::vector<EvalVariant> ablation_ladder(int window, long sink,
                                                ParamFormat fmt = ParamFormat::fp16) {
    std::vector<EvalVariant> v;
    v.push_back({"rtn", StrategyKind::rtn, 0, 0, false, false, fmt});
    v.push_back({"rtn-window", StrategyKind::rtn, window, 0, false, false, fmt});
    v.push_back({"window-clip", StrategyKind::group_clip, window, 0, false, true, fmt});
    v.push_back({"skvq", StrategyKind::group_clip, window, 0, true, true, fmt});
    v.push_back({"skvq-sink", StrategyKind::group_clip, window, sink, true, true, fmt});
    return v;
}

inline std::vector<EvalVariant> baseline_suite(int window, long sink) {
    std::vector<EvalVariant> v;
    v.push_back({"fp16", StrategyKind::lossless, window, 0, false, false, ParamFormat::fp16});
    v.push_back({"rtn", StrategyKind::rtn, window, 0, false, false, ParamFormat::fp16});
    v.push_back({"rtn-sym", StrategyKind::rtn_sym, window, 0, false, false, ParamFormat::fp16});
    v.push_back({"smooth", StrategyKind::smooth, window, 0, false, false, ParamFormat::fp16});
    v.push_back({"skvq", StrategyKind::group_clip, window, sink, true, true, ParamFormat::fp16});
    return v;
}

inline std::string eval_csv_header() {
    return "strategy,bits_key,bits_value,group_size,window,sink,avg_bits,mse,ppl";
}

inline std::string eval_csv(const std::vector<EvalRow>& rows) {
    std::ostringstream ss;
    ss << eval_csv_header() << '\n';
    for (const auto& r : rows) {
        ss << r.strategy << ',' << r.bits_key << ',' << r.bits_value << ',' << r.group_size << ','
           << r.window << ',' << r.sink << ',';
        ss.precision(6);
        ss << r.avg_bits << ',';
        ss.precision(9);
        ss << r.mse << ',' << r.ppl << '\n';
    }
    return ss.str();
}

// Synthetic model whose key/value projection rows carry log-normal scale
// spread, giving the KV activations the per-channel magnitude diversity
// that reorder and smoothing are designed to exploit.
inline Model make_heterogeneous_model(const ModelConfig& cfg, std::uint64_t seed,
                                      double sigma = 1.2) {
    Model m = make_random_model(cfg, seed);
    Rng rng(seed ^ 0x5ca1ab1eULL);
    for (auto& layer : m.layers) {
        for (Mat* w : {&layer.w_k, &layer.w_v}) {
            for (int r = 0; r < w->rows; ++r) {
                const float scale = std::exp(static_cast<float>(sigma * rng.normal()));
                for (float& x : w->row(r)) x *= scale;
            }
        }
    }
    return m;
}

} // namespace skvq
