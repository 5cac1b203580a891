// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "skvq/calibration.hpp"

using skvq::CalibContext;
using skvq::CalibrationSet;
using skvq::ClipSchedule;
using skvq::CodeWidth;
using skvq::Model;
using skvq::ModelConfig;
using skvq::ParamFormat;
using skvq::QuantSpec;
using skvq::ReorderPlan;

namespace {

ModelConfig calib_cfg() {
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_kv_heads = 2;
    cfg.head_dim = 8;
    cfg.d_ff = 16;
    cfg.vocab = 24;
    return cfg;
}

struct Fixture {
    Model fused;
    ReorderPlan plan;
    CalibrationSet calib;
};

Fixture make_fixture(std::uint64_t seed) {
    const ModelConfig cfg = calib_cfg();
    const Model base = skvq::make_random_model(cfg, seed);
    CalibrationSet calib = skvq::make_random_calibration(cfg, 2, 8, seed + 1);
    const auto stats = skvq::collect_model_stats(base, calib);
    ReorderPlan plan = skvq::build_plan(stats, cfg, 4, seed + 2);
    Model fused = skvq::fuse_model(base, plan);
    return {std::move(fused), std::move(plan), std::move(calib)};
}

} // namespace

TEST(Calibration, ScheduleNeverLosesToAllOnes) {
    const QuantSpec spec{CodeWidth::b2, 4, ParamFormat::fp16};
    for (std::uint64_t seed : {3u, 9u}) {
        const Fixture fx = make_fixture(seed);
        const CalibContext ctx = skvq::make_calib_context(fx.fused, fx.plan, fx.calib);
        const ClipSchedule found = skvq::calibrate_alpha(ctx, spec, spec, skvq::default_alpha_grid());
        const ClipSchedule ones = skvq::all_ones_schedule(fx.plan, spec, spec);
        for (int l = 0; l < fx.fused.config.n_layers; ++l) {
            const double loss_found = skvq::evaluate_clip_loss(ctx, l, found);
            const double loss_ones = skvq::evaluate_clip_loss(ctx, l, ones);
            EXPECT_LE(loss_found, loss_ones) << "seed " << seed << " layer " << l;
        }
    }
}

TEST(Calibration, OutlierGroupPrefersClipping) {
    const QuantSpec spec{CodeWidth::b2, 16, ParamFormat::fp16};
    std::vector<float> values(16);
    skvq::Rng rng(5);
    for (auto& v : values) v = rng.uniform(-1.0f, 1.0f);
    values[7] = 3.0f;

    const auto [alpha, best_mse] = skvq::best_alpha_for_group(values, spec,
                                                              skvq::default_alpha_grid());
    const auto at_one = skvq::quantize_group(values, 1.0f, spec);
    const auto deq_one = skvq::dequantize_group(at_one.codes, at_one.params, spec);
    const double mse_one = skvq::mse(values, deq_one);

    EXPECT_LT(alpha, 1.0f);
    EXPECT_LT(best_mse, mse_one);
}

TEST(Calibration, ConstantGroupTiesResolveTowardNoClipping) {
    const QuantSpec spec{CodeWidth::b2, 8, ParamFormat::fp16};
    const std::vector<float> values(8, 0.75f);
    const auto [alpha, best_mse] = skvq::best_alpha_for_group(values, spec, {0.8f, 0.9f, 1.0f});
    EXPECT_EQ(alpha, 1.0f);
    EXPECT_EQ(best_mse, 0.0);
}

TEST(Calibration, SingletonGridMatchesAllOnesSchedule) {
    const QuantSpec spec{CodeWidth::b2, 4, ParamFormat::fp16};
    const Fixture fx = make_fixture(12);
    const ClipSchedule found =
        skvq::calibrate_alpha(fx.fused, fx.plan, spec, spec, fx.calib, {1.0f});
    EXPECT_EQ(found, skvq::all_ones_schedule(fx.plan, spec, spec));
}

TEST(Calibration, ClipLossMatchesIndependentRecompute) {
    const QuantSpec spec{CodeWidth::b2, 4, ParamFormat::fp16};
    ModelConfig cfg = calib_cfg();
    cfg.n_layers = 1;
    const Model base = skvq::make_random_model(cfg, 30);
    const CalibrationSet calib = skvq::make_random_calibration(cfg, 1, 4, 31);
    const ReorderPlan plan = skvq::identity_plan(cfg, 4);
    const CalibContext ctx = skvq::make_calib_context(base, plan, calib);
    const ClipSchedule ones = skvq::all_ones_schedule(plan, spec, spec);
    const double reported = skvq::evaluate_clip_loss(ctx, 0, ones);

    const auto& cap = ctx.captures[0][0];
    const auto& entry = plan.k_entries[0];
    const int n = static_cast<int>(cap.q.size());
    const auto alphas = std::vector<float>(static_cast<std::size_t>(entry.n_groups()), 1.0f);
    auto dequant_rows = [&](const std::vector<std::vector<float>>& rows) {
        std::vector<std::vector<float>> out;
        for (const auto& r : rows) {
            const auto block = skvq::quantize_row(r, entry.bounds, alphas, spec);
            out.push_back(skvq::dequantize_row(block, entry.bounds, spec));
        }
        return out;
    };
    const auto k_hat = dequant_rows(cap.k);
    const auto v_hat = dequant_rows(cap.v);

    double sq = 0.0;
    std::uint64_t count = 0;
    const int hd = cfg.head_dim;
    for (int i = 0; i < n; ++i) {
        std::vector<float> ctx_row(static_cast<std::size_t>(cfg.d_model));
        for (int h = 0; h < cfg.n_heads; ++h) {
            std::vector<float> scores(static_cast<std::size_t>(i) + 1);
            for (int t = 0; t <= i; ++t) {
                double acc = 0.0;
                for (int c = 0; c < hd; ++c)
                    acc += static_cast<double>(cap.q[i][h * hd + c]) * k_hat[t][h * hd + c];
                scores[static_cast<std::size_t>(t)] =
                    static_cast<float>(acc / std::sqrt(static_cast<double>(hd)));
            }
            skvq::softmax_inplace(scores);
            for (int c = 0; c < hd; ++c) {
                double acc = 0.0;
                for (int t = 0; t <= i; ++t)
                    acc += static_cast<double>(scores[static_cast<std::size_t>(t)]) *
                           v_hat[t][h * hd + c];
                ctx_row[static_cast<std::size_t>(h * hd + c)] = static_cast<float>(acc);
            }
        }
        for (int r = 0; r < cfg.d_model; ++r) {
            const double attn = skvq::dot(ctx_row, base.layer(0).w_o.row(r));
            const double d = static_cast<double>(static_cast<float>(attn)) - cap.attn_out[i][r];
            sq += d * d;
            ++count;
        }
    }
    EXPECT_DOUBLE_EQ(reported, sq / static_cast<double>(count));
}

TEST(Calibration, SearchIsDeterministic) {
    const QuantSpec spec_k{CodeWidth::b2, 4, ParamFormat::fp16};
    const QuantSpec spec_v{CodeWidth::b4, 4, ParamFormat::fp8};
    const Fixture fx = make_fixture(21);
    const ClipSchedule a =
        skvq::calibrate_alpha(fx.fused, fx.plan, spec_k, spec_v, fx.calib, skvq::default_alpha_grid());
    const ClipSchedule b =
        skvq::calibrate_alpha(fx.fused, fx.plan, spec_k, spec_v, fx.calib, skvq::default_alpha_grid());
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.n_layers(), fx.fused.config.n_layers);
    for (const auto& v : a.k_alphas)
        for (float alpha : v) EXPECT_TRUE(alpha > 0.0f && alpha <= 1.0f);
}

TEST(Calibration, IdentityLossIsExactlyZero) {
    const Fixture fx = make_fixture(40);
    const CalibContext ctx = skvq::make_calib_context(fx.fused, fx.plan, fx.calib);
    for (int l = 0; l < fx.fused.config.n_layers; ++l)
        EXPECT_EQ(skvq::evaluate_identity_loss(ctx, l), 0.0) << "layer " << l;
}

TEST(Calibration, GridValidation) {
    EXPECT_THROW(skvq::validate_grid({}), skvq::Error);
    EXPECT_THROW(skvq::validate_grid({0.5f, 0.0f}), skvq::Error);
    EXPECT_THROW(skvq::validate_grid({1.2f}), skvq::Error);
    EXPECT_NO_THROW(skvq::validate_grid({0.8f, 1.0f}));
}

TEST(Calibration, SmoothingFactorsFromStats) {
    skvq::ChannelStats stats;
    stats.update(std::vector<float>{-2.0f, 0.5f, 0.0f});
    stats.update(std::vector<float>{1.0f, -3.0f, 0.0f});
    const auto f = skvq::smoothing_factors(stats);
    EXPECT_EQ(f, (std::vector<float>{2.0f, 3.0f, 1.0f}));
}

TEST(Calibration, RandomCalibrationSetShape) {
    const ModelConfig cfg = calib_cfg();
    const auto a = skvq::make_random_calibration(cfg, 3, 6, 7);
    const auto b = skvq::make_random_calibration(cfg, 3, 6, 7);
    ASSERT_EQ(a.sequences.size(), 3u);
    for (const auto& seq : a.sequences) {
        ASSERT_EQ(seq.size(), 6u);
        for (int t : seq) EXPECT_TRUE(t >= 0 && t < cfg.vocab);
    }
    EXPECT_EQ(a.sequences, b.sequences);
    EXPECT_THROW(skvq::make_random_calibration(cfg, 0, 6, 7), skvq::Error);
    EXPECT_THROW(skvq::make_random_calibration(cfg, 1, 1, 7), skvq::Error);
}

TEST(Calibration, CollectedStatsMatchManualUnion) {
    ModelConfig cfg = calib_cfg();
    cfg.n_layers = 1;
    const Model m = skvq::make_random_model(cfg, 50);
    const auto calib = skvq::make_random_calibration(cfg, 2, 5, 51);
    const auto stats = skvq::collect_model_stats(m, calib);
    ASSERT_EQ(stats.k_stats.size(), 1u);
    ASSERT_EQ(stats.v_stats.size(), 1u);

    skvq::ChannelStats manual_k, manual_v;
    for (const auto& seq : calib.sequences) {
        skvq::ReferenceEngine eng(m);
        eng.enable_capture();
        (void)eng.forward_chunk(seq);
        for (const auto& row : eng.captures()[0].k) manual_k.update(row);
        for (const auto& row : eng.captures()[0].v) manual_v.update(row);
    }
    EXPECT_EQ(stats.k_stats[0].min, manual_k.min);
    EXPECT_EQ(stats.k_stats[0].max, manual_k.max);
    EXPECT_EQ(stats.v_stats[0].min, manual_v.min);
    EXPECT_EQ(stats.v_stats[0].max, manual_v.max);
}

TEST(Calibration, BuildPlanShapes) {
    const ModelConfig cfg = calib_cfg();
    const Model base = skvq::make_random_model(cfg, 60);
    const auto calib = skvq::make_random_calibration(cfg, 2, 6, 61);
    const auto stats = skvq::collect_model_stats(base, calib);
    const ReorderPlan p1 = skvq::build_plan(stats, cfg, 4, 9);
    const ReorderPlan p2 = skvq::build_plan(stats, cfg, 4, 9);
    EXPECT_EQ(p1, p2);
    ASSERT_EQ(p1.n_layers(), cfg.n_layers);
    for (const auto& e : p1.k_entries) {
        skvq::validate_entry(e);
        EXPECT_EQ(e.channels(), cfg.kv_dim());
        for (int i = 0; i < e.channels(); ++i)
            EXPECT_EQ(e.perm[static_cast<std::size_t>(i)] / cfg.head_dim, i / cfg.head_dim);
    }

    const ReorderPlan ident = skvq::identity_plan(cfg, 4);
    for (const auto& e : ident.k_entries) EXPECT_EQ(e, skvq::identity_entry(cfg.kv_dim(), 4));
    EXPECT_THROW(skvq::fuse_model(base, ReorderPlan{}), skvq::Error);
}
