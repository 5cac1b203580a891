// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "skvq/roofline.hpp"

using skvq::RooflineConfig;

namespace {

RooflineConfig at(double batch, double seq, double kv_bits) {
    RooflineConfig c;
    c.batch = batch;
    c.seq = seq;
    c.kv_avg_bits = kv_bits;
    return c;
}

double rel_gap(double value, double target) { return std::fabs(value - target) / target; }

} // namespace

TEST(Roofline, KvMemoryPins) {
    EXPECT_DOUBLE_EQ(skvq::kv_bytes(at(128, 200000, 16.0)), 1.34217728e13);
    EXPECT_DOUBLE_EQ(skvq::kv_bytes(at(64, 128000, 16.0)), 4.294967296e12);
    EXPECT_LE(rel_gap(skvq::kv_bytes(at(128, 200000, 16.0)) / 1e9, 13400.0), 0.15);
    EXPECT_LE(rel_gap(skvq::kv_bytes(at(64, 128000, 16.0)) / 1e9, 4300.0), 0.15);
    EXPECT_LE(rel_gap(skvq::memory_consumption_bytes(at(128, 200000, 16.0)) / 1e9, 13400.0), 0.15);
    EXPECT_LE(rel_gap(skvq::memory_consumption_bytes(at(64, 128000, 16.0)) / 1e9, 4300.0), 0.15);
}

TEST(Roofline, SmallBatchConsumptionRatio) {
    const double fp16 = skvq::memory_consumption_bytes(at(1, 32000, 16.0)) / 1e9;
    const double kv2 = skvq::memory_consumption_bytes(at(1, 32000, 2.25)) / 1e9;
    EXPECT_LE(rel_gap(fp16, 29.7), 0.15);
    EXPECT_LE(rel_gap(kv2, 15.1), 0.15);
    EXPECT_GT(fp16, kv2);
}

TEST(Roofline, MemoryBoundSpeedupNearSevenX) {
    const double s = skvq::speedup(at(128, 200000, 16.0), at(128, 200000, 2.25));
    EXPECT_NEAR(s, 7.068, 0.01);
    EXPECT_GE(s, 7.1 - 0.5);
    EXPECT_LE(s, 7.1 + 0.5);
}

TEST(Roofline, UnitKvBytes) {
    RooflineConfig c;
    c.batch = 1;
    c.seq = 1;
    c.n_layers = 1;
    c.kv_hidden = 1;
    c.kv_avg_bits = 16.0;
    EXPECT_DOUBLE_EQ(skvq::kv_bytes(c), 4.0);
    c.kv_avg_bits = 2.0;
    EXPECT_DOUBLE_EQ(skvq::kv_bytes(c), 0.5);
}

TEST(Roofline, IdenticalConfigsGiveUnitSpeedup) {
    const RooflineConfig c = at(8, 4096, 16.0);
    EXPECT_DOUBLE_EQ(skvq::speedup(c, c), 1.0);
    EXPECT_THROW(skvq::speedup(at(8, 4096, 16.0), at(16, 4096, 2.25)), skvq::Error);
}

TEST(Roofline, InfiniteBandwidthIsComputeBound) {
    RooflineConfig c = at(4, 8192, 16.0);
    c.mem_bw = 1e30;
    EXPECT_DOUBLE_EQ(skvq::decode_step_latency(c), skvq::decode_step_flops(c) / c.peak_flops);
}

TEST(Roofline, KvDominatedSpeedupApproachesBitsRatio) {
    RooflineConfig fp = at(1, 1e9, 16.0);
    fp.weight_count = 1.0;
    RooflineConfig q = fp;
    q.kv_avg_bits = 2.25;
    const double s = skvq::speedup(fp, q);
    const double ideal = 16.0 / 2.25;
    EXPECT_NEAR(s, ideal, 0.01 * ideal);
}

TEST(Roofline, DefaultVariants) {
    const auto v = skvq::default_kv_variants();
    ASSERT_EQ(v.size(), 3u);
    EXPECT_EQ(v[0].label, "FP16");
    EXPECT_DOUBLE_EQ(v[0].avg_bits, 16.0);
    EXPECT_EQ(v[1].label, "KV4");
    EXPECT_DOUBLE_EQ(v[1].avg_bits, 4.25);
    EXPECT_EQ(v[2].label, "KV2");
    EXPECT_DOUBLE_EQ(v[2].avg_bits, 2.25);
}

TEST(Roofline, TableShapeAndMonotoneConsumption) {
    const RooflineConfig base;
    const std::vector<double> batches = {1, 64, 128};
    const std::vector<double> seqs = {32000, 128000, 200000};
    const auto rows = skvq::report_table(base, batches, seqs, skvq::default_kv_variants());
    ASSERT_EQ(rows.size(), 27u);

    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_GT(rows[i].latency_s, 0.0);
        EXPECT_GT(rows[i].consumption_gb, 0.0);
        EXPECT_GE(rows[i].access_gb, rows[i].consumption_gb);
    }
    for (double b : batches)
        for (const auto& v : skvq::default_kv_variants()) {
            double prev = 0.0;
            for (double s : seqs) {
                for (const auto& r : rows)
                    if (r.batch == b && r.seq == s && r.label == v.label) {
                        EXPECT_GT(r.consumption_gb, prev);
                        prev = r.consumption_gb;
                    }
            }
        }

    bool found_13400 = false, found_4300 = false;
    for (const auto& r : rows) {
        if (r.label == "FP16" && r.batch == 128 && r.seq == 200000 &&
            rel_gap(r.consumption_gb, 13400.0) <= 0.15)
            found_13400 = true;
        if (r.label == "FP16" && r.batch == 64 && r.seq == 128000 &&
            rel_gap(r.consumption_gb, 4300.0) <= 0.15)
            found_4300 = true;
    }
    EXPECT_TRUE(found_13400);
    EXPECT_TRUE(found_4300);

    const std::string csv = skvq::roofline_csv(rows);
    EXPECT_NE(csv.find("batch,seq,kv,avg_bits,latency_s,memory_access_gb,memory_consumption_gb"),
              std::string::npos);
    EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), 28u);
    EXPECT_NE(skvq::roofline_text(rows).find("consumption_GB"), std::string::npos);
}

TEST(Roofline, ValidationRejectsBadConfig) {
    RooflineConfig c;
    c.kv_avg_bits = 17.0;
    EXPECT_THROW(skvq::validate(c), skvq::Error);
    c = RooflineConfig{};
    c.kv_avg_bits = 0.0;
    EXPECT_THROW(skvq::validate(c), skvq::Error);
    c = RooflineConfig{};
    c.batch = -1;
    EXPECT_THROW(skvq::validate(c), skvq::Error);
    c = RooflineConfig{};
    c.mem_bw = 0;
    EXPECT_THROW(skvq::validate(c), skvq::Error);
    c = RooflineConfig{};
    c.activation_bytes = -1;
    EXPECT_THROW(skvq::validate(c), skvq::Error);
    EXPECT_THROW(skvq::report_table(RooflineConfig{}, {}, {1.0}, skvq::default_kv_variants()),
                 skvq::Error);
}
