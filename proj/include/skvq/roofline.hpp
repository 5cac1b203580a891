// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Analytical decode-step model: latency is the larger of the compute bound
// (FLOPs / peak) and the memory bound (bytes moved / bandwidth). Bytes are
// weights plus KV cache (plus an optional activation term, zero by default).
// Defaults describe a 7B-class dense model on one A100-80GB, sizes in
// decimal units (GB = 1e9 bytes).

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "skvq/common.hpp"

namespace skvq {

struct RooflineConfig {
    // hardware
    double peak_flops = 312e12;
    double mem_bw = 2.039e12;
    // model
    double n_layers = 32;
    double hidden = 4096;
    double kv_hidden = 4096;
    double heads_ratio = 1.0;
    double weight_count = 6.74e9;
    double weight_bits = 16.0;
    // workload
    double batch = 128;
    double seq = 200000;
    // cache
    double kv_avg_bits = 16.0;
    double activation_bytes = 0.0;
};

inline void validate(const RooflineConfig& c) {
    SKVQ_REQUIRE(c.peak_flops > 0 && c.mem_bw > 0, "roofline: hardware rates must be positive");
    SKVQ_REQUIRE(c.n_layers > 0 && c.hidden > 0 && c.kv_hidden > 0 && c.heads_ratio > 0,
                 "roofline: model shape must be positive");
    SKVQ_REQUIRE(c.weight_count > 0 && c.weight_bits > 0, "roofline: weights must be positive");
    SKVQ_REQUIRE(c.batch > 0 && c.seq > 0, "roofline: workload must be positive");
    SKVQ_REQUIRE(c.kv_avg_bits > 0 && c.kv_avg_bits <= 16.0, "roofline: kv bits must be in (0,16]");
    SKVQ_REQUIRE(c.activation_bytes >= 0, "roofline: activation bytes must be non-negative");
}

inline double kv_bytes(const RooflineConfig& c) {
    validate(c);
    return c.batch * c.seq * c.n_layers * 2.0 * c.kv_hidden * c.kv_avg_bits / 8.0;
}

inline double weight_bytes(const RooflineConfig& c) { return c.weight_count * c.weight_bits / 8.0; }

// Bytes touched by one decode step: every weight once, the whole KV cache
// once, plus the configured activation traffic.
inline double memory_access_bytes(const RooflineConfig& c) {
    return weight_bytes(c) + kv_bytes(c) + c.activation_bytes;
}

// Resident footprint: weights plus KV cache.
inline double memory_consumption_bytes(const RooflineConfig& c) {
    return weight_bytes(c) + kv_bytes(c);
}

inline double decode_step_flops(const RooflineConfig& c) {
    validate(c);
    return 2.0 * c.batch * (c.weight_count + c.seq * c.n_layers * 2.0 * c.kv_hidden * c.heads_ratio);
}

inline double decode_step_latency(const RooflineConfig& c) {
    const double compute = decode_step_flops(c) / c.peak_flops;
    const double memory = memory_access_bytes(c) / c.mem_bw;
    return std::max(compute, memory);
}

inline double speedup(const RooflineConfig& a, const RooflineConfig& b) {
    SKVQ_REQUIRE(a.batch == b.batch && a.seq == b.seq, "speedup: workloads must match");
    return decode_step_latency(a) / decode_step_latency(b);
}

struct RooflineRow {
    double batch;
    double seq;
    std::string label;
    double avg_bits;
    double latency_s;
    double access_gb;
    double consumption_gb;
};

struct KvVariant {
    std::string label;
    double avg_bits;
};

inline std::vector<KvVariant> default_kv_variants() {
    return {{"FP16", 16.0}, {"KV4", 4.25}, {"KV2", 2.25}};
}

inline std::vector<RooflineRow> report_table(const RooflineConfig& base,
                                             const std::vector<double>& batches,
                                             const std::vector<double>& seqs,
                                             const std::vector<KvVariant>& variants) {
    SKVQ_REQUIRE(!batches.empty() && !seqs.empty() && !variants.empty(), "report_table: empty grid");
    std::vector<RooflineRow> rows;
    for (double b : batches)
        for (double s : seqs)
            for (const auto& v : variants) {
                RooflineConfig c = base;
                c.batch = b;
                c.seq = s;
                c.kv_avg_bits = v.avg_bits;
                rows.push_back({b, s, v.label, v.avg_bits, decode_step_latency(c),
                                memory_access_bytes(c) / 1e9, memory_consumption_bytes(c) / 1e9});
            }
    return rows;
}

inline std::string roofline_csv(const std::vector<RooflineRow>& rows) {
    std::string out = "batch,seq,kv,avg_bits,latency_s,memory_access_gb,memory_consumption_gb\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.0f,%.0f,%s,%.4g,%.6g,%.6g,%.6g\n", r.batch, r.seq,
                      r.label.c_str(), r.avg_bits, r.latency_s, r.access_gb, r.consumption_gb);
        out += buf;
    }
    return out;
}

inline std::string roofline_text(const std::vector<RooflineRow>& rows) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%8s %9s %6s %9s %12s %12s %14s\n", "batch", "seq", "kv",
                  "avg_bits", "latency_s", "access_GB", "consumption_GB");
    out += buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%8.0f %9.0f %6s %9.3f %12.5f %12.2f %14.2f\n", r.batch,
                      r.seq, r.label.c_str(), r.avg_bits, r.latency_s, r.access_gb,
                      r.consumption_gb);
        out += buf;
    }
    return out;
}

} // namespace skvq
