// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Channel reorder: cluster channels by their (min, max) calibration range
// with KMeans so channels sharing a quantization group have similar ranges,
// then fuse the resulting permutation into the attention projections so the
// runtime never gathers activations.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "skvq/common.hpp"
#include "skvq/mat.hpp"
#include "skvq/rng.hpp"

namespace skvq {

struct ChannelStats {
    std::vector<float> min;
    std::vector<float> max;

    void init(int channels) {
        min.assign(channels, std::numeric_limits<float>::infinity());
        max.assign(channels, -std::numeric_limits<float>::infinity());
    }

    void update(std::span<const float> row) {
        if (min.empty()) init(static_cast<int>(row.size()));
        SKVQ_REQUIRE(row.size() == min.size(), "ChannelStats: channel count changed");
        for (std::size_t c = 0; c < row.size(); ++c) {
            min[c] = std::min(min[c], row[c]);
            max[c] = std::max(max[c], row[c]);
        }
    }

    int channels() const { return static_cast<int>(min.size()); }
};

inline ChannelStats collect_stats(const std::vector<std::vector<float>>& rows) {
    SKVQ_REQUIRE(!rows.empty(), "collect_stats: no sample tokens");
    ChannelStats stats;
    for (const auto& r : rows) stats.update(r);
    return stats;
}

// One cache side of one layer: channel permutation (new index -> original
// channel) plus group extents over the permuted order.
struct ReorderEntry {
    std::vector<int> perm;
    std::vector<int> bounds;

    int n_groups() const { return static_cast<int>(bounds.size()) - 1; }
    int channels() const { return static_cast<int>(perm.size()); }

    bool operator==(const ReorderEntry&) const = default;
};

inline ReorderEntry identity_entry(int channels, int group_size) {
    SKVQ_REQUIRE(channels >= 1 && group_size >= 1, "identity_entry: bad shape");
    ReorderEntry e;
    e.perm.resize(channels);
    std::iota(e.perm.begin(), e.perm.end(), 0);
    for (int c = 0; c < channels; c += group_size) e.bounds.push_back(c);
    e.bounds.push_back(channels);
    return e;
}

inline void validate_entry(const ReorderEntry& e) {
    const int c = e.channels();
    std::vector<char> seen(c, 0);
    for (int p : e.perm) {
        SKVQ_REQUIRE(p >= 0 && p < c && !seen[p], "ReorderEntry: permutation is not a bijection");
        seen[p] = 1;
    }
    SKVQ_REQUIRE(e.bounds.size() >= 2 && e.bounds.front() == 0 && e.bounds.back() == c,
                 "ReorderEntry: bounds must cover [0, channels)");
    for (std::size_t g = 0; g + 1 < e.bounds.size(); ++g)
        SKVQ_REQUIRE(e.bounds[g] < e.bounds[g + 1], "ReorderEntry: bounds must increase");
}

namespace detail {

inline double feature_dist2(float amin, float amax, float bmin, float bmax) {
    const double dm = static_cast<double>(amin) - bmin;
    const double dx = static_cast<double>(amax) - bmax;
    return dm * dm + dx * dx;
}

} // namespace detail

// Lloyd KMeans over per-channel (min, max) features, k-means++ seeding with
// a fixed seed, at most 100 iterations or centroid movement below 1e-6.
// Channels are ordered stably by cluster id; empty clusters are dropped from
// the bounds (they can occur when features are degenerate).
inline ReorderEntry cluster_channels(const ChannelStats& stats, int n_groups, std::uint64_t seed) {
    const int c = stats.channels();
    SKVQ_REQUIRE(c >= 1, "cluster_channels: no channels");
    SKVQ_REQUIRE(n_groups >= 1 && n_groups <= c, "cluster_channels: n_groups must be in [1, channels]");

    Rng rng(seed);
    std::vector<double> cmin(n_groups), cmax(n_groups);
    std::vector<double> d2(c);

    int first = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(c)));
    cmin[0] = stats.min[first];
    cmax[0] = stats.max[first];
    for (int k = 1; k < n_groups; ++k) {
        double total = 0.0;
        for (int i = 0; i < c; ++i) {
            double best = detail::feature_dist2(stats.min[i], stats.max[i],
                                                static_cast<float>(cmin[0]), static_cast<float>(cmax[0]));
            for (int j = 1; j < k; ++j)
                best = std::min(best, detail::feature_dist2(stats.min[i], stats.max[i],
                                                            static_cast<float>(cmin[j]),
                                                            static_cast<float>(cmax[j])));
            d2[i] = best;
            total += best;
        }
        if (total == 0.0) {
            // every channel already coincides with a centroid; the duplicate
            // centroids produce empty clusters that the bounds drop later
            cmin[k] = cmin[0];
            cmax[k] = cmax[0];
            continue;
        }
        const int pick = static_cast<int>(rng.pick_weighted(d2));
        cmin[k] = stats.min[pick];
        cmax[k] = stats.max[pick];
    }

    std::vector<int> assign(c, 0);
    auto assign_all = [&]() {
        for (int i = 0; i < c; ++i) {
            int best_j = 0;
            double best_d = detail::feature_dist2(stats.min[i], stats.max[i],
                                                  static_cast<float>(cmin[0]), static_cast<float>(cmax[0]));
            for (int j = 1; j < n_groups; ++j) {
                const double d = detail::feature_dist2(stats.min[i], stats.max[i],
                                                       static_cast<float>(cmin[j]),
                                                       static_cast<float>(cmax[j]));
                if (d < best_d) {
                    best_d = d;
                    best_j = j;
                }
            }
            assign[i] = best_j;
            d2[i] = best_d;
        }
    };
    for (int iter = 0; iter < 100; ++iter) {
        assign_all();
        double movement = 0.0;
        for (int j = 0; j < n_groups; ++j) {
            double sm = 0.0, sx = 0.0;
            int count = 0;
            for (int i = 0; i < c; ++i) {
                if (assign[i] != j) continue;
                sm += stats.min[i];
                sx += stats.max[i];
                ++count;
            }
            if (count == 0) {
                int far = static_cast<int>(std::max_element(d2.begin(), d2.end()) - d2.begin());
                sm = stats.min[far];
                sx = stats.max[far];
                count = 1;
                d2[far] = 0.0;
            }
            const double nm = sm / count;
            const double nx = sx / count;
            movement += (cmin[j] - nm) * (cmin[j] - nm) + (cmax[j] - nx) * (cmax[j] - nx);
            cmin[j] = nm;
            cmax[j] = nx;
        }
        if (movement < 1e-6) break;
    }
    assign_all();

    ReorderEntry e;
    e.perm.reserve(c);
    e.bounds.push_back(0);
    for (int j = 0; j < n_groups; ++j) {
        for (int i = 0; i < c; ++i)
            if (assign[i] == j) e.perm.push_back(i);
        if (static_cast<int>(e.perm.size()) > e.bounds.back()) e.bounds.push_back(static_cast<int>(e.perm.size()));
    }
    validate_entry(e);
    return e;
}

// Per-layer plan for both cache sides. Permutations never cross KV-head
// boundaries: clustering runs independently inside each head slice.
struct ReorderPlan {
    std::vector<ReorderEntry> k_entries;
    std::vector<ReorderEntry> v_entries;

    int n_layers() const { return static_cast<int>(k_entries.size()); }

    bool operator==(const ReorderPlan&) const = default;
};

inline ReorderEntry cluster_per_head(const ChannelStats& stats, int n_kv_heads, int head_dim,
                                     int target_group_size, std::uint64_t seed) {
    SKVQ_REQUIRE(stats.channels() == n_kv_heads * head_dim, "cluster_per_head: shape mismatch");
    const int groups_per_head = std::max(1, head_dim / std::max(1, target_group_size));
    ReorderEntry out;
    out.bounds.push_back(0);
    for (int h = 0; h < n_kv_heads; ++h) {
        ChannelStats sub;
        sub.min.assign(stats.min.begin() + h * head_dim, stats.min.begin() + (h + 1) * head_dim);
        sub.max.assign(stats.max.begin() + h * head_dim, stats.max.begin() + (h + 1) * head_dim);
        ReorderEntry e = cluster_channels(sub, groups_per_head, seed + static_cast<std::uint64_t>(h));
        for (int p : e.perm) out.perm.push_back(h * head_dim + p);
        for (std::size_t g = 1; g < e.bounds.size(); ++g)
            out.bounds.push_back(h * head_dim + e.bounds[g]);
    }
    validate_entry(out);
    return out;
}

namespace detail {

inline void check_headwise(const std::vector<int>& perm, int head_dim) {
    for (std::size_t i = 0; i < perm.size(); ++i)
        SKVQ_REQUIRE(perm[i] / head_dim == static_cast<int>(i) / head_dim,
                     "fuse_into_weights: permutation crosses a KV head boundary");
}

} // namespace detail

// Weights are stored [out_dim, in_dim] and projections run as x * W^T, so a
// permutation of output channels is a row gather. The K permutation also
// applies to every query head that attends to that KV head, and the V
// permutation is undone on W_o's input columns, which keeps full-precision
// attention output unchanged.
inline void fuse_into_weights(const ReorderEntry& k_entry, const ReorderEntry& v_entry, Mat& w_q,
                              Mat& w_k, Mat& w_v, Mat& w_o, int n_heads, int n_kv_heads,
                              int head_dim) {
    const int kv_dim = n_kv_heads * head_dim;
    const int d = n_heads * head_dim;
    SKVQ_REQUIRE(k_entry.channels() == kv_dim && v_entry.channels() == kv_dim,
                 "fuse_into_weights: plan channel count mismatch");
    SKVQ_REQUIRE(w_k.rows == kv_dim && w_v.rows == kv_dim && w_q.rows == d && w_o.cols == d,
                 "fuse_into_weights: weight shape mismatch");
    SKVQ_REQUIRE(n_heads % n_kv_heads == 0, "fuse_into_weights: head counts incompatible");
    detail::check_headwise(k_entry.perm, head_dim);
    detail::check_headwise(v_entry.perm, head_dim);

    auto gather_rows = [](const Mat& w, const std::vector<int>& perm) {
        Mat out(w.rows, w.cols);
        for (int r = 0; r < w.rows; ++r) {
            auto src = w.row(perm[r]);
            std::copy(src.begin(), src.end(), out.row(r).begin());
        }
        return out;
    };

    w_k = gather_rows(w_k, k_entry.perm);
    w_v = gather_rows(w_v, v_entry.perm);

    const int q_per_kv = n_heads / n_kv_heads;
    std::vector<int> q_perm(d);
    std::vector<int> o_perm(d);
    for (int h = 0; h < n_heads; ++h) {
        const int kv_head = h / q_per_kv;
        for (int i = 0; i < head_dim; ++i) {
            const int local_k = k_entry.perm[kv_head * head_dim + i] - kv_head * head_dim;
            const int local_v = v_entry.perm[kv_head * head_dim + i] - kv_head * head_dim;
            q_perm[h * head_dim + i] = h * head_dim + local_k;
            o_perm[h * head_dim + i] = h * head_dim + local_v;
        }
    }
    w_q = gather_rows(w_q, q_perm);

    Mat o_fused(w_o.rows, w_o.cols);
    for (int r = 0; r < w_o.rows; ++r)
        for (int c = 0; c < w_o.cols; ++c) o_fused.at(r, c) = w_o.at(r, o_perm[c]);
    w_o = o_fused;
}

} // namespace skvq
