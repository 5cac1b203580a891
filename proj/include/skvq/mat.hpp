// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Row-major float matrix plus the handful of dense ops the engine needs.
// Everything runs in f32 with double accumulators where it matters.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "skvq/common.hpp"

namespace skvq {

struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0f) {
        SKVQ_REQUIRE(r >= 0 && c >= 0, "Mat: negative shape");
    }

    float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    std::span<float> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols,
                                           static_cast<std::size_t>(cols)}; }
    std::span<const float> row(int r) const {
        return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
    }

    bool operator==(const Mat&) const = default;
};

// out = a * b
inline Mat matmul(const Mat& a, const Mat& b) {
    SKVQ_REQUIRE(a.cols == b.rows, "matmul: inner dimensions disagree");
    Mat out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            const float aik = a.at(i, k);
            if (aik == 0.0f) continue;
            const float* brow = b.data.data() + static_cast<std::size_t>(k) * b.cols;
            float* orow = out.data.data() + static_cast<std::size_t>(i) * b.cols;
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

// out = a * b^T, for projections stored as [out_dim, in_dim]
inline Mat matmul_nt(const Mat& a, const Mat& b) {
    SKVQ_REQUIRE(a.cols == b.cols, "matmul_nt: inner dimensions disagree");
    Mat out(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < b.rows; ++j) {
            double acc = 0.0;
            const float* ar = a.data.data() + static_cast<std::size_t>(i) * a.cols;
            const float* br = b.data.data() + static_cast<std::size_t>(j) * b.cols;
            for (int k = 0; k < a.cols; ++k) acc += static_cast<double>(ar[k]) * br[k];
            out.at(i, j) = static_cast<float>(acc);
        }
    }
    return out;
}

inline double dot(std::span<const float> a, std::span<const float> b) {
    SKVQ_REQUIRE(a.size() == b.size(), "dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
}

// In-place stable softmax over a contiguous span.
inline void softmax_inplace(std::span<float> x) {
    if (x.empty()) return;
    float m = x[0];
    for (float v : x) m = std::max(m, v);
    double sum = 0.0;
    for (float& v : x) {
        v = std::exp(v - m);
        sum += v;
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (float& v : x) v *= inv;
}

// RMSNorm without learned offset: y = x / rms(x) * g
inline void rmsnorm(std::span<const float> x, std::span<const float> gain, std::span<float> out,
                    float eps = 1e-5f) {
    SKVQ_REQUIRE(x.size() == gain.size() && x.size() == out.size(), "rmsnorm: length mismatch");
    double ss = 0.0;
    for (float v : x) ss += static_cast<double>(v) * v;
    const float inv = static_cast<float>(1.0 / std::sqrt(ss / x.size() + eps));
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * gain[i];
}

inline float silu(float x) { return x / (1.0f + std::exp(-x)); }

inline double mse(std::span<const float> a, std::span<const float> b) {
    SKVQ_REQUIRE(a.size() == b.size(), "mse: length mismatch");
    if (a.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return acc / a.size();
}

} // namespace skvq
