// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Plain full-precision decode path with a growing fp KV list and no cache
// policy, reorder, or quantization machinery. Serves as the ground truth the
// quantized engine is measured against.

#include <cmath>
#include <vector>

#include "skvq/attention.hpp"
#include "skvq/mat.hpp"
#include "skvq/model.hpp"

namespace skvq {

class ReferenceEngine {
public:
    explicit ReferenceEngine(const Model& model) : model_(model) {
        validate(model.config);
        k_rows_.resize(static_cast<std::size_t>(model.config.n_layers));
        v_rows_.resize(static_cast<std::size_t>(model.config.n_layers));
        if (model.config.use_rope) {
            std::vector<int> id_kv(model.config.kv_dim());
            std::iota(id_kv.begin(), id_kv.end(), 0);
            std::vector<int> id_d(model.config.d_model);
            std::iota(id_d.begin(), id_d.end(), 0);
            k_table_ = make_rope_table(id_kv, model.config.head_dim);
            q_table_ = make_rope_table(id_d, model.config.head_dim);
        }
    }

    void reset() {
        for (auto& l : k_rows_) l.clear();
        for (auto& l : v_rows_) l.clear();
        captures_.clear();
        capture_ = false;
    }

    void enable_capture() {
        capture_ = true;
        captures_.assign(static_cast<std::size_t>(model_.config.n_layers), LayerCapture{});
    }
    const std::vector<LayerCapture>& captures() const { return captures_; }

    long position() const { return static_cast<long>(k_rows_[0].size()); }

    std::vector<float> forward_chunk(std::span<const int> tokens) {
        const auto& cfg = model_.config;
        SKVQ_REQUIRE(!tokens.empty(), "forward_chunk: empty chunk");
        const long p0 = position();
        const int n = static_cast<int>(tokens.size());
        Mat x(n, cfg.d_model);
        for (int i = 0; i < n; ++i) {
            SKVQ_REQUIRE(tokens[i] >= 0 && tokens[i] < cfg.vocab, "forward_chunk: token out of range");
            auto src = model_.embedding.row(tokens[i]);
            std::copy(src.begin(), src.end(), x.row(i).begin());
        }
        for (int l = 0; l < cfg.n_layers; ++l) layer_step(l, x, p0);
        std::vector<float> hidden(cfg.d_model);
        rmsnorm(x.row(n - 1), model_.final_norm, hidden, cfg.norm_eps);
        std::vector<float> logits(cfg.vocab);
        for (int t = 0; t < cfg.vocab; ++t)
            logits[t] = static_cast<float>(dot(hidden, model_.w_lm.row(t)));
        return logits;
    }

    std::vector<int> generate(std::span<const int> prompt, int n_new) {
        SKVQ_REQUIRE(!prompt.empty(), "generate: empty prompt");
        std::vector<int> out(prompt.begin(), prompt.end());
        if (n_new <= 0) return out;
        std::vector<float> logits = forward_chunk(prompt);
        for (int step = 0; step < n_new; ++step) {
            const int next = Engine::argmax(logits);
            out.push_back(next);
            if (step + 1 < n_new) logits = forward_chunk(std::span<const int>(&next, 1));
        }
        return out;
    }

    double perplexity(std::span<const int> tokens) {
        SKVQ_REQUIRE(tokens.size() >= 2, "perplexity: need at least two tokens");
        double nll = 0.0;
        for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
            std::vector<float> logits = forward_chunk(std::span<const int>(&tokens[t], 1));
            nll -= Engine::log_softmax_at(logits, tokens[t + 1]);
        }
        return std::exp(nll / static_cast<double>(tokens.size() - 1));
    }

private:
    void layer_step(int l, Mat& x, long p0) {
        const auto& cfg = model_.config;
        const auto& lw = model_.layers[l];
        const int n = x.rows;

        Mat xn(n, cfg.d_model);
        for (int i = 0; i < n; ++i) rmsnorm(x.row(i), lw.attn_norm, xn.row(i), cfg.norm_eps);
        Mat q = matmul_nt(xn, lw.w_q);
        Mat k = matmul_nt(xn, lw.w_k);
        Mat v = matmul_nt(xn, lw.w_v);
        if (cfg.use_rope) {
            for (int i = 0; i < n; ++i) {
                apply_rope(q.row(i), q_table_, p0 + i, cfg.head_dim);
                apply_rope(k.row(i), k_table_, p0 + i, cfg.head_dim);
            }
        }
        if (capture_) {
            for (int i = 0; i < n; ++i) {
                captures_[l].q.emplace_back(q.row(i).begin(), q.row(i).end());
                captures_[l].k.emplace_back(k.row(i).begin(), k.row(i).end());
                captures_[l].v.emplace_back(v.row(i).begin(), v.row(i).end());
            }
        }
        for (int i = 0; i < n; ++i) {
            k_rows_[l].emplace_back(k.row(i).begin(), k.row(i).end());
            v_rows_[l].emplace_back(v.row(i).begin(), v.row(i).end());
        }

        const int q_per_kv = cfg.n_heads / cfg.n_kv_heads;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
        Mat ctx(n, cfg.d_model);
        std::vector<float> scores;
        for (int i = 0; i < n; ++i) {
            const long t_end = p0 + i + 1;
            for (int h = 0; h < cfg.n_heads; ++h) {
                const int kv_head = h / q_per_kv;
                auto q_slice = std::span<const float>(q.row(i).data() + h * cfg.head_dim,
                                                      static_cast<std::size_t>(cfg.head_dim));
                scores.assign(static_cast<std::size_t>(t_end), 0.0f);
                for (long t = 0; t < t_end; ++t) {
                    auto k_slice = std::span<const float>(
                        k_rows_[l][static_cast<std::size_t>(t)].data() + kv_head * cfg.head_dim,
                        static_cast<std::size_t>(cfg.head_dim));
                    scores[static_cast<std::size_t>(t)] =
                        static_cast<float>(dot(q_slice, k_slice) * inv_sqrt);
                }
                softmax_inplace(scores);
                float* out = ctx.row(i).data() + h * cfg.head_dim;
                for (int c = 0; c < cfg.head_dim; ++c) {
                    double acc = 0.0;
                    for (long t = 0; t < t_end; ++t)
                        acc += static_cast<double>(scores[static_cast<std::size_t>(t)]) *
                               v_rows_[l][static_cast<std::size_t>(t)][static_cast<std::size_t>(
                                   kv_head * cfg.head_dim + c)];
                    out[c] = static_cast<float>(acc);
                }
            }
        }
        Mat attn = matmul_nt(ctx, lw.w_o);
        if (capture_) {
            for (int i = 0; i < n; ++i)
                captures_[l].attn_out.emplace_back(attn.row(i).begin(), attn.row(i).end());
        }
        for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += attn.data[i];

        Mat xm(n, cfg.d_model);
        for (int i = 0; i < n; ++i) rmsnorm(x.row(i), lw.mlp_norm, xm.row(i), cfg.norm_eps);
        Mat gate = matmul_nt(xm, lw.w_gate);
        Mat up = matmul_nt(xm, lw.w_up);
        for (std::size_t i = 0; i < gate.data.size(); ++i)
            gate.data[i] = silu(gate.data[i]) * up.data[i];
        Mat down = matmul_nt(gate, lw.w_down);
        for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += down.data[i];
    }

    const Model& model_;
    std::vector<std::vector<std::vector<float>>> k_rows_;
    std::vector<std::vector<std::vector<float>>> v_rows_;
    RopePairTable k_table_;
    RopePairTable q_table_;
    bool capture_ = false;
    std::vector<LayerCapture> captures_;
};

} // namespace skvq
