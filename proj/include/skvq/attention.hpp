// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Decode engine: pre-norm transformer blocks over a sliding quantized KV
// cache. Per layer and chunk the order is append -> attend -> advance, so
// attention for new tokens always reads the just-appended rows at full
// precision and quantization happens only after they leave the window.
//
// Rotary embeddings are applied to Q/K right after projection. Because the
// channel permutation is fused into the projections, each original rotation
// pair (2j, 2j+1) lives at permuted positions; the tables below track those
// positions so the rotation acts on original pairs exactly.

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <vector>

#include "skvq/kv_cache.hpp"
#include "skvq/mat.hpp"
#include "skvq/model.hpp"
#include "skvq/reorder.hpp"
#include "skvq/strategy.hpp"

namespace skvq {

struct RopePairTable {
    struct Entry {
        int pos_a;
        int pos_b;
        int pair;
    };
    std::vector<Entry> entries;
};

inline RopePairTable make_rope_table(const std::vector<int>& perm, int head_dim) {
    SKVQ_REQUIRE(head_dim % 2 == 0, "rope: head_dim must be even");
    std::vector<int> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int>(i);
    RopePairTable t;
    const int n_heads = static_cast<int>(perm.size()) / head_dim;
    for (int h = 0; h < n_heads; ++h)
        for (int j = 0; j < head_dim / 2; ++j) {
            const int a = h * head_dim + 2 * j;
            t.entries.push_back({inv[a], inv[a + 1], j});
        }
    return t;
}

inline void apply_rope(std::span<float> row, const RopePairTable& table, long pos, int head_dim,
                       double base = 10000.0) {
    for (const auto& e : table.entries) {
        const double theta = pos * std::pow(base, -2.0 * e.pair / head_dim);
        const float c = static_cast<float>(std::cos(theta));
        const float s = static_cast<float>(std::sin(theta));
        const float xa = row[e.pos_a];
        const float xb = row[e.pos_b];
        row[e.pos_a] = xa * c - xb * s;
        row[e.pos_b] = xa * s + xb * c;
    }
}

// Per-layer rows captured during a forward pass, for calibration and for
// attention-output error measurements.
struct LayerCapture {
    std::vector<std::vector<float>> q;
    std::vector<std::vector<float>> k;
    std::vector<std::vector<float>> v;
    std::vector<std::vector<float>> attn_out;
};

class Engine {
public:
    Engine(const Model& model, std::vector<std::unique_ptr<QuantStrategy>> k_strats,
           std::vector<std::unique_ptr<QuantStrategy>> v_strats,
           std::vector<std::unique_ptr<FilterRule>> filters, int window,
           const ReorderPlan* plan = nullptr)
        : model_(model),
          k_strats_(std::move(k_strats)),
          v_strats_(std::move(v_strats)),
          filters_(std::move(filters)),
          window_(window) {
        const auto& cfg = model.config;
        validate(cfg);
        SKVQ_REQUIRE(k_strats_.size() == static_cast<std::size_t>(cfg.n_layers) &&
                         v_strats_.size() == k_strats_.size(),
                     "Engine: one strategy pair per layer required");
        if (plan) {
            SKVQ_REQUIRE(plan->n_layers() == cfg.n_layers, "Engine: plan layer count mismatch");
        }
        if (cfg.use_rope) {
            std::vector<int> identity(cfg.kv_dim());
            std::iota(identity.begin(), identity.end(), 0);
            for (int l = 0; l < cfg.n_layers; ++l) {
                const std::vector<int>& k_perm = plan ? plan->k_entries[l].perm : identity;
                k_tables_.push_back(make_rope_table(k_perm, cfg.head_dim));
                q_tables_.push_back(make_rope_table(q_side_perm(k_perm, cfg), cfg.head_dim));
            }
        }
        for (int l = 0; l < cfg.n_layers; ++l)
            caches_.emplace_back(window_, k_strats_[l].get(), v_strats_[l].get());
        filter_ptrs_.reserve(filters_.size());
        for (const auto& f : filters_) filter_ptrs_.push_back(f.get());
    }

    const Model& model() const { return model_; }
    int window() const { return window_; }
    long position() const { return caches_.empty() ? 0 : caches_[0].total(); }
    const SlidingKvCache& cache(int layer) const { return caches_[layer]; }
    SlidingKvCache& cache(int layer) { return caches_[layer]; }

    void reset() {
        caches_.clear();
        for (std::size_t l = 0; l < k_strats_.size(); ++l)
            caches_.emplace_back(window_, k_strats_[l].get(), v_strats_[l].get());
        captures_.clear();
        capture_ = false;
    }

    void enable_capture() {
        capture_ = true;
        captures_.assign(static_cast<std::size_t>(model_.config.n_layers), LayerCapture{});
    }
    const std::vector<LayerCapture>& captures() const { return captures_; }

    // Runs one chunk (prefill or a single decode token) and returns the
    // logits row for the chunk's last token.
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
            const int next = argmax(logits);
            out.push_back(next);
            if (step + 1 < n_new) logits = forward_chunk(std::span<const int>(&next, 1));
        }
        return out;
    }

    // Teacher-forced next-token perplexity, decoding token by token so the
    // sliding-window quantization actually engages.
    double perplexity(std::span<const int> tokens) {
        SKVQ_REQUIRE(tokens.size() >= 2, "perplexity: need at least two tokens");
        double nll = 0.0;
        for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
            std::vector<float> logits = forward_chunk(std::span<const int>(&tokens[t], 1));
            nll -= log_softmax_at(logits, tokens[t + 1]);
        }
        return std::exp(nll / static_cast<double>(tokens.size() - 1));
    }

    std::uint64_t stored_cache_bits() const {
        std::uint64_t bits = 0;
        for (const auto& c : caches_) bits += c.stored_bits();
        return bits;
    }

    long retained_tokens() const {
        long n = 0;
        for (const auto& c : caches_) n += c.retained_tokens();
        return n;
    }

    double declared_bits_k() const { return k_strats_[0]->declared_bits(); }
    double declared_bits_v() const { return v_strats_[0]->declared_bits(); }

    static int argmax(std::span<const float> logits) {
        int best = 0;
        for (int i = 1; i < static_cast<int>(logits.size()); ++i)
            if (logits[i] > logits[best]) best = i;
        return best;
    }

    static double log_softmax_at(std::span<const float> logits, int index) {
        SKVQ_REQUIRE(index >= 0 && index < static_cast<int>(logits.size()),
                     "log_softmax_at: index out of range");
        double m = logits[0];
        for (float v : logits) m = std::max(m, static_cast<double>(v));
        double sum = 0.0;
        for (float v : logits) sum += std::exp(static_cast<double>(v) - m);
        return (logits[index] - m) - std::log(sum);
    }

    static std::vector<int> q_side_perm(const std::vector<int>& k_perm, const ModelConfig& cfg) {
        const int q_per_kv = cfg.n_heads / cfg.n_kv_heads;
        std::vector<int> q_perm(static_cast<std::size_t>(cfg.d_model));
        for (int h = 0; h < cfg.n_heads; ++h) {
            const int kv_head = h / q_per_kv;
            for (int i = 0; i < cfg.head_dim; ++i) {
                const int local = k_perm[kv_head * cfg.head_dim + i] - kv_head * cfg.head_dim;
                q_perm[h * cfg.head_dim + i] = h * cfg.head_dim + local;
            }
        }
        return q_perm;
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
                apply_rope(q.row(i), q_tables_[l], p0 + i, cfg.head_dim);
                apply_rope(k.row(i), k_tables_[l], p0 + i, cfg.head_dim);
            }
        }
        if (capture_) {
            for (int i = 0; i < n; ++i) {
                captures_[l].q.emplace_back(q.row(i).begin(), q.row(i).end());
                captures_[l].k.emplace_back(k.row(i).begin(), k.row(i).end());
                captures_[l].v.emplace_back(v.row(i).begin(), v.row(i).end());
            }
        }

        caches_[l].append(k, v);
        Mat k_all, v_all;
        caches_[l].materialize(k_all, v_all);

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
                        k_all.row(static_cast<int>(t)).data() + kv_head * cfg.head_dim,
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
                               v_all.at(static_cast<int>(t), kv_head * cfg.head_dim + c);
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

        caches_[l].advance(filter_ptrs_);
    }

    const Model& model_;
    std::vector<std::unique_ptr<QuantStrategy>> k_strats_;
    std::vector<std::unique_ptr<QuantStrategy>> v_strats_;
    std::vector<std::unique_ptr<FilterRule>> filters_;
    std::vector<const FilterRule*> filter_ptrs_;
    int window_;
    std::vector<SlidingKvCache> caches_;
    std::vector<RopePairTable> k_tables_;
    std::vector<RopePairTable> q_tables_;
    bool capture_ = false;
    std::vector<LayerCapture> captures_;
};

} // namespace skvq
