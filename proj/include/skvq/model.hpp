// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Desk-scale pre-norm transformer: RMSNorm, multi-head or grouped-query
// attention, SiLU gated MLP, tied-free LM head. Weights come from a seeded
// random init or from the SKVM tensor file format below.
//
// SKVM file layout (all integers little-endian):
//   magic "SKVM", version u16
//   config: n_layers, d_model, n_heads, n_kv_heads, head_dim, d_ff, vocab,
//           use_rope u8, norm_eps f32
//   tensor table: count u32, then per tensor {name str, rows u32, cols u32,
//           offset u64 into the data section}
//   data section: raw little-endian f32 values
//   trailing CRC32 over everything before the checksum field

#include <cstdint>
#include <string>
#include <vector>

#include "skvq/common.hpp"
#include "skvq/io.hpp"
#include "skvq/mat.hpp"
#include "skvq/rng.hpp"

namespace skvq {

struct ModelConfig {
    int n_layers = 2;
    int d_model = 64;
    int n_heads = 4;
    int n_kv_heads = 4;
    int head_dim = 16;
    int d_ff = 128;
    int vocab = 256;
    bool use_rope = false;
    float norm_eps = 1e-5f;

    int kv_dim() const { return n_kv_heads * head_dim; }

    bool operator==(const ModelConfig&) const = default;
};

inline void validate(const ModelConfig& cfg) {
    SKVQ_REQUIRE(cfg.n_layers >= 1 && cfg.vocab >= 2 && cfg.d_ff >= 1, "ModelConfig: bad sizes");
    SKVQ_REQUIRE(cfg.d_model == cfg.n_heads * cfg.head_dim, "ModelConfig: d_model != n_heads*head_dim");
    SKVQ_REQUIRE(cfg.n_kv_heads >= 1 && cfg.n_heads % cfg.n_kv_heads == 0,
                 "ModelConfig: n_heads must be a multiple of n_kv_heads");
}

struct LayerWeights {
    std::vector<float> attn_norm;
    Mat w_q, w_k, w_v, w_o;
    std::vector<float> mlp_norm;
    Mat w_gate, w_up, w_down;
};

struct Model {
    ModelConfig config;
    Mat embedding;
    std::vector<LayerWeights> layers;
    std::vector<float> final_norm;
    Mat w_lm;

    const LayerWeights& layer(int i) const { return layers[i]; }
};

inline Model make_random_model(const ModelConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    Model m;
    m.config = cfg;
    Rng rng(seed);
    auto fill = [&](Mat& w, int rows, int cols) {
        w = Mat(rows, cols);
        const float sigma = 1.0f / std::sqrt(static_cast<float>(cols));
        for (float& v : w.data) v = rng.normalf(sigma);
    };
    fill(m.embedding, cfg.vocab, cfg.d_model);
    m.layers.resize(cfg.n_layers);
    for (auto& lw : m.layers) {
        lw.attn_norm.assign(cfg.d_model, 1.0f);
        fill(lw.w_q, cfg.d_model, cfg.d_model);
        fill(lw.w_k, cfg.kv_dim(), cfg.d_model);
        fill(lw.w_v, cfg.kv_dim(), cfg.d_model);
        fill(lw.w_o, cfg.d_model, cfg.d_model);
        lw.mlp_norm.assign(cfg.d_model, 1.0f);
        fill(lw.w_gate, cfg.d_ff, cfg.d_model);
        fill(lw.w_up, cfg.d_ff, cfg.d_model);
        fill(lw.w_down, cfg.d_model, cfg.d_ff);
    }
    m.final_norm.assign(cfg.d_model, 1.0f);
    fill(m.w_lm, cfg.vocab, cfg.d_model);
    return m;
}

namespace detail {

struct NamedTensor {
    std::string name;
    const Mat* mat;
};

inline std::vector<NamedTensor> tensor_table(const Model& m, std::vector<Mat>& norm_storage) {
    norm_storage.clear();
    norm_storage.reserve(m.layers.size() * 2 + 1);
    std::vector<NamedTensor> table;
    table.push_back({"embedding", &m.embedding});
    auto as_mat = [&](const std::vector<float>& v) {
        Mat w(1, static_cast<int>(v.size()));
        w.data = v;
        norm_storage.push_back(std::move(w));
        return &norm_storage.back();
    };
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const auto& lw = m.layers[i];
        const std::string p = "layer." + std::to_string(i) + ".";
        table.push_back({p + "attn_norm", as_mat(lw.attn_norm)});
        table.push_back({p + "w_q", &lw.w_q});
        table.push_back({p + "w_k", &lw.w_k});
        table.push_back({p + "w_v", &lw.w_v});
        table.push_back({p + "w_o", &lw.w_o});
        table.push_back({p + "mlp_norm", as_mat(lw.mlp_norm)});
        table.push_back({p + "w_gate", &lw.w_gate});
        table.push_back({p + "w_up", &lw.w_up});
        table.push_back({p + "w_down", &lw.w_down});
    }
    table.push_back({"final_norm", as_mat(m.final_norm)});
    table.push_back({"w_lm", &m.w_lm});
    return table;
}

} // namespace detail

inline std::vector<std::uint8_t> serialize_model(const Model& m) {
    validate(m.config);
    ByteWriter w;
    w.bytes("SKVM", 4);
    w.u16(1);
    const auto& c = m.config;
    w.i32(c.n_layers);
    w.i32(c.d_model);
    w.i32(c.n_heads);
    w.i32(c.n_kv_heads);
    w.i32(c.head_dim);
    w.i32(c.d_ff);
    w.i32(c.vocab);
    w.u8(c.use_rope ? 1 : 0);
    w.f32(c.norm_eps);

    std::vector<Mat> norms;
    const auto table = detail::tensor_table(m, norms);
    w.u32(static_cast<std::uint32_t>(table.size()));
    std::uint64_t offset = 0;
    for (const auto& t : table) {
        w.str(t.name);
        w.u32(static_cast<std::uint32_t>(t.mat->rows));
        w.u32(static_cast<std::uint32_t>(t.mat->cols));
        w.u64(offset);
        offset += t.mat->data.size();
    }
    for (const auto& t : table)
        for (float v : t.mat->data) w.f32(v);
    w.u32(w.crc_from(0));
    return w.buffer();
}

inline Model parse_model(std::vector<std::uint8_t> data) {
    SKVQ_REQUIRE(data.size() > 4, "model file: too short");
    ByteReader r(std::move(data));
    {
        const auto& buf = r.buffer();
        std::uint32_t expect = 0;
        for (int b = 0; b < 4; ++b)
            expect |= static_cast<std::uint32_t>(buf[buf.size() - 4 + b]) << (8 * b);
        SKVQ_REQUIRE(expect == r.crc_range(0, buf.size() - 4), "model file: checksum mismatch");
    }
    const auto magic = r.bytes(4);
    SKVQ_REQUIRE(std::string(magic.begin(), magic.end()) == "SKVM", "model file: bad magic");
    SKVQ_REQUIRE(r.u16() == 1, "model file: unsupported version");
    Model m;
    auto& c = m.config;
    c.n_layers = r.i32();
    c.d_model = r.i32();
    c.n_heads = r.i32();
    c.n_kv_heads = r.i32();
    c.head_dim = r.i32();
    c.d_ff = r.i32();
    c.vocab = r.i32();
    c.use_rope = r.u8() != 0;
    c.norm_eps = r.f32();
    validate(c);

    struct Entry {
        std::string name;
        int rows, cols;
        std::uint64_t offset;
    };
    const std::uint32_t count = r.u32();
    std::vector<Entry> entries(count);
    for (auto& e : entries) {
        e.name = r.str();
        e.rows = static_cast<int>(r.u32());
        e.cols = static_cast<int>(r.u32());
        e.offset = r.u64();
    }
    const std::size_t data_start = r.pos();
    const std::size_t data_len = (r.buffer().size() - 4 - data_start) / 4;
    auto read_mat = [&](const std::string& name) {
        for (const auto& e : entries) {
            if (e.name != name) continue;
            const std::size_t n = static_cast<std::size_t>(e.rows) * e.cols;
            SKVQ_REQUIRE(e.offset + n <= data_len, "model file: tensor out of bounds");
            Mat w(e.rows, e.cols);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t at = data_start + (e.offset + i) * 4;
                std::uint32_t bits = 0;
                for (int b = 0; b < 4; ++b)
                    bits |= static_cast<std::uint32_t>(r.buffer()[at + b]) << (8 * b);
                w.data[i] = std::bit_cast<float>(bits);
            }
            return w;
        }
        fail("model file: missing tensor " + name);
    };
    auto read_vec = [&](const std::string& name) {
        Mat w = read_mat(name);
        return w.data;
    };

    m.embedding = read_mat("embedding");
    m.layers.resize(c.n_layers);
    for (int i = 0; i < c.n_layers; ++i) {
        const std::string p = "layer." + std::to_string(i) + ".";
        auto& lw = m.layers[i];
        lw.attn_norm = read_vec(p + "attn_norm");
        lw.w_q = read_mat(p + "w_q");
        lw.w_k = read_mat(p + "w_k");
        lw.w_v = read_mat(p + "w_v");
        lw.w_o = read_mat(p + "w_o");
        lw.mlp_norm = read_vec(p + "mlp_norm");
        lw.w_gate = read_mat(p + "w_gate");
        lw.w_up = read_mat(p + "w_up");
        lw.w_down = read_mat(p + "w_down");
    }
    m.final_norm = read_vec("final_norm");
    m.w_lm = read_mat("w_lm");
    return m;
}

inline void save_model(const Model& m, const std::string& path) {
    ByteWriter w;
    const auto bytes = serialize_model(m);
    w.bytes(bytes.data(), bytes.size());
    w.write_file(path);
}

inline Model load_model(const std::string& path) {
    return parse_model(ByteReader::from_file(path).buffer());
}

// Checksum binding calibration artifacts to the exact model bytes. Covers
// everything before the file's trailing CRC field, so it equals that field;
// hashing the whole file would give the fixed CRC residue for every model.
inline std::uint32_t model_checksum(const Model& m) {
    const auto bytes = serialize_model(m);
    return crc32(bytes.data(), bytes.size() - 4);
}

} // namespace skvq
