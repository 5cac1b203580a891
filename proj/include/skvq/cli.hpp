// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Command-line front end with four subcommands:
//   calibrate  fit a reorder plan and clip schedule, write the artifact
//   generate   greedy decode with a quantized sliding cache
//   eval       compare strategies, print and optionally save the CSV
//   roofline   analytic memory/latency table for datacenter shapes
//
// Arguments are `key=value` pairs (see config.hpp) plus an optional
// `--config <file>` read before the overrides. Errors print one line to
// stderr and exit nonzero.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "skvq/artifact.hpp"
#include "skvq/calibration.hpp"
#include "skvq/config.hpp"
#include "skvq/eval.hpp"
#include "skvq/model.hpp"
#include "skvq/roofline.hpp"

namespace skvq {

inline std::string cli_usage() {
    return "usage: skvq <calibrate|generate|eval|roofline> [--config FILE] [key=value ...]\n"
           "\n"
           "common keys: model=PATH|synth:SEED|synth-het:SEED  seed=N\n"
           "quantization: bits_key=2 bits_value=2|ternary|16 group_size=32\n"
           "              param_format=fp16|fp8 window=64 sink=5\n"
           "calibrate:    artifact=OUT.skvc calib_seqs=8 calib_len=512\n"
           "              alpha_grid=0.8,...,1.0 dataset=tokens.txt\n"
           "generate:     artifact=IN.skvc strategy=skvq|rtn|rtn-sym|smooth|fp16\n"
           "              prompt=1,2,3 prompt_len=16 n_new=32\n"
           "eval:         strategy=all|ablation|<name> eval_seqs=3 eval_len=192 out=CSV\n"
           "roofline:     batches=1,64,128 seqs=32000,128000,200000 out=CSV\n";
}

// Model specs: a file path, `synth:SEED` for a small random model, or
// `synth-het:SEED` for one with heterogeneous KV channel scales. Both
// synthetic forms accept `:LxD:H:KV:HD:FF:V` overrides after the seed.
inline Model resolve_model(const std::string& spec) {
    const bool synth = spec.rfind("synth:", 0) == 0;
    const bool synth_het = spec.rfind("synth-het:", 0) == 0;
    if (!synth && !synth_het) return load_model(spec);

    const std::string rest = spec.substr(synth ? 6 : 10);
    std::vector<std::string> parts;
    std::stringstream ss(rest);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    SKVQ_REQUIRE(!parts.empty(), "model: synth spec needs a seed");
    const std::uint64_t seed = detail::parse_number<std::uint64_t>(parts[0], "model");

    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 64;
    cfg.n_heads = 4;
    cfg.n_kv_heads = 4;
    cfg.head_dim = 16;
    cfg.d_ff = 128;
    cfg.vocab = 256;
    cfg.use_rope = true;
    if (parts.size() > 1) {
        SKVQ_REQUIRE(parts.size() == 8, "model: synth spec is seed[:L:D:H:KV:HD:FF:V]");
        cfg.n_layers = detail::parse_number<int>(parts[1], "model");
        cfg.d_model = detail::parse_number<int>(parts[2], "model");
        cfg.n_heads = detail::parse_number<int>(parts[3], "model");
        cfg.n_kv_heads = detail::parse_number<int>(parts[4], "model");
        cfg.head_dim = detail::parse_number<int>(parts[5], "model");
        cfg.d_ff = detail::parse_number<int>(parts[6], "model");
        cfg.vocab = detail::parse_number<int>(parts[7], "model");
    }
    return synth_het ? make_heterogeneous_model(cfg, seed) : make_random_model(cfg, seed);
}

// Token dataset: one sequence per line, whitespace-separated ids.
inline CalibrationSet load_token_sequences(const std::string& path) {
    std::ifstream in(path);
    SKVQ_REQUIRE(in.is_open(), "cannot open for reading: " + path);
    CalibrationSet set;
    std::string line;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::vector<int> seq;
        int tok = 0;
        while (ss >> tok) seq.push_back(tok);
        if (!seq.empty()) set.sequences.push_back(std::move(seq));
    }
    SKVQ_REQUIRE(!set.sequences.empty(), "dataset: no sequences in " + path);
    return set;
}

namespace detail {

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    SKVQ_REQUIRE(out.is_open(), "cannot open for writing: " + path);
    out << text;
    SKVQ_REQUIRE(out.good(), "write failed: " + path);
}

inline QuantSpec spec_from(BitsChoice bits, int group_size, ParamFormat fmt,
                           const char* side) {
    SKVQ_REQUIRE(!bits.lossless,
                 std::string("calibrate: ") + side + " side is 16-bit, nothing to calibrate");
    return QuantSpec{bits.width, group_size, fmt};
}

} // namespace detail

inline int cmd_calibrate(const RunConfig& cfg) {
    SKVQ_REQUIRE(!cfg.artifact.empty(), "calibrate: set artifact=<output path>");
    const Model model = resolve_model(cfg.model);
    const ParamFormat fmt = parse_param_format(cfg.param_format);
    const QuantSpec spec_k =
        detail::spec_from(parse_bits(cfg.bits_key), cfg.group_size, fmt, "key");
    const QuantSpec spec_v =
        detail::spec_from(parse_bits(cfg.bits_value), cfg.group_size, fmt, "value");

    const CalibrationSet calib =
        cfg.dataset.empty()
            ? make_random_calibration(model.config, cfg.calib_seqs, cfg.calib_len,
                                      cfg.seed * 7919 + 11)
            : load_token_sequences(cfg.dataset);

    const StatsCapture stats = collect_model_stats(model, calib);
    CalibrationArtifact art;
    art.model_crc = model_checksum(model);
    art.plan = build_plan(stats, model.config, cfg.group_size, cfg.seed);
    const Model fused = fuse_model(model, art.plan);
    const CalibContext ctx = make_calib_context(fused, art.plan, calib);
    art.schedule = calibrate_alpha(ctx, spec_k, spec_v, cfg.alpha_grid);
    const ClipSchedule ones = all_ones_schedule(art.plan, spec_k, spec_v);
    for (const auto& s : stats.k_stats) art.k_smooth.push_back(smoothing_factors(s));
    for (const auto& s : stats.v_stats) art.v_smooth.push_back(smoothing_factors(s));
    save_artifact(art, cfg.artifact);

    std::ostringstream out;
    out.precision(6);
    for (int l = 0; l < model.config.n_layers; ++l) {
        out << "layer " << l << ": loss " << evaluate_clip_loss(ctx, l, ones) << " -> "
            << evaluate_clip_loss(ctx, l, art.schedule) << '\n';
    }
    out << "wrote " << cfg.artifact << " (" << serialize_artifact(art).size()
        << " bytes, model crc " << art.model_crc << ")\n";
    std::cout << out.str();
    return 0;
}

inline int cmd_generate(const RunConfig& cfg) {
    const Model model = resolve_model(cfg.model);
    const StrategyKind kind = parse_strategy(cfg.strategy);

    StrategyRequest req;
    req.kind = kind;
    CalibrationArtifact art;
    if (kind == StrategyKind::group_clip || kind == StrategyKind::smooth) {
        SKVQ_REQUIRE(!cfg.artifact.empty(), "generate: strategy '" + cfg.strategy +
                                                "' needs artifact=<path>; run calibrate first");
        art = load_artifact_for_model(cfg.artifact, model_checksum(model));
        req.bits_k = BitsChoice{false, art.schedule.spec_k.bits};
        req.bits_v = BitsChoice{false, art.schedule.spec_v.bits};
        req.group_size = art.schedule.spec_k.group_size;
        req.fmt = art.schedule.spec_k.param_format;
        if (kind == StrategyKind::group_clip) {
            req.plan = &art.plan;
            req.schedule = &art.schedule;
        } else {
            req.k_smooth = &art.k_smooth;
            req.v_smooth = &art.v_smooth;
        }
    } else if (kind != StrategyKind::lossless) {
        req.bits_k = parse_bits(cfg.bits_key);
        req.bits_v = parse_bits(cfg.bits_value);
        req.group_size = cfg.group_size;
        req.fmt = parse_param_format(cfg.param_format);
    }

    std::vector<int> prompt = cfg.prompt;
    if (prompt.empty()) {
        SKVQ_REQUIRE(cfg.prompt_len >= 1, "generate: prompt_len must be positive");
        Rng rng(cfg.seed * 7919 + 13);
        for (int i = 0; i < cfg.prompt_len; ++i)
            prompt.push_back(static_cast<int>(rng.uniform_int(model.config.vocab)));
    }

    EngineBundle bundle = make_engine_bundle(model, req, cfg.window, cfg.sink);
    const std::vector<int> out_tokens = bundle.engine->generate(prompt, cfg.n_new);

    std::ostringstream out;
    out << "tokens:";
    for (int t : out_tokens) out << ' ' << t;
    out << '\n';
    const long total = bundle.engine->position();
    const auto& mc = model.config;
    const std::uint64_t bits = bundle.engine->stored_cache_bits();
    const double per_elem =
        static_cast<double>(bits) /
        (static_cast<double>(total) * mc.n_layers * (2.0 * mc.kv_dim()));
    out.precision(6);
    out << "declared bits/elem: K=" << bundle.engine->declared_bits_k()
        << " V=" << bundle.engine->declared_bits_v() << '\n';
    out << "cache: " << (bits + 7) / 8 << " bytes for " << total << " tokens, " << mc.n_layers
        << " layers (" << per_elem << " bits/elem stored)\n";
    out << "retained tokens: " << bundle.engine->retained_tokens() << '\n';
    std::cout << out.str();
    return 0;
}

inline int cmd_eval(const RunConfig& cfg) {
    const Model model = resolve_model(cfg.model);
    EvalOptions opts;
    opts.bits_k = parse_bits(cfg.bits_key);
    opts.bits_v = parse_bits(cfg.bits_value);
    opts.group_size = cfg.group_size;
    opts.window = cfg.window;
    opts.sink = cfg.sink;
    opts.calib_seqs = cfg.calib_seqs;
    opts.calib_len = cfg.calib_len;
    opts.eval_seqs = cfg.eval_seqs;
    opts.eval_len = cfg.eval_len;
    opts.alpha_grid = cfg.alpha_grid;
    opts.seed = cfg.seed;

    std::vector<EvalVariant> variants;
    if (cfg.strategy == "all") {
        variants = baseline_suite(cfg.window, cfg.sink);
    } else if (cfg.strategy == "ablation") {
        variants = ablation_ladder(cfg.window, cfg.sink);
    } else {
        const StrategyKind kind = parse_strategy(cfg.strategy);
        const bool full = kind == StrategyKind::group_clip;
        variants.push_back({cfg.strategy, kind, cfg.window, cfg.sink, full, full,
                            parse_param_format(cfg.param_format)});
    }

    EvalContext ctx(model, opts);
    std::vector<EvalRow> rows;
    for (const auto& v : variants) rows.push_back(ctx.run(v));
    const std::string csv = eval_csv(rows);
    std::cout << csv;
    if (!cfg.out.empty()) detail::write_text_file(cfg.out, csv);
    return 0;
}

inline int cmd_roofline(const RunConfig& cfg) {
    RooflineConfig base;
    std::vector<double> batches(cfg.batches.begin(), cfg.batches.end());
    std::vector<double> seqs(cfg.seqs.begin(), cfg.seqs.end());
    const std::vector<RooflineRow> rows =
        report_table(base, batches, seqs, default_kv_variants());
    std::cout << roofline_text(rows);
    if (!cfg.out.empty()) detail::write_text_file(cfg.out, roofline_csv(rows));
    return 0;
}

inline int run_cli(int argc, char** argv) {
    try {
        if (argc < 2) {
            std::cerr << cli_usage();
            return 1;
        }
        const std::string sub = argv[1];
        if (sub == "--help" || sub == "-h" || sub == "help") {
            std::cout << cli_usage();
            return 0;
        }

        RunConfig cfg;
        std::vector<std::string> overrides;
        std::string config_path;
        for (int i = 2; i < argc; ++i) {
            const std::string arg = argv[i];
            if (arg == "--config" || arg == "-c") {
                SKVQ_REQUIRE(i + 1 < argc, "cli: --config needs a file argument");
                config_path = argv[++i];
            } else if (arg.rfind("--config=", 0) == 0) {
                config_path = arg.substr(9);
            } else {
                SKVQ_REQUIRE(arg.find('=') != std::string::npos,
                             "cli: expected key=value, got '" + arg + "'");
                overrides.push_back(arg);
            }
        }
        if (!config_path.empty()) cfg = load_config(config_path);
        for (const auto& o : overrides) apply_config_line(cfg, o);

        if (sub == "calibrate") return cmd_calibrate(cfg);
        if (sub == "generate") return cmd_generate(cfg);
        if (sub == "eval") return cmd_eval(cfg);
        if (sub == "roofline") return cmd_roofline(cfg);
        fail("cli: unknown subcommand '" + sub + "'");
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace skvq
