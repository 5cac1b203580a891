// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Run configuration shared by the command-line tools. The on-disk format is
// a flat key=value text file; command-line overrides use the same key=value
// syntax. Every knob has a named key, and serialize/parse round-trip to the
// identical struct (floats are printed with enough digits to survive).

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "skvq/calibration.hpp"
#include "skvq/common.hpp"

namespace skvq {

struct RunConfig {
    std::string model = "synth:1";
    std::string artifact;
    std::string dataset;
    std::string out;
    std::string strategy = "skvq";
    std::string bits_key = "2";
    std::string bits_value = "2";
    int group_size = 32;
    std::string param_format = "fp16";
    int window = 64;
    long sink = 5;
    std::uint64_t seed = 1;
    int calib_seqs = 8;
    int calib_len = 512;
    int eval_seqs = 3;
    int eval_len = 192;
    std::vector<int> prompt;
    int prompt_len = 16;
    int n_new = 32;
    std::vector<float> alpha_grid = default_alpha_grid();
    std::vector<int> batches = {1, 64, 128};
    std::vector<long> seqs = {32000, 128000, 200000};

    bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> parts;
    if (trim(s).empty()) return parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(trim(item));
    return parts;
}

template <typename T>
inline T parse_number(const std::string& s, const std::string& key) {
    std::stringstream ss(s);
    T v{};
    ss >> v;
    SKVQ_REQUIRE(!ss.fail() && ss.eof(), "config: bad value for " + key + ": '" + s + "'");
    return v;
}

inline std::string format_float(float v) {
    std::ostringstream ss;
    ss.precision(9);
    ss << v;
    return ss.str();
}

template <typename T>
inline std::string join_numbers(const std::vector<T>& v) {
    std::ostringstream ss;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) ss << ',';
        if constexpr (std::is_same_v<T, float>) {
            ss << format_float(v[i]);
        } else {
            ss << v[i];
        }
    }
    return ss.str();
}

} // namespace detail

inline void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    using detail::parse_number;
    if (key == "model") {
        cfg.model = value;
    } else if (key == "artifact") {
        cfg.artifact = value;
    } else if (key == "dataset") {
        cfg.dataset = value;
    } else if (key == "out") {
        cfg.out = value;
    } else if (key == "strategy") {
        cfg.strategy = value;
    } else if (key == "bits_key") {
        cfg.bits_key = value;
    } else if (key == "bits_value") {
        cfg.bits_value = value;
    } else if (key == "group_size") {
        cfg.group_size = parse_number<int>(value, key);
    } else if (key == "param_format") {
        cfg.param_format = value;
    } else if (key == "window") {
        cfg.window = parse_number<int>(value, key);
    } else if (key == "sink") {
        cfg.sink = parse_number<long>(value, key);
    } else if (key == "seed") {
        cfg.seed = parse_number<std::uint64_t>(value, key);
    } else if (key == "calib_seqs") {
        cfg.calib_seqs = parse_number<int>(value, key);
    } else if (key == "calib_len") {
        cfg.calib_len = parse_number<int>(value, key);
    } else if (key == "eval_seqs") {
        cfg.eval_seqs = parse_number<int>(value, key);
    } else if (key == "eval_len") {
        cfg.eval_len = parse_number<int>(value, key);
    } else if (key == "prompt") {
        cfg.prompt.clear();
        for (const auto& p : detail::split_list(value))
            cfg.prompt.push_back(parse_number<int>(p, key));
    } else if (key == "prompt_len") {
        cfg.prompt_len = parse_number<int>(value, key);
    } else if (key == "n_new") {
        cfg.n_new = parse_number<int>(value, key);
    } else if (key == "alpha_grid") {
        cfg.alpha_grid.clear();
        for (const auto& p : detail::split_list(value))
            cfg.alpha_grid.push_back(parse_number<float>(p, key));
    } else if (key == "batches") {
        cfg.batches.clear();
        for (const auto& p : detail::split_list(value))
            cfg.batches.push_back(parse_number<int>(p, key));
    } else if (key == "seqs") {
        cfg.seqs.clear();
        for (const auto& p : detail::split_list(value))
            cfg.seqs.push_back(parse_number<long>(p, key));
    } else {
        fail("config: unknown key '" + key + "'");
    }
}

inline void apply_config_line(RunConfig& cfg, const std::string& line) {
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') return;
    const std::size_t eq = t.find('=');
    SKVQ_REQUIRE(eq != std::string::npos, "config: expected key=value, got '" + t + "'");
    set_config_key(cfg, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
}

inline RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) apply_config_line(cfg, line);
    return cfg;
}

inline std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream ss;
    ss << "model=" << cfg.model << '\n';
    ss << "artifact=" << cfg.artifact << '\n';
    ss << "dataset=" << cfg.dataset << '\n';
    ss << "out=" << cfg.out << '\n';
    ss << "strategy=" << cfg.strategy << '\n';
    ss << "bits_key=" << cfg.bits_key << '\n';
    ss << "bits_value=" << cfg.bits_value << '\n';
    ss << "group_size=" << cfg.group_size << '\n';
    ss << "param_format=" << cfg.param_format << '\n';
    ss << "window=" << cfg.window << '\n';
    ss << "sink=" << cfg.sink << '\n';
    ss << "seed=" << cfg.seed << '\n';
    ss << "calib_seqs=" << cfg.calib_seqs << '\n';
    ss << "calib_len=" << cfg.calib_len << '\n';
    ss << "eval_seqs=" << cfg.eval_seqs << '\n';
    ss << "eval_len=" << cfg.eval_len << '\n';
    ss << "prompt=" << detail::join_numbers(cfg.prompt) << '\n';
    ss << "prompt_len=" << cfg.prompt_len << '\n';
    ss << "n_new=" << cfg.n_new << '\n';
    ss << "alpha_grid=" << detail::join_numbers(cfg.alpha_grid) << '\n';
    ss << "batches=" << detail::join_numbers(cfg.batches) << '\n';
    ss << "seqs=" << detail::join_numbers(cfg.seqs) << '\n';
    return ss.str();
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    SKVQ_REQUIRE(in.is_open(), "cannot open for reading: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

} // namespace skvq
