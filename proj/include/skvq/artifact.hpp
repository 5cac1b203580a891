// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Calibration artifact: one file binding the reorder plan, clip schedule,
// and smoothing factors to the checksum of the exact model they were
// computed from.
//
// SKVC file layout (little-endian):
//   magic "SKVC", version u16
//   model_crc u32
//   K QuantSpec {bits u8, group_size u32, param_format u8}, V QuantSpec
//   n_layers u32
//   plan: per layer, K then V: {perm count u32, perm u32[], bounds count
//         u32, bounds u32[]}
//   plan_crc u32 over the plan bytes, binding the schedule that follows
//   schedule: search method str, per layer: K alphas {count u32, f32[]},
//         V alphas {count u32, f32[]}
//   smoothing: per layer: K factors {count u32, f32[]}, V factors likewise
//   trailing CRC32 over everything before the checksum field

#include <cstdint>
#include <string>
#include <vector>

#include "skvq/calibration.hpp"
#include "skvq/io.hpp"
#include "skvq/quant.hpp"
#include "skvq/reorder.hpp"

namespace skvq {

struct CalibrationArtifact {
    std::uint32_t model_crc = 0;
    ReorderPlan plan;
    ClipSchedule schedule;
    std::vector<std::vector<float>> k_smooth;
    std::vector<std::vector<float>> v_smooth;

    bool operator==(const CalibrationArtifact&) const = default;
};

namespace detail {

inline void write_spec(ByteWriter& w, const QuantSpec& s) {
    w.u8(static_cast<std::uint8_t>(s.bits));
    w.u32(static_cast<std::uint32_t>(s.group_size));
    w.u8(static_cast<std::uint8_t>(s.param_format));
}

inline QuantSpec read_spec(ByteReader& r) {
    QuantSpec s;
    const std::uint8_t bits = r.u8();
    switch (bits) {
        case 1: s.bits = CodeWidth::b1; break;
        case 2: s.bits = CodeWidth::b2; break;
        case 3: s.bits = CodeWidth::b3; break;
        case 4: s.bits = CodeWidth::b4; break;
        case 8: s.bits = CodeWidth::b8; break;
        case 30: s.bits = CodeWidth::ternary; break;
        default: fail("artifact: unknown code width");
    }
    s.group_size = static_cast<int>(r.u32());
    const std::uint8_t fmt = r.u8();
    SKVQ_REQUIRE(fmt <= 1, "artifact: unknown param format");
    s.param_format = static_cast<ParamFormat>(fmt);
    validate(s);
    return s;
}

inline void write_entry(ByteWriter& w, const ReorderEntry& e) {
    w.u32(static_cast<std::uint32_t>(e.perm.size()));
    for (int p : e.perm) w.u32(static_cast<std::uint32_t>(p));
    w.u32(static_cast<std::uint32_t>(e.bounds.size()));
    for (int b : e.bounds) w.u32(static_cast<std::uint32_t>(b));
}

inline ReorderEntry read_entry(ByteReader& r) {
    ReorderEntry e;
    const std::uint32_t np = r.u32();
    e.perm.resize(np);
    for (auto& p : e.perm) p = static_cast<int>(r.u32());
    const std::uint32_t nb = r.u32();
    e.bounds.resize(nb);
    for (auto& b : e.bounds) b = static_cast<int>(r.u32());
    validate_entry(e);
    return e;
}

inline void write_floats(ByteWriter& w, const std::vector<float>& v) {
    w.u32(static_cast<std::uint32_t>(v.size()));
    for (float x : v) w.f32(x);
}

inline std::vector<float> read_floats(ByteReader& r) {
    std::vector<float> v(r.u32());
    for (float& x : v) x = r.f32();
    return v;
}

} // namespace detail

inline std::vector<std::uint8_t> serialize_artifact(const CalibrationArtifact& a) {
    const int n_layers = a.plan.n_layers();
    SKVQ_REQUIRE(n_layers >= 1, "artifact: empty plan");
    SKVQ_REQUIRE(a.schedule.n_layers() == n_layers &&
                     static_cast<int>(a.schedule.v_alphas.size()) == n_layers,
                 "artifact: schedule layer count mismatch");
    SKVQ_REQUIRE(static_cast<int>(a.k_smooth.size()) == n_layers &&
                     static_cast<int>(a.v_smooth.size()) == n_layers,
                 "artifact: smoothing layer count mismatch");
    for (int l = 0; l < n_layers; ++l) {
        SKVQ_REQUIRE(static_cast<int>(a.schedule.k_alphas[l].size()) ==
                             a.plan.k_entries[l].n_groups() &&
                         static_cast<int>(a.schedule.v_alphas[l].size()) ==
                             a.plan.v_entries[l].n_groups(),
                     "artifact: schedule group count mismatch");
    }

    ByteWriter w;
    w.bytes("SKVC", 4);
    w.u16(1);
    w.u32(a.model_crc);
    detail::write_spec(w, a.schedule.spec_k);
    detail::write_spec(w, a.schedule.spec_v);
    w.u32(static_cast<std::uint32_t>(n_layers));
    const std::size_t plan_start = w.size();
    for (int l = 0; l < n_layers; ++l) {
        detail::write_entry(w, a.plan.k_entries[l]);
        detail::write_entry(w, a.plan.v_entries[l]);
    }
    w.u32(w.crc_from(plan_start));
    w.str(a.schedule.search_method);
    for (int l = 0; l < n_layers; ++l) {
        detail::write_floats(w, a.schedule.k_alphas[l]);
        detail::write_floats(w, a.schedule.v_alphas[l]);
    }
    for (int l = 0; l < n_layers; ++l) {
        detail::write_floats(w, a.k_smooth[l]);
        detail::write_floats(w, a.v_smooth[l]);
    }
    w.u32(w.crc_from(0));
    return w.buffer();
}

inline CalibrationArtifact parse_artifact(std::vector<std::uint8_t> data) {
    SKVQ_REQUIRE(data.size() > 8, "artifact: too short");
    ByteReader r(std::move(data));
    {
        const auto& buf = r.buffer();
        std::uint32_t expect = 0;
        for (int b = 0; b < 4; ++b)
            expect |= static_cast<std::uint32_t>(buf[buf.size() - 4 + b]) << (8 * b);
        SKVQ_REQUIRE(expect == r.crc_range(0, buf.size() - 4), "artifact: checksum mismatch");
    }
    const auto magic = r.bytes(4);
    SKVQ_REQUIRE(std::string(magic.begin(), magic.end()) == "SKVC", "artifact: bad magic");
    SKVQ_REQUIRE(r.u16() == 1, "artifact: unsupported version");
    CalibrationArtifact a;
    a.model_crc = r.u32();
    a.schedule.spec_k = detail::read_spec(r);
    a.schedule.spec_v = detail::read_spec(r);
    const std::uint32_t n_layers = r.u32();
    SKVQ_REQUIRE(n_layers >= 1, "artifact: empty plan");
    const std::size_t plan_start = r.pos();
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        a.plan.k_entries.push_back(detail::read_entry(r));
        a.plan.v_entries.push_back(detail::read_entry(r));
    }
    const std::uint32_t plan_crc = r.u32();
    SKVQ_REQUIRE(plan_crc == r.crc_range(plan_start, r.pos() - 4 - plan_start),
                 "artifact: plan checksum mismatch");
    a.schedule.search_method = r.str();
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        a.schedule.k_alphas.push_back(detail::read_floats(r));
        a.schedule.v_alphas.push_back(detail::read_floats(r));
    }
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        a.k_smooth.push_back(detail::read_floats(r));
        a.v_smooth.push_back(detail::read_floats(r));
    }
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        SKVQ_REQUIRE(static_cast<int>(a.schedule.k_alphas[l].size()) ==
                             a.plan.k_entries[l].n_groups() &&
                         static_cast<int>(a.schedule.v_alphas[l].size()) ==
                             a.plan.v_entries[l].n_groups(),
                     "artifact: schedule group count mismatch");
        for (float x : a.schedule.k_alphas[l])
            SKVQ_REQUIRE(x > 0.0f && x <= 1.0f, "artifact: alpha outside (0,1]");
        for (float x : a.schedule.v_alphas[l])
            SKVQ_REQUIRE(x > 0.0f && x <= 1.0f, "artifact: alpha outside (0,1]");
    }
    return a;
}

inline void save_artifact(const CalibrationArtifact& a, const std::string& path) {
    ByteWriter w;
    const auto bytes = serialize_artifact(a);
    w.bytes(bytes.data(), bytes.size());
    w.write_file(path);
}

inline CalibrationArtifact load_artifact(const std::string& path) {
    return parse_artifact(ByteReader::from_file(path).buffer());
}

inline CalibrationArtifact load_artifact_for_model(const std::string& path,
                                                   std::uint32_t model_crc) {
    CalibrationArtifact a = load_artifact(path);
    SKVQ_REQUIRE(a.model_crc == model_crc, "artifact: model checksum mismatch");
    return a;
}

} // namespace skvq
