// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "skvq/common.hpp"

namespace skvq {

// Seeded generator with hand-rolled distributions. std::*_distribution output
// is implementation-defined, so everything that must reproduce across
// toolchains goes through this wrapper instead.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint32_t uniform_int(std::uint32_t n) {
        SKVQ_REQUIRE(n > 0, "uniform_int: empty range");
        return static_cast<std::uint32_t>(uniform() * n);
    }

    // Box-Muller, one value per call
    double normal() {
        double u1 = 1.0 - uniform(); // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    float normalf(double sigma = 1.0) { return static_cast<float>(normal() * sigma); }

    // index sampled proportionally to weights (all >= 0, sum > 0)
    std::size_t pick_weighted(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        SKVQ_REQUIRE(total > 0.0, "pick_weighted: zero total weight");
        double r = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (r < acc) return i;
        }
        return weights.size() - 1;
    }

private:
    std::mt19937_64 gen_;
};

} // namespace skvq
