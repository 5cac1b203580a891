// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "skvq/kv_cache.hpp"

using skvq::AttentionSinkRule;
using skvq::CodeWidth;
using skvq::FilterRule;
using skvq::GroupClipStrategy;
using skvq::LosslessStrategy;
using skvq::Mat;
using skvq::ParamFormat;
using skvq::QuantSpec;
using skvq::SlidingKvCache;

namespace {

Mat one_row(const std::vector<float>& v) {
    Mat m(1, static_cast<int>(v.size()));
    std::copy(v.begin(), v.end(), m.data.begin());
    return m;
}

std::vector<float> random_row(std::mt19937& rng, int n) {
    std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
    std::vector<float> row(n);
    for (auto& v : row) v = dist(rng);
    return row;
}

std::vector<float> mat_row(const Mat& m, long r) {
    const auto s = m.row(static_cast<int>(r));
    return {s.begin(), s.end()};
}

GroupClipStrategy plain_rtn(int channels, int group_size,
                            CodeWidth bits = CodeWidth::b4,
                            ParamFormat fmt = ParamFormat::fp16) {
    const auto entry = skvq::identity_entry(channels, group_size);
    return {QuantSpec{bits, group_size, fmt}, entry.bounds,
            std::vector<float>(entry.bounds.size() - 1, 1.0f)};
}

class EveryThirdRule : public FilterRule {
public:
    const char* name() const override { return "every-third"; }
    bool retain(long t, std::span<const float>, std::span<const float>, long) const override {
        return t % 3 == 0;
    }
};

} // namespace

TEST(SlidingCache, WindowTracePartitionAndExactness) {
    std::mt19937 rng(2024);
    const int kc = 6, vc = 4, w = 4;
    auto ks = plain_rtn(kc, 3);
    auto vs = plain_rtn(vc, 2);
    SlidingKvCache cache(w, &ks, &vs);
    AttentionSinkRule sink(2);
    const std::vector<const FilterRule*> filters = {&sink};

    std::vector<std::vector<float>> k_orig, v_orig;
    for (long t = 0; t < 11; ++t) {
        k_orig.push_back(random_row(rng, kc));
        v_orig.push_back(random_row(rng, vc));
        cache.append(one_row(k_orig.back()), one_row(v_orig.back()));
        cache.advance(filters);

        const long total = t + 1;
        const long processed = std::max<long>(0, total - w);
        EXPECT_EQ(cache.total(), total);
        EXPECT_EQ(cache.processed(), processed);
        const long expect_ret = std::min<long>(2, processed);
        EXPECT_EQ(cache.retained_tokens(), expect_ret);
        EXPECT_EQ(cache.quantized_tokens(), processed - expect_ret);
        EXPECT_EQ(cache.fp_tokens(), total - cache.quantized_tokens());

        Mat k_all, v_all;
        cache.materialize(k_all, v_all);
        ASSERT_EQ(k_all.rows, total);
        for (long r = total - std::min<long>(w, total); r < total; ++r) {
            EXPECT_EQ(mat_row(k_all, r), k_orig[r]) << "window token " << r << " at step " << t;
            EXPECT_EQ(mat_row(v_all, r), v_orig[r]) << "window token " << r << " at step " << t;
        }
        for (const auto& ret : cache.retained()) {
            EXPECT_LT(ret.index, 2);
            EXPECT_EQ(ret.k, k_orig[ret.index]);
            EXPECT_EQ(ret.v, v_orig[ret.index]);
        }
    }

    EXPECT_EQ(cache.total(), 11);
    EXPECT_EQ(cache.processed(), 7);
    EXPECT_EQ(cache.retained_tokens(), 2);
    EXPECT_EQ(cache.quantized_tokens(), 5);
}

TEST(SlidingCache, SplitAppendMatchesWholeAppend) {
    std::mt19937 rng(5);
    const int c = 8;
    auto ks = plain_rtn(c, 4);
    auto vs = plain_rtn(c, 4);
    Mat k(5, c), v(5, c);
    for (int r = 0; r < 5; ++r) {
        const auto kr = random_row(rng, c);
        const auto vr = random_row(rng, c);
        std::copy(kr.begin(), kr.end(), k.row(r).begin());
        std::copy(vr.begin(), vr.end(), v.row(r).begin());
    }

    SlidingKvCache whole(2, &ks, &vs);
    whole.append(k, v);
    whole.advance({});

    SlidingKvCache split(2, &ks, &vs);
    Mat k3(3, c), v3(3, c), k2(2, c), v2(2, c);
    std::copy(k.data.begin(), k.data.begin() + 3 * c, k3.data.begin());
    std::copy(v.data.begin(), v.data.begin() + 3 * c, v3.data.begin());
    std::copy(k.data.begin() + 3 * c, k.data.end(), k2.data.begin());
    std::copy(v.data.begin() + 3 * c, v.data.end(), v2.data.begin());
    split.append(k3, v3);
    split.advance({});
    split.append(k2, v2);
    split.advance({});

    EXPECT_TRUE(whole.state_equal(split));
}

TEST(SlidingCache, NothingLeavesASufficientWindow) {
    std::mt19937 rng(9);
    const int c = 8;
    auto ks = plain_rtn(c, 4);
    auto vs = plain_rtn(c, 4);
    SlidingKvCache cache(5, &ks, &vs);
    Mat k(5, c), v(5, c);
    for (int r = 0; r < 5; ++r) {
        const auto kr = random_row(rng, c);
        const auto vr = random_row(rng, c);
        std::copy(kr.begin(), kr.end(), k.row(r).begin());
        std::copy(vr.begin(), vr.end(), v.row(r).begin());
    }
    cache.append(k, v);
    cache.advance({});
    EXPECT_EQ(cache.processed(), 0);
    EXPECT_EQ(cache.quantized_tokens(), 0);
    EXPECT_EQ(cache.fp_tokens(), 5);
    EXPECT_EQ(cache.stored_bits(), 5u * 16u * (8u + 8u));
    Mat k_all, v_all;
    cache.materialize(k_all, v_all);
    EXPECT_EQ(k_all, k);
    EXPECT_EQ(v_all, v);
}

TEST(SlidingCache, EightBitGridValuesRoundTripExactly) {
    std::mt19937 rng(77);
    const int c = 8;
    GroupClipStrategy ks(QuantSpec{CodeWidth::b8, c, ParamFormat::fp16},
                         skvq::identity_entry(c, c).bounds, {1.0f});
    GroupClipStrategy vs = ks;
    SlidingKvCache cache(0, &ks, &vs);
    Mat k(6, c), v(6, c);
    for (int r = 0; r < 6; ++r) {
        for (int j = 0; j < c; ++j) {
            k.at(r, j) = static_cast<float>(rng() % 256) * 0x1p-8f;
            v.at(r, j) = static_cast<float>(rng() % 256) * 0x1p-8f;
        }
        k.at(r, 0) = 0.0f;
        k.at(r, 1) = 255.0f * 0x1p-8f;
        v.at(r, 0) = 0.0f;
        v.at(r, 1) = 255.0f * 0x1p-8f;
    }
    cache.append(k, v);
    cache.advance({});
    EXPECT_EQ(cache.quantized_tokens(), 6);
    Mat k_all, v_all;
    cache.materialize(k_all, v_all);
    EXPECT_EQ(k_all, k);
    EXPECT_EQ(v_all, v);
}

TEST(SlidingCache, StorageAccountingIdentity) {
    std::mt19937 rng(123);
    const int c = 16, gs = 8;
    auto ks = plain_rtn(c, gs, CodeWidth::b2);
    auto vs = plain_rtn(c, gs, CodeWidth::b2);
    SlidingKvCache cache(4, &ks, &vs);
    for (int t = 0; t < 20; ++t) {
        cache.append(one_row(random_row(rng, c)), one_row(random_row(rng, c)));
        cache.advance({});
    }
    EXPECT_EQ(cache.quantized_tokens(), 16);
    EXPECT_EQ(cache.fp_tokens(), 4);
    const double declared = skvq::average_bits(QuantSpec{CodeWidth::b2, gs, ParamFormat::fp16});
    const double expect = 16.0 * declared * (c + c) + 4.0 * 16.0 * (c + c);
    EXPECT_DOUBLE_EQ(static_cast<double>(cache.stored_bits()), expect);
}

TEST(SlidingCache, LosslessBlocksBillSixteenBits) {
    std::mt19937 rng(6);
    const int c = 8;
    LosslessStrategy ks(c), vs(c);
    SlidingKvCache cache(2, &ks, &vs);
    std::vector<std::vector<float>> k_orig, v_orig;
    for (int t = 0; t < 5; ++t) {
        k_orig.push_back(random_row(rng, c));
        v_orig.push_back(random_row(rng, c));
        cache.append(one_row(k_orig.back()), one_row(v_orig.back()));
        cache.advance({});
    }
    EXPECT_EQ(cache.quantized_tokens(), 3);
    EXPECT_EQ(cache.stored_bits(), 5u * 16u * (8u + 8u));
    Mat k_all, v_all;
    cache.materialize(k_all, v_all);
    for (int t = 0; t < 5; ++t) {
        EXPECT_EQ(mat_row(k_all, t), k_orig[t]);
        EXPECT_EQ(mat_row(v_all, t), v_orig[t]);
    }
}

TEST(SlidingCache, FilterUnionRetains) {
    std::mt19937 rng(31);
    const int c = 4;
    auto ks = plain_rtn(c, 4);
    auto vs = plain_rtn(c, 4);
    SlidingKvCache cache(2, &ks, &vs);
    AttentionSinkRule sink(2);
    EveryThirdRule third;
    const std::vector<const FilterRule*> filters = {&sink, &third};
    for (int t = 0; t < 8; ++t) {
        cache.append(one_row(random_row(rng, c)), one_row(random_row(rng, c)));
        cache.advance(filters);
    }
    EXPECT_EQ(cache.processed(), 6);
    std::vector<long> kept;
    for (const auto& r : cache.retained()) kept.push_back(r.index);
    EXPECT_EQ(kept, (std::vector<long>{0, 1, 3}));
    EXPECT_EQ(cache.quantized_tokens(), 3);
}

TEST(SlidingCache, SnapshotRoundTripMidDecode) {
    std::mt19937 rng(88);
    const int kc = 6, vc = 4;
    auto ks = plain_rtn(kc, 3, CodeWidth::b2, ParamFormat::fp8);
    auto vs = plain_rtn(vc, 2);
    SlidingKvCache cache(4, &ks, &vs);
    AttentionSinkRule sink(2);
    for (int t = 0; t < 10; ++t) {
        cache.append(one_row(random_row(rng, kc)), one_row(random_row(rng, vc)));
        cache.advance({&sink});
    }
    ASSERT_GT(cache.quantized_tokens(), 0);
    ASSERT_GT(cache.retained_tokens(), 0);

    skvq::ByteWriter w;
    cache.serialize(w);
    skvq::ByteReader r(w.buffer());
    SlidingKvCache back(4, &ks, &vs);
    back.deserialize(r);
    r.require_end();
    EXPECT_TRUE(back.state_equal(cache));

    Mat k1, v1, k2, v2;
    cache.materialize(k1, v1);
    back.materialize(k2, v2);
    EXPECT_EQ(k1, k2);
    EXPECT_EQ(v1, v2);
}

TEST(SlidingCache, EmptySnapshotRoundTrip) {
    auto ks = plain_rtn(4, 4);
    auto vs = plain_rtn(4, 4);
    SlidingKvCache cache(3, &ks, &vs);
    skvq::ByteWriter w;
    cache.serialize(w);
    SlidingKvCache back(3, &ks, &vs);
    skvq::ByteReader r(w.buffer());
    back.deserialize(r);
    EXPECT_TRUE(back.state_equal(cache));
    EXPECT_EQ(back.total(), 0);
}

TEST(SlidingCache, TruncatedOrTamperedSnapshotRejected) {
    std::mt19937 rng(14);
    auto ks = plain_rtn(4, 4);
    auto vs = plain_rtn(4, 4);
    SlidingKvCache cache(1, &ks, &vs);
    for (int t = 0; t < 4; ++t) {
        cache.append(one_row(random_row(rng, 4)), one_row(random_row(rng, 4)));
        cache.advance({});
    }
    skvq::ByteWriter w;
    cache.serialize(w);

    auto truncated = w.buffer();
    truncated.resize(truncated.size() - 5);
    SlidingKvCache back(1, &ks, &vs);
    skvq::ByteReader r1(truncated);
    EXPECT_THROW(back.deserialize(r1), skvq::Error);

    auto tampered = w.buffer();
    tampered[0] += 1;
    skvq::ByteReader r2(tampered);
    EXPECT_THROW(back.deserialize(r2), skvq::Error);
}

TEST(SlidingCache, RejectsBadConstructionAndAppend) {
    auto ks = plain_rtn(4, 4);
    auto vs = plain_rtn(4, 4);
    EXPECT_THROW(SlidingKvCache(-1, &ks, &vs), skvq::Error);
    EXPECT_THROW(SlidingKvCache(2, nullptr, &vs), skvq::Error);
    SlidingKvCache cache(2, &ks, &vs);
    EXPECT_THROW(cache.append(Mat(1, 5), Mat(1, 4)), skvq::Error);
    EXPECT_THROW(cache.append(Mat(2, 4), Mat(1, 4)), skvq::Error);
}
