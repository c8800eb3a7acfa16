// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "hlm/attn/attention.hpp"
#include "test_util.hpp"

using namespace hlm;
using attn::GqaDims;
using attn::RopeSpec;
using hlm::test::grad_check;
using hlm::test::randn;
using hlm::test::weighted_sum;

TEST(Rope, Frequencies)
{
    auto th = attn::rope_frequencies(RopeSpec{1e11, 4});
    ASSERT_EQ(th.size(), 2u);
    EXPECT_DOUBLE_EQ(th[0], 1.0);
    EXPECT_NEAR(th[1], 3.1623e-6, 1e-10);
    auto th2 = attn::rope_frequencies(RopeSpec{1e4, 64});
    EXPECT_DOUBLE_EQ(th2[0], 1.0);
    EXPECT_NEAR(th2[31], std::pow(1e4, -62.0 / 64.0), 1e-18);
    EXPECT_THROW(attn::rope_frequencies(RopeSpec{1e4, 5}), ContractError);
    EXPECT_THROW(attn::rope_frequencies(RopeSpec{0.5, 4}), ContractError);
}

TEST(Rope, PositionZeroIsIdentityAndNormsArePreserved)
{
    Rng rng(1);
    RopeSpec spec{1e4, 8};
    auto q = randn({3, 16}, rng);
    std::vector<std::int32_t> zeros(3, 0), pos{5, 17, 1000};
    EXPECT_TRUE(attn::apply_rope(q, zeros, spec) == q);
    auto r = attn::apply_rope(q, pos, spec);
    for (std::size_t t = 0; t < 3; ++t) {
        for (std::size_t h = 0; h < 2; ++h) {
            double a = 0, b = 0;
            for (std::size_t c = 0; c < 8; ++c) {
                a += q(t, h * 8 + c) * q(t, h * 8 + c);
                b += r(t, h * 8 + c) * r(t, h * 8 + c);
            }
            EXPECT_NEAR(a, b, 1e-12);
        }
    }
}

TEST(Rope, DotProductDependsOnlyOnOffset)
{
    Rng rng(2);
    RopeSpec spec{1e4, 8};
    for (int i = 0; i < 20; ++i) {
        auto q = randn({1, 8}, rng), k = randn({1, 8}, rng);
        const auto m = static_cast<std::int32_t>(rng.below(200)), n = static_cast<std::int32_t>(rng.below(200));
        const auto delta = static_cast<std::int32_t>(rng.below(500));
        auto dot = [&](std::int32_t pm, std::int32_t pn) {
            std::vector<std::int32_t> a{pm}, b{pn};
            auto qr = attn::apply_rope(q, a, spec), kr = attn::apply_rope(k, b, spec);
            double s = 0;
            for (std::size_t c = 0; c < 8; ++c) {
                s += qr[c] * kr[c];
            }
            return s;
        };
        EXPECT_NEAR(dot(m, n), dot(m + delta, n + delta), 1e-10);
    }
}

namespace {

struct AttnFixture {
    GqaDims dims;
    RopeSpec rope;
    std::size_t d_model;
    std::vector<Tensor<double>> weights;
    mup::MuPMultiplierSet mults = mup::MuPMultiplierSet::ones(mup::ModelShapes{});

    AttnFixture(std::size_t d, GqaDims g, std::uint64_t seed) : dims(g), rope{1e4, g.d_head}, d_model(d)
    {
        Rng rng(seed);
        const double sd = 1.0 / std::sqrt(static_cast<double>(d));
        weights = {randn({g.d_attn(), d}, rng, sd), randn({g.d_kv(), d}, rng, sd), randn({g.d_kv(), d}, rng, sd),
                   randn({d, g.d_attn()}, rng, sd)};
        mults.forward_ref[static_cast<std::size_t>(mup::Forward::key)] = 0.7;
        mults.forward_ref[static_cast<std::size_t>(mup::Forward::attn)] = 1.3;
    }

    Tensor<double> run(const Tensor<double>& u, const std::vector<std::int32_t>& docs,
                       const std::vector<std::int32_t>& pos, const std::vector<Tensor<double>>& w) const
    {
        Tape<double> tape;
        attn::AttnVars<double> p{tape.constant(w[0]), tape.constant(w[1]), tape.constant(w[2]), tape.constant(w[3])};
        return attn::gqa_attention(tape.constant(u), p, rope, dims, mults, docs, pos).value();
    }
    Tensor<double> run(const Tensor<double>& u, const std::vector<std::int32_t>& docs,
                       const std::vector<std::int32_t>& pos) const
    {
        return run(u, docs, pos, weights);
    }
};

Tensor<double> rows(const Tensor<double>& t, std::size_t a, std::size_t b)
{
    Tensor<double> out(Shape{b - a, t.dim(1)});
    std::copy(t.data() + a * t.dim(1), t.data() + b * t.dim(1), out.data());
    return out;
}

} // namespace

TEST(Attention, SingleTokenReturnsProjectedValue)
{
    AttnFixture f(6, GqaDims{2, 1, 4}, 3);
    Rng rng(4);
    auto u = randn({1, 6}, rng);
    auto y = f.run(u, {0}, {0});
    // V row duplicated across both query heads, then m_attn W_out
    std::vector<double> v(4, 0.0);
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t i = 0; i < 6; ++i) {
            v[c] += f.weights[2](c, i) * u[i];
        }
    }
    for (std::size_t o = 0; o < 6; ++o) {
        double e = 0;
        for (std::size_t h = 0; h < 2; ++h) {
            for (std::size_t c = 0; c < 4; ++c) {
                e += f.weights[3](o, h * 4 + c) * v[c];
            }
        }
        EXPECT_NEAR(y[o], 1.3 * e, 1e-12);
    }
}

TEST(Attention, PackedEqualsPerDocument)
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        AttnFixture f(8, GqaDims{4, 2, 4}, 10 + seed);
        Rng rng(20 + seed);
        auto u = randn({11, 8}, rng);
        std::vector<std::int32_t> docs{0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 2};
        std::vector<std::int32_t> pos{0, 1, 2, 3, 0, 1, 2, 0, 1, 2, 3};
        auto packed = f.run(u, docs, pos);
        const std::size_t bounds[] = {0, 4, 7, 11};
        for (int k = 0; k < 3; ++k) {
            const std::size_t a = bounds[k], b = bounds[k + 1];
            std::vector<std::int32_t> d(b - a, 0), p(pos.begin() + a, pos.begin() + b);
            auto alone = f.run(rows(u, a, b), d, p);
            EXPECT_LT(max_abs_diff(alone, rows(packed, a, b)), 1e-12);
        }
    }
}

TEST(Attention, GroupedQueryEqualsExpandedHeads)
{
    AttnFixture f(8, GqaDims{4, 2, 4}, 30);
    Rng rng(31);
    auto u = randn({6, 8}, rng);
    std::vector<std::int32_t> docs(6, 0), pos{0, 1, 2, 3, 4, 5};
    auto gqa = f.run(u, docs, pos);
    // duplicate kv heads: head i of the expanded model uses kv head i / 2
    AttnFixture mha = f;
    mha.dims = GqaDims{4, 4, 4};
    auto expand = [](const Tensor<double>& w) {
        Tensor<double> out(Shape{16, w.dim(1)});
        for (std::size_t h = 0; h < 4; ++h) {
            for (std::size_t c = 0; c < 4; ++c) {
                for (std::size_t i = 0; i < w.dim(1); ++i) {
                    out(h * 4 + c, i) = w((h / 2) * 4 + c, i);
                }
            }
        }
        return out;
    };
    auto w = f.weights;
    w[1] = expand(w[1]);
    w[2] = expand(w[2]);
    EXPECT_LT(max_abs_diff(gqa, mha.run(u, docs, pos, w)), 1e-12);
}

TEST(Attention, WeightsSumToOneOverAllowedSupport)
{
    // constant value rows: any convex combination returns the same row
    Tape<double> tape;
    Rng rng(40);
    GqaDims g{2, 1, 3};
    auto q = tape.constant(randn({7, 6}, rng)), k = tape.constant(randn({7, 3}, rng));
    Tensor<double> vconst(Shape{7, 3});
    for (std::size_t t = 0; t < 7; ++t) {
        vconst(t, 0) = 1.0;
        vconst(t, 1) = -2.0;
        vconst(t, 2) = 0.5;
    }
    std::vector<std::int32_t> docs{0, 0, 1, 1, 1, 2, 2};
    auto o = attn::attention_core(q, k, tape.constant(vconst), docs, g).value();
    for (std::size_t t = 0; t < 7; ++t) {
        for (std::size_t h = 0; h < 2; ++h) {
            EXPECT_NEAR(o(t, h * 3 + 0), 1.0, 1e-14);
            EXPECT_NEAR(o(t, h * 3 + 1), -2.0, 1e-14);
            EXPECT_NEAR(o(t, h * 3 + 2), 0.5, 1e-14);
        }
    }
}

TEST(Attention, DecreasingDocIdsRejected)
{
    AttnFixture f(4, GqaDims{1, 1, 2}, 50);
    Rng rng(51);
    EXPECT_THROW(f.run(randn({3, 4}, rng), {0, 1, 0}, {0, 0, 0}), ContractError);
}

TEST(Attention, GradientMatchesFiniteDifferences)
{
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        AttnFixture f(6, GqaDims{4, 2, 2}, 60 + seed);
        Rng rng(70 + seed);
        auto u = randn({7, 6}, rng);
        std::vector<std::int32_t> docs{0, 0, 0, 1, 1, 1, 1}, pos{3, 4, 5, 0, 1, 2, 3};
        auto inputs = f.weights;
        inputs.push_back(u);
        auto loss = [&](Tape<double>&, const std::vector<Var<double>>& v) {
            attn::AttnVars<double> p{v[0], v[1], v[2], v[3]};
            return weighted_sum(attn::gqa_attention(v[4], p, f.rope, f.dims, f.mults, docs, pos), seed);
        };
        EXPECT_LT(grad_check(inputs, loss), 1e-4);
    }
}
