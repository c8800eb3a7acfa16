// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "hlm/mup/io.hpp"
#include "hlm/mup/scaling.hpp"
#include "hlm/mup/symmetry.hpp"
#include "hlm/mup/tuner.hpp"
#include "hlm/train/schedule.hpp"
#include "hlm/verify/symmetry_check.hpp"
#include "hlm/verify/tuner_check.hpp"
#include "test_util.hpp"

using namespace hlm;
using mup::Forward;
using mup::MuPMultiplierSet;

namespace {

double fwd(const MuPMultiplierSet& m, Forward f) { return m.forward(f); }

} // namespace

TEST(Multipliers, ThirtyFiveTunablesAllPositive)
{
    EXPECT_EQ(mup::kTunableCount, 35u);
    EXPECT_EQ(mup::all_coordinates().size(), 35u);
    auto base = MuPMultiplierSet::base_model();
    EXPECT_NO_THROW(base.validate());
    auto bad = base;
    bad.matrix_wd[2] = 0;
    EXPECT_THROW(bad.validate(), ContractError);
}

TEST(Scaling, DoublingWidth)
{
    const auto base = MuPMultiplierSet::base_model();
    auto s = base.ref_shapes;
    auto m = mup::scale_multipliers(base, s.d, 2 * s.d, s);
    EXPECT_DOUBLE_EQ(fwd(m, Forward::unemb), fwd(base, Forward::unemb) / 2);
    EXPECT_DOUBLE_EQ(fwd(m, Forward::emb), fwd(base, Forward::emb));
    EXPECT_DOUBLE_EQ(fwd(m, Forward::x), fwd(base, Forward::x) / 2);
    EXPECT_EQ(m.matrix_lr, base.matrix_lr);
    EXPECT_EQ(m.matrix_wd, base.matrix_wd);
    EXPECT_EQ(m.vector_lr, base.vector_lr);
}

TEST(Scaling, IdentityAndKeyLaw)
{
    const auto base = MuPMultiplierSet::base_model();
    auto s = base.ref_shapes;
    auto same = mup::scale_multipliers(base, s.d, s.d, s);
    for (std::size_t i = 0; i < mup::kForwardCount; ++i) {
        EXPECT_EQ(same.forward(static_cast<Forward>(i)), base.forward(static_cast<Forward>(i)));
    }
    auto wide = mup::scale_multipliers(base, s.d, 4 * s.d, s);
    EXPECT_NEAR(fwd(wide, Forward::key) / fwd(base, Forward::key), 1.0 / 16.0, 1e-15);
    EXPECT_DOUBLE_EQ(mup::forward_by_name(wide, "m_key"), fwd(wide, Forward::key));
    EXPECT_THROW(mup::forward_by_name(wide, "m_bogus"), ContractError);
    EXPECT_THROW(mup::scale_multipliers(base, s.d + 1, s.d, s), ContractError);
    EXPECT_THROW(mup::scale_multipliers(base, s.d, 0, s), ContractError);
}

TEST(Scaling, LawsFollowTheirShapes)
{
    const auto base = MuPMultiplierSet::base_model();
    auto t = base.ref_shapes;
    t.d_state *= 2;
    t.n_groups *= 4;
    auto m = mup::transfer(base, t);
    EXPECT_NEAR(fwd(m, Forward::B) / fwd(base, Forward::B), 1.0 / 8.0, 1e-15);
    EXPECT_DOUBLE_EQ(fwd(m, Forward::C), fwd(base, Forward::C));
    t = base.ref_shapes;
    t.n_heads_attn *= 2;
    t.d_head_attn *= 2;
    m = mup::transfer(base, t);
    EXPECT_NEAR(fwd(m, Forward::attn) / fwd(base, Forward::attn), 0.25, 1e-15);
    EXPECT_NEAR(fwd(m, Forward::key) / fwd(base, Forward::key), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Scaling, TransfersComposeExactly)
{
    const auto base = MuPMultiplierSet::base_model();
    const auto s = base.ref_shapes;
    for (double d1 : {64.0, 320.0, 2560.0, 777.0}) {
        for (double d2 : {128.0, 1280.0, 5120.0, 91.0}) {
            auto a = mup::scale_multipliers(mup::scale_multipliers(base, s.d, d1, s), d1, d2, s);
            auto b = mup::scale_multipliers(base, s.d, d2, s);
            for (std::size_t i = 0; i < mup::kForwardCount; ++i) {
                ASSERT_EQ(a.forward(static_cast<Forward>(i)), b.forward(static_cast<Forward>(i)));
            }
        }
    }
}

TEST(Multipliers, JsonRoundTripAndUnknownNames)
{
    const auto base = mup::transfer(MuPMultiplierSet::base_model(), mup::ModelShapes{64, 16, 3, 8, 1, 16, 2, 152});
    nlohmann::json j = base;
    auto back = j.get<MuPMultiplierSet>();
    EXPECT_EQ(back.forward_ref, base.forward_ref);
    EXPECT_EQ(back.matrix_wd, base.matrix_wd);
    EXPECT_EQ(back.shapes, base.shapes);
    j["forward"]["m_bogus"] = 1.0;
    EXPECT_THROW(j.get<MuPMultiplierSet>(), ContractError);
}

TEST(Symmetry, ScalarForm)
{
    mup::SymmetryScalars s{0.7, 0.02, 1e-3, 0.1};
    auto id = mup::apply_symmetry(s, 1.0);
    EXPECT_EQ(id.m, s.m);
    EXPECT_EQ(id.sigma, s.sigma);
    auto t = mup::apply_symmetry(s, 2.0);
    EXPECT_DOUBLE_EQ(t.m, 0.35);
    EXPECT_DOUBLE_EQ(t.sigma, 0.04);
    EXPECT_DOUBLE_EQ(t.eta, 2e-3);
    EXPECT_DOUBLE_EQ(t.lambda, 0.05);
    EXPECT_THROW(mup::apply_symmetry(s, 0.0), ContractError);
}

TEST(Symmetry, LinearLayerOutputUnchanged)
{
    Rng rng(3);
    auto W = test::randn({4, 5}, rng);
    auto x = test::randn({2, 5}, rng);
    Tape<double> tape;
    auto y = ops::scale(ops::linear(tape.constant(x), tape.constant(W)), 0.75);
    for (auto& v : W.values()) {
        v *= 2;
    }
    auto y2 = ops::scale(ops::linear(tape.constant(x), tape.constant(W)), 0.375);
    EXPECT_TRUE(y.value() == y2.value());
}

TEST(Symmetry, StoreTransformTouchesOnlyTiedMatrices)
{
    auto config = verify::tiny_config(model::Arrangement::SA_M, 1);
    auto mults = MuPMultiplierSet::ones(model::model_shapes(model::resolve_dims(config)));
    auto m = model::init_model<double>(config, mults);
    auto params = m.params;
    auto mm = mults;
    mup::apply_symmetry(params, mm, 4.0, Forward::key);
    EXPECT_EQ(mm.forward(Forward::key), 0.25);
    EXPECT_EQ(mm.forward(Forward::x), 1.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const bool key = params[i].tied == Forward::key;
        EXPECT_EQ(params[i].lr_scale, key ? 4.0 : 1.0) << params[i].name;
        EXPECT_EQ(params[i].wd_scale, key ? 0.25 : 1.0) << params[i].name;
        EXPECT_EQ(params[i].value[0], (key ? 4.0 : 1.0) * m.params[i].value[0]) << params[i].name;
    }
}

TEST(Symmetry, AdamWTrajectoriesInvariant)
{
    for (double p : {0.5, 2.0, 8.0}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            EXPECT_LT(verify::symmetry_trajectory_deviation(p, seed), 1e-10) << "p " << p << " seed " << seed;
        }
    }
}

TEST(Symmetry, NonPowerOfTwoStillInvariantToRounding)
{
    EXPECT_LT(verify::symmetry_trajectory_deviation(3.0, 5), 1e-9);
}

TEST(EffectiveCoordinates, LogScaleOrthogonality)
{
    const auto J = train::elr_ewd_log_jacobian();
    EXPECT_EQ(J[0][0] * J[1][0] + J[0][1] * J[1][1], 0.0);
    // numerical Jacobian of the map agrees
    const double eta = 3e-4, lam = 0.07, h = 1e-6;
    auto logmap = [](double le, double ll) {
        auto [a, b] = train::elr_ewd(std::exp(le), std::exp(ll));
        return std::array<double, 2>{std::log(a), std::log(b)};
    };
    auto p0 = logmap(std::log(eta) + h, std::log(lam));
    auto m0 = logmap(std::log(eta) - h, std::log(lam));
    auto p1 = logmap(std::log(eta), std::log(lam) + h);
    auto m1 = logmap(std::log(eta), std::log(lam) - h);
    for (int r = 0; r < 2; ++r) {
        EXPECT_NEAR((p0[r] - m0[r]) / (2 * h), J[r][0], 1e-8);
        EXPECT_NEAR((p1[r] - m1[r]) / (2 * h), J[r][1], 1e-8);
    }
}

TEST(Sensitivity, ClosedFormExamples)
{
    auto s = mup::fit_sensitivity(1.1, 1.0, 1.1, 2.0);
    EXPECT_NEAR(s.a, 0.2, 1e-12);
    ASSERT_TRUE(s.offset);
    EXPECT_NEAR(*s.offset, 0.0, 1e-12);

    auto flat = mup::fit_sensitivity(1.0, 1.0, 1.0, 2.0);
    EXPECT_EQ(flat.a, 0.0);
    EXPECT_FALSE(flat.offset);

    auto right = mup::fit_sensitivity(1.3, 1.0, 0.9, 2.0);
    EXPECT_NEAR(right.a, 0.2, 1e-12);
    ASSERT_TRUE(right.offset);
    EXPECT_GT(*right.offset, 0.0);

    EXPECT_THROW(mup::fit_sensitivity(1, 1, 1, 1.0), ContractError);
    EXPECT_THROW(mup::fit_sensitivity(NAN, 1, 1, 2.0), ContractError);
}

TEST(Sensitivity, RecoversPlantedQuadratic)
{
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        const double a = rng.uniform(0.01, 5.0), u_star = rng.uniform(-3, 3), L_star = rng.uniform(-2, 2);
        const double u0 = rng.uniform(-3, 3);
        const double p = i % 2 ? 2.0 : std::sqrt(2.0);
        const double q = std::log2(p);
        auto L = [&](double u) { return 0.5 * a * (u - u_star) * (u - u_star) + L_star; };
        auto s = mup::fit_sensitivity(L(u0 - q), L(u0), L(u0 + q), p);
        EXPECT_NEAR(s.a, a, 1e-12) << i;
        ASSERT_TRUE(s.offset);
        EXPECT_NEAR(*s.offset, u_star - u0, 1e-9);
    }
}

TEST(Tuner, FlatOracleHoldsEverything)
{
    const auto start = MuPMultiplierSet::base_model();
    auto r = mup::tune_stage(start, 2.0, [](const MuPMultiplierSet&) { return 3.0; });
    EXPECT_EQ(r.next.forward_ref, start.forward_ref);
    EXPECT_EQ(r.next.matrix_lr, start.matrix_lr);
    EXPECT_EQ(r.next.matrix_wd, start.matrix_wd);
    EXPECT_EQ(r.next.vector_lr, start.vector_lr);
    ASSERT_EQ(r.records.size(), 35u);
    for (const auto& rec : r.records) {
        EXPECT_EQ(rec.a, 0.0);
        EXPECT_FALSE(rec.failed);
    }
}

TEST(Tuner, SingleMultiplierMovesTowardOptimum)
{
    const auto start = MuPMultiplierSet::ones({});
    const double c = 1.4;
    mup::LossOracle oracle = [&](const MuPMultiplierSet& m) {
        const double u = std::log2(m.forward(Forward::gate)) - c;
        return u * u;
    };
    auto r = mup::tune_stage(start, 2.0, oracle);
    EXPECT_EQ(r.next.forward(Forward::gate), 2.0);
    for (std::size_t i = 0; i < mup::kForwardCount; ++i) {
        if (static_cast<Forward>(i) != Forward::gate) {
            EXPECT_EQ(r.next.forward_ref[i], 1.0);
        }
    }
    EXPECT_EQ(r.next.matrix_lr, start.matrix_lr);
    EXPECT_EQ(r.next.matrix_wd, start.matrix_wd);
    auto r2 = mup::tune_stage(r.next, 2.0, oracle);
    EXPECT_EQ(r2.next.forward(Forward::gate), 2.0);
}

TEST(Tuner, EffectiveCoordinatesMoveTheRightPairs)
{
    auto m = MuPMultiplierSet::ones({});
    const mup::Coordinate elr{mup::Coordinate::Kind::elr, 3}, ewd{mup::Coordinate::Kind::ewd, 3};
    elr.scale(m, 2.0);
    EXPECT_EQ(m.matrix_lr[3], 2.0);
    EXPECT_EQ(m.matrix_wd[3], 2.0);
    EXPECT_DOUBLE_EQ(elr.value(m), 2.0);
    EXPECT_DOUBLE_EQ(ewd.value(m), 1.0);
    ewd.scale(m, 0.5);
    // (p lr, wd / p) with p = 2
    EXPECT_EQ(m.matrix_lr[3], 4.0);
    EXPECT_EQ(m.matrix_wd[3], 1.0);
    EXPECT_DOUBLE_EQ(elr.value(m), 2.0);
    EXPECT_EQ(mup::coordinate_from_name("EWD:W_out"), ewd);
    EXPECT_THROW(mup::coordinate_from_name("nope"), ContractError);
}

TEST(Tuner, TiesPreferCenter)
{
    EXPECT_EQ(mup::select_move(0.99995, 1.0, 1.2), 0);
    EXPECT_EQ(mup::select_move(0.9998, 1.0, 1.2), -1);
    EXPECT_EQ(mup::select_move(1.2, 1.0, 0.5), 1);
}

TEST(Tuner, OracleFailureHoldsMultiplier)
{
    const auto start = MuPMultiplierSet::ones({});
    mup::LossOracle oracle = [](const MuPMultiplierSet& m) {
        if (m.forward(Forward::z) > 1.5) {
            throw NumericError("diverged");
        }
        return -std::log2(m.forward(Forward::z)) + std::log2(m.forward(Forward::dt));
    };
    auto r = mup::tune_stage(start, 2.0, oracle);
    EXPECT_EQ(r.next.forward(Forward::z), 1.0);
    EXPECT_EQ(r.next.forward(Forward::dt), 0.5);
    const auto& rec = r.records[static_cast<std::size_t>(Forward::z)];
    EXPECT_TRUE(rec.failed);
    EXPECT_NE(rec.error.find("diverged"), std::string::npos);
}

TEST(Tuner, QuadraticBowlConvergesWithinSixStages)
{
    const auto bowl = verify::reference_bowl();
    const auto run = verify::run_bowl(bowl, MuPMultiplierSet::ones({}));
    EXPECT_LE(run.final_distance, 0.5);
    EXPECT_GE(run.stages_to_converge, 1u);
    EXPECT_LE(run.stages_to_converge, 6u);
}

TEST(Tuner, DeterministicRecordsAndJsonLines)
{
    const auto bowl = verify::reference_bowl();
    const auto a = verify::run_bowl(bowl, MuPMultiplierSet::ones({}));
    const auto b = verify::run_bowl(bowl, MuPMultiplierSet::ones({}));
    ASSERT_EQ(a.stages.size(), b.stages.size());
    for (std::size_t s = 0; s < a.stages.size(); ++s) {
        for (std::size_t i = 0; i < a.stages[s].records.size(); ++i) {
            const auto ja = nlohmann::json(a.stages[s].records[i]);
            EXPECT_EQ(ja.dump(), nlohmann::json(b.stages[s].records[i]).dump());
            EXPECT_EQ(nlohmann::json(ja.get<mup::SweepRecord>()), ja);
        }
    }
}
