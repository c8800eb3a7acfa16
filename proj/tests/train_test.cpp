// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "hlm/train/adamw.hpp"
#include "hlm/train/schedule.hpp"
#include "hlm/train/throughput.hpp"
#include "hlm/train/toy_model.hpp"
#include "hlm/verify/gradient_suite.hpp"
#include "hlm/verify/toy_check.hpp"
#include "test_util.hpp"

using namespace hlm;
using train::PowerMode;
using train::ScheduleSpec;

namespace {

model::ParameterStore<double> small_store(Rng& rng)
{
    model::ParameterStore<double> s;
    s.add("a", test::randn({2, 3}, rng), model::ParamGroup::matrix(mup::Matrix::W_in));
    s.add("b", test::randn({3, 2}, rng), model::ParamGroup::matrix(mup::Matrix::W_out));
    s.add("g", test::randn({3}, rng), model::ParamGroup::vector(mup::Vector::N_mixer));
    s.add("c", test::randn({4}, rng), model::ParamGroup::vector(mup::Vector::A_log));
    return s;
}

} // namespace

TEST(AdamW, ZeroGradientsAndNoDecayLeaveParametersUnchanged)
{
    Rng rng(1);
    auto s = small_store(rng);
    const auto before = s;
    auto st = train::OptimizerState<double>::zeros(s);
    const auto mults = mup::MuPMultiplierSet::ones({});
    std::map<ParamId, Tensor<double>> grads;
    for (std::size_t i = 0; i < s.size(); ++i) {
        grads.emplace(i, Tensor<double>(s[i].value.shape()));
    }
    train::adamw_step(s, grads, mults, 1e-2, 0.0, st);
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_TRUE(s[i].value == before[i].value);
    }
}

TEST(AdamW, ZeroGradientsShrinkMatricesOnly)
{
    Rng rng(2);
    auto s = small_store(rng);
    const auto before = s;
    auto st = train::OptimizerState<double>::zeros(s);
    auto mults = mup::MuPMultiplierSet::ones({});
    mults.matrix_wd[static_cast<std::size_t>(mup::Matrix::W_out)] = 3.0;
    const double eta = 1e-2, lambda = 0.5;
    train::adamw_step(s, {}, mults, eta, lambda, st);
    for (std::size_t k = 0; k < s[0].value.size(); ++k) {
        EXPECT_DOUBLE_EQ(s[0].value[k], before[0].value[k] * (1 - eta * lambda));
    }
    for (std::size_t k = 0; k < s[1].value.size(); ++k) {
        EXPECT_DOUBLE_EQ(s[1].value[k], before[1].value[k] * (1 - eta * lambda * 3.0));
    }
    EXPECT_TRUE(s[2].value == before[2].value);
    EXPECT_TRUE(s[3].value == before[3].value);
}

TEST(AdamW, ScalarMatchesHandRolledReference)
{
    const double lr_mult = 2.0, wd_mult = 0.5, eta = 3e-3, lambda = 0.2;
    model::ParameterStore<double> s;
    s.add("w", Tensor<double>(Shape{1, 1}, 0.7), model::ParamGroup::matrix(mup::Matrix::W_up));
    auto mults = mup::MuPMultiplierSet::ones({});
    mults.matrix_lr[static_cast<std::size_t>(mup::Matrix::W_up)] = lr_mult;
    mults.matrix_wd[static_cast<std::size_t>(mup::Matrix::W_up)] = wd_mult;
    auto st = train::OptimizerState<double>::zeros(s);

    // independent reference
    double w = 0.7, m = 0, v = 0;
    const double b1 = 0.9, b2 = 0.95, eps = 1e-8;
    for (int t = 1; t <= 20; ++t) {
        const double g = std::sin(0.7 * t) + 0.3 * w;
        std::map<ParamId, Tensor<double>> grads;
        grads.emplace(0, Tensor<double>(Shape{1, 1}, g));
        train::adamw_step(s, grads, mults, eta, lambda, st);

        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
        w = w - eta * lr_mult * mh / (std::sqrt(vh) + eps) - eta * lr_mult * lambda * wd_mult * w;
        ASSERT_NEAR(s[0].value[0], w, 1e-14) << "step " << t;
    }
    EXPECT_EQ(st.step, 20);
    EXPECT_GE(st.v[0][0], 0.0);
}

TEST(AdamW, GroupIsolation)
{
    Rng rng(3);
    const auto start = small_store(rng);
    std::map<ParamId, Tensor<double>> grads;
    for (std::size_t i = 0; i < start.size(); ++i) {
        grads.emplace(i, test::randn(start[i].value.shape(), rng));
    }
    const auto base = mup::MuPMultiplierSet::ones({});
    auto run = [&](const mup::MuPMultiplierSet& mm) {
        auto s = start;
        auto st = train::OptimizerState<double>::zeros(s);
        train::adamw_step(s, grads, mm, 1e-2, 0.1, st);
        return s;
    };
    const auto ref = run(base);

    auto bumped = base;
    bumped.matrix_lr[static_cast<std::size_t>(mup::Matrix::W_out)] = 2.0;
    auto out = run(bumped);
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_EQ(out[i].value == ref[i].value, i != 1) << out[i].name;
    }
    bumped = base;
    bumped.vector_lr[static_cast<std::size_t>(mup::Vector::A_log)] = 0.5;
    out = run(bumped);
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_EQ(out[i].value == ref[i].value, i != 3) << out[i].name;
    }
    // vector groups ignore weight-decay multipliers entirely
    bumped = base;
    bumped.matrix_wd.fill(5.0);
    out = run(bumped);
    EXPECT_TRUE(out[2].value == ref[2].value);
    EXPECT_TRUE(out[3].value == ref[3].value);
    EXPECT_FALSE(out[0].value == ref[0].value);
}

TEST(AdamW, ErrorsNameTheParameter)
{
    Rng rng(4);
    auto s = small_store(rng);
    auto st = train::OptimizerState<double>::zeros(s);
    const auto mults = mup::MuPMultiplierSet::ones({});
    std::map<ParamId, Tensor<double>> grads;
    Tensor<double> g(Shape{3, 2});
    g[4] = NAN;
    grads.emplace(1, g);
    try {
        train::adamw_step(s, grads, mults, 1e-2, 0.1, st);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
    }
    grads.clear();
    grads.emplace(0, Tensor<double>(Shape{3, 2}));
    EXPECT_THROW(train::adamw_step(s, grads, mults, 1e-2, 0.1, st), ContractError);
    EXPECT_THROW(train::adamw_step(s, {}, mults, -1.0, 0.1, st), ContractError);
}

TEST(AdamW, EpsZeroWithZeroSecondMomentIsFinite)
{
    Rng rng(5);
    auto s = small_store(rng);
    auto st = train::OptimizerState<double>::zeros(s);
    train::AdamConfig cfg;
    cfg.eps = 0;
    train::adamw_step(s, {}, mup::MuPMultiplierSet::ones({}), 1e-2, 0.1, st, cfg);
    for (const auto& p : s) {
        EXPECT_TRUE(p.value.all_finite());
    }
}

TEST(EffectiveRates, Examples)
{
    auto [e1, l1] = train::elr_ewd(0.3, 0.3);
    EXPECT_DOUBLE_EQ(e1, 0.3);
    EXPECT_DOUBLE_EQ(l1, 1.0);
    auto [e, l] = train::elr_ewd(256e-6, 0.1);
    EXPECT_NEAR(e, 5.0596e-3, 1e-7);
    EXPECT_NEAR(l, 19.7642, 1e-4);
    Rng rng(6);
    for (int i = 0; i < 100; ++i) {
        const double eta = std::exp(rng.uniform(-12, 0)), lam = std::exp(rng.uniform(-6, 1));
        auto [ee, ll] = train::elr_ewd(eta, lam);
        auto [eta2, lam2] = train::from_elr_ewd(ee, ll);
        EXPECT_NEAR(eta2 / eta, 1.0, 1e-15);
        EXPECT_NEAR(lam2 / lam, 1.0, 1e-15);
    }
    EXPECT_THROW(train::elr_ewd(0.0, 0.1), ContractError);
    EXPECT_THROW(train::elr_ewd(0.1, -1.0), ContractError);
}

TEST(Schedule, BatchScaledLearningRate)
{
    EXPECT_EQ(train::batch_scaled_lr(1e-3, 64, 64), 1e-3);
    EXPECT_EQ(train::batch_scaled_lr(1e-3, 64, 256), 2e-3);
    EXPECT_EQ(train::batch_scaled_lr(1e-3, 64, 16), 5e-4);
    EXPECT_THROW(train::batch_scaled_lr(1e-3, 0, 16), ContractError);
}

TEST(Schedule, PowerSchedulerPoints)
{
    ScheduleSpec s;
    s.eta0 = 4e-3;
    s.lambda0 = 0.1;
    s.power = {PowerMode::PS, 1000};
    EXPECT_EQ(train::schedule_at(0, s).eta, 4e-3);
    EXPECT_EQ(train::schedule_at(1000, s).eta, 4e-3);
    EXPECT_EQ(train::schedule_at(4000, s).eta, 2e-3);
    EXPECT_EQ(train::schedule_at(4000, s).lambda, 0.1);
    EXPECT_EQ(train::schedule_at(123456, s).lambda, 0.1);

    s.power.mode = PowerMode::EPS;
    EXPECT_EQ(train::schedule_at(500, s).eta, 4e-3);
    EXPECT_EQ(train::schedule_at(16000, s).eta, 2e-3);
    EXPECT_EQ(train::schedule_at(16000, s).lambda, 0.05);
}

TEST(Schedule, EffectivePowerKeepsEffectiveDecayConstant)
{
    ScheduleSpec s;
    s.eta0 = 1e-3;
    s.lambda0 = 0.2;
    s.power = {PowerMode::EPS, 100};
    const double ref = train::elr_ewd(s.eta0, s.lambda0).second;
    double ps_prev = 0;
    for (double t = 100; t < 1e8; t *= 1.37) {
        const auto p = train::schedule_at(t, s);
        EXPECT_NEAR(train::elr_ewd(p.eta, p.lambda).second / ref - 1.0, 0.0, 1e-12) << t;
        auto ps = s;
        ps.power.mode = PowerMode::PS;
        const auto q = train::schedule_at(t, ps);
        const double lam_eff = train::elr_ewd(q.eta, q.lambda).second;
        // PS grows lambda_eff as t^(1/4)
        EXPECT_NEAR(lam_eff / ref, std::pow(t / 100, 0.25), 1e-12 * std::pow(t / 100, 0.25));
        EXPECT_GT(lam_eff, ps_prev);
        ps_prev = lam_eff;
    }
}

TEST(Schedule, WarmupRampupDecayAndContinuity)
{
    ScheduleSpec s;
    s.eta0 = 1e-3;
    s.lambda0 = 0.1;
    s.warmup_tokens = 1000;
    s.rampup = {8, 32, 4000, true};
    s.stable_tokens = 9000;
    s.decay = {8, 5000};
    EXPECT_EQ(train::schedule_at(0, s).eta, 0.0);
    EXPECT_EQ(train::schedule_at(0, s).batch, 8.0);
    EXPECT_NEAR(train::schedule_at(500, s).eta, 1e-3 * 0.5 * std::sqrt((8 + 24 * 0.125) / 32), 1e-18);
    EXPECT_EQ(train::schedule_at(4000, s).batch, 32.0);
    EXPECT_EQ(train::schedule_at(6000, s).eta, 1e-3);
    EXPECT_NEAR(train::schedule_at(s.total_tokens(), s).eta, 1e-3 / 8, 1e-18);
    EXPECT_NEAR(train::schedule_at(s.total_tokens() + 1e6, s).eta, 1e-3 / 8, 1e-18);
    EXPECT_EQ(train::schedule_at(s.total_tokens(), s).lambda, 0.1);

    for (double b : {s.warmup_tokens, s.rampup.duration_tokens, s.decay_start(), s.total_tokens()}) {
        const auto lo = train::schedule_at(b - 1e-6, s), hi = train::schedule_at(b + 1e-6, s);
        EXPECT_NEAR(lo.eta, hi.eta, 1e-11) << b;
        EXPECT_NEAR(lo.batch, hi.batch, 1e-7) << b;
    }
    EXPECT_THROW(train::schedule_at(-1, s), ContractError);
    s.decay.factor = 1.0;
    EXPECT_THROW(s.validate(), ContractError);
}

TEST(Schedule, JsonRoundTrip)
{
    ScheduleSpec s;
    s.warmup_tokens = 10;
    s.power = {PowerMode::EPS, 77};
    s.rampup.batch_scaling = true;
    nlohmann::json j = s;
    auto back = j.get<ScheduleSpec>();
    EXPECT_EQ(nlohmann::json(back), j);
    EXPECT_EQ(j["power"]["mode"], "EPS");
}

TEST(Toy, ClosedFormExamples)
{
    train::ToyModelSpec s{0.1, 2.0, 1.0, 1e-3, 0.1};
    EXPECT_DOUBLE_EQ(train::toy_stationary_moments(s).x_inf, 1.0);
    s = {0.01, 0.0, 0.0, 1e-3, 0.1};
    EXPECT_EQ(train::toy_stationary_moments(s).x2_inf, 0.0);
    s = {0.01, 0.0, 1.0, 1e-3, 0.1};
    const auto m = train::toy_stationary_moments(s);
    EXPECT_DOUBLE_EQ(m.x2_inf, 1e-3 / ((0.1 + 0.01) * (2 - 1e-4 - 1e-5)));
    EXPECT_TRUE(m.small_eta_lambda);
    EXPECT_TRUE(m.noise_dominated);
    EXPECT_NEAR(m.x2_simplified, 0.5 * 1e-2, 1e-15);
    s.eta = 100;
    s.lambda = 1;
    EXPECT_THROW(train::toy_stationary_moments(s), ContractError);
}

TEST(Toy, NoiselessDecaysGeometrically)
{
    train::ToyModelSpec s{0.5, 0.0, 0.0, 0.1, 0.5};
    s.x0 = 3.0;
    s.steps = 50;
    const auto r = train::toy_simulate(s);
    EXPECT_NEAR(r.final_x, 3.0 * std::pow(1 - 0.1 * 1.0, 50), 1e-12);
}

TEST(Toy, DivergenceReportsStep)
{
    train::ToyModelSpec s{1.0, 0.0, 1.0, 3.0, 0.0};
    s.x0 = 1;
    s.steps = 1000;
    try {
        train::toy_simulate(s);
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
    }
}

TEST(Toy, MonteCarloAgreesWithClosedForm)
{
    const auto a = verify::toy_agreement(verify::stationary_spec(0.5, 1.0, 1.0, 0.01, 0.5, 60));
    EXPECT_TRUE(a.stationary);
    EXPECT_LT(a.mean_z, 3.0) << a.mean_estimate << " vs " << a.mean_exact;
    EXPECT_LT(a.x2_z, 3.0) << a.x2_estimate << " vs " << a.x2_exact;
}

TEST(Toy, NoiseDominatedSlopeIsOne)
{
    const auto f = verify::noise_dominated_slope();
    EXPECT_NEAR(f.slope, 1.0, 0.1);
}

TEST(Throughput, Examples)
{
    auto zero = [](std::int64_t) { return 0.0; };
    EXPECT_DOUBLE_EQ(train::dp_throughput(64, 4, 2, 0.5, zero), 4 * 2 / 0.5);
    auto sync = [](std::int64_t) { return 1.0; };
    const double t4 = train::dp_throughput(64, 4, 2, 0.5, sync), t8 = train::dp_throughput(64, 8, 2, 0.5, sync);
    EXPECT_GT(t8, t4);
    EXPECT_LT(t8, 2 * t4);
    EXPECT_EQ(train::accumulation_steps(64, 32, 2), 1);
    EXPECT_THROW(train::dp_throughput(64, 64, 2, 0.5, sync), ContractError);
    EXPECT_THROW(train::dp_throughput(60, 8, 2, 0.5, sync), ContractError);
}
