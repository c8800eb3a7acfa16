// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "hlm/mup/symmetry.hpp"
#include "hlm/train/adamw.hpp"
#include "hlm/train/step.hpp"
#include "hlm/verify/gradient_suite.hpp"

namespace hlm::verify {

/// Losses along a short AdamW (eps = 0) trajectory on a fixed batch: the
/// loss before each step and after the last one.
inline std::vector<double> adamw_trajectory(model::HybridModel<double> m, const mup::MuPMultiplierSet& mults,
                                            const std::vector<train::TrainRow>& batch, int steps, double eta,
                                            double lambda)
{
    train::AdamConfig cfg;
    cfg.eps = 0;
    auto state = train::OptimizerState<double>::zeros(m.params);
    const model::BlockContext ctx{&mults, ssm::DtPolicy::none(), 0};
    std::vector<double> losses;
    for (int s = 0; s < steps; ++s) {
        auto lg = train::loss_and_grads(m, mults, ctx, batch);
        losses.push_back(lg.loss);
        train::adamw_step(m.params, lg.grads, mults, eta, lambda, state, cfg);
    }
    losses.push_back(train::evaluate_loss(m, mults, ctx, batch));
    return losses;
}

/// Largest relative loss deviation between a trajectory and the one started
/// from the rescaled configuration (m/p, W*p, lr*p, wd/p).
inline double symmetry_trajectory_deviation(double p, std::uint64_t seed, int steps = 3)
{
    const auto config = tiny_config(static_cast<model::Arrangement>(seed % 3), seed);
    const auto dims = model::resolve_dims(config);
    Rng rng(seed * 31 + 7);
    auto mults = detail::random_multipliers(rng);
    mults.ref_shapes = mults.shapes = model::model_shapes(dims);
    for (auto& v : mults.matrix_lr) {
        v = std::exp2(rng.uniform(-1.0, 1.0));
    }
    for (auto& v : mults.matrix_wd) {
        v = std::exp2(rng.uniform(-1.0, 1.0));
    }
    const auto m = model::init_model<double>(config, mults);
    std::vector<train::TrainRow> batch;
    for (int r = 0; r < 2; ++r) {
        batch.push_back(train::random_row(rng, 6, config.vocab));
    }

    const auto base = adamw_trajectory(m, mults, batch, steps, 1e-2, 0.1);
    auto m2 = m;
    auto mults2 = mults;
    mup::apply_symmetry(m2.params, mults2, p);
    const auto moved = adamw_trajectory(m2, mults2, batch, steps, 1e-2, 0.1);

    double worst = 0;
    for (std::size_t i = 0; i < base.size(); ++i) {
        worst = std::max(worst, std::abs(moved[i] - base[i]) / std::abs(base[i]));
    }
    return worst;
}

} // namespace hlm::verify
