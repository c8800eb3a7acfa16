// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hlm/mup/tuner.hpp"

namespace hlm::verify {

/// Coupled quadratic bowl over one forward multiplier, one matrix ELR and
/// one vector LR, with its optimum off the power-of-two grid.
inline mup::QuadraticBowl reference_bowl()
{
    using K = mup::Coordinate::Kind;
    mup::QuadraticBowl b;
    b.coords = {{K::forward, static_cast<std::size_t>(mup::Forward::key)},
                {K::elr, static_cast<std::size_t>(mup::Matrix::W_out)},
                {K::vector_lr, static_cast<std::size_t>(mup::Vector::A_log)}};
    b.centers = {2.3, -1.7, 3.4};
    b.hessian = {{2.0, 0.5, 0.0}, {0.5, 1.0, 0.3}, {0.0, 0.3, 1.5}};
    return b;
}

struct BowlRun {
    double final_distance = 0;
    /// First stage after which the distance is within 0.5 log2 units; 0 if never.
    std::size_t stages_to_converge = 0;
    std::vector<mup::StageResult> stages;
};

inline BowlRun run_bowl(const mup::QuadraticBowl& bowl, const mup::MuPMultiplierSet& start)
{
    BowlRun r;
    mup::LossOracle oracle = [&](const mup::MuPMultiplierSet& m) { return bowl(m); };
    r.stages = mup::tune(start, mup::default_stage_factors(), oracle, bowl.coords);
    for (std::size_t i = 0; i < r.stages.size(); ++i) {
        if (r.stages_to_converge == 0 && bowl.distance(r.stages[i].next) <= 0.5) {
            r.stages_to_converge = i + 1;
        }
    }
    r.final_distance = bowl.distance(r.stages.back().next);
    return r;
}

} // namespace hlm::verify
