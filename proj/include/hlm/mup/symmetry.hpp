// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>

#include "hlm/model/params.hpp"
#include "hlm/mup/multipliers.hpp"

namespace hlm::mup {

/// One multiplier-weight pair with its optimizer scalars.
struct SymmetryScalars {
    double m = 1;
    double sigma = 1;
    double eta = 1;
    double lambda = 0;
};

/// (m, sigma, eta, lambda) -> (m/p, sigma*p, eta*p, lambda/p). With AdamW at
/// eps = 0 the network output and its whole training trajectory are unchanged.
inline SymmetryScalars apply_symmetry(const SymmetryScalars& s, double p)
{
    require(p > 0, "apply_symmetry: p must be positive");
    return {s.m / p, s.sigma * p, s.eta * p, s.lambda / p};
}

/// The same transformation on a whole model: every forward multiplier (or only
/// `which`) is divided by p, its tied matrices are multiplied by p, and their
/// per-parameter learning rate and weight decay factors become p and 1/p.
template <class Real>
void apply_symmetry(model::ParameterStore<Real>& params, MuPMultiplierSet& mults, double p,
                    std::optional<Forward> which = std::nullopt)
{
    require(p > 0, "apply_symmetry: p must be positive");
    for (std::size_t i = 0; i < kForwardCount; ++i) {
        if (!which || static_cast<std::size_t>(*which) == i) {
            mults.forward_ref[i] /= p;
        }
    }
    for (auto& prm : params) {
        if (!prm.tied || (which && *prm.tied != *which)) {
            continue;
        }
        for (auto& v : prm.value.values()) {
            v = static_cast<Real>(v * p);
        }
        prm.lr_scale *= p;
        prm.wd_scale /= p;
    }
}

} // namespace hlm::mup
