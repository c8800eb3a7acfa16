// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hlm/mup/multipliers.hpp"
#include "hlm/numerics/ops.hpp"

namespace hlm::model {

/// W_up, W_gate [d_mlp, d]; W_down [d, d_mlp].
template <class Real>
struct MlpVars {
    Var<Real> W_up, W_gate, W_down;
};

/// m_MLP W_down (SiLU(m_gate W_gate r) * W_up r)
template <class Real>
Var<Real> mlp_forward(Var<Real> r, const MlpVars<Real>& p, const mup::MuPMultiplierSet& mults)
{
    const auto m_gate = static_cast<Real>(mults.forward(mup::Forward::gate));
    const auto m_mlp = static_cast<Real>(mults.forward(mup::Forward::mlp));
    auto gate = ops::silu(ops::scale(ops::linear(r, p.W_gate), m_gate));
    auto hidden = ops::mul(gate, ops::linear(r, p.W_up));
    return ops::scale(ops::linear(hidden, p.W_down), m_mlp);
}

} // namespace hlm::model
