// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hlm/mup/multipliers.hpp"

namespace hlm::mup {

/// Moves a multiplier set to new shapes. Forward multipliers follow their
/// width-scaling laws; LR and WD multipliers are unchanged.
inline MuPMultiplierSet transfer(const MuPMultiplierSet& base, const ModelShapes& target)
{
    require(target.d > 0 && target.d_head_ssm > 0 && target.n_heads_ssm > 0 && target.d_state > 0 &&
                target.n_groups > 0 && target.d_head_attn > 0 && target.n_heads_attn > 0 && target.d_mlp > 0,
            "transfer: shapes must be positive");
    MuPMultiplierSet out = base;
    out.shapes = target;
    return out;
}

/// Width transfer from d_ref to d with the remaining shapes taken from
/// `shapes` (whose d is overwritten).
inline MuPMultiplierSet scale_multipliers(const MuPMultiplierSet& base, double d_ref, double d, ModelShapes shapes)
{
    require(d_ref > 0 && d > 0, "scale_multipliers: widths must be positive");
    require(base.shapes.d == d_ref, "scale_multipliers: base multipliers are not at width d_ref");
    shapes.d = d;
    return transfer(base, shapes);
}

/// Multiplier value by name, e.g. "m_key".
inline double forward_by_name(const MuPMultiplierSet& m, std::string_view name)
{
    return m.forward(forward_from_name(name));
}

} // namespace hlm::mup
