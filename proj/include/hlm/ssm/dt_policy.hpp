// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>

#include "hlm/numerics/ops.hpp"

namespace hlm::ssm {

/// Mitigation applied to the post-softplus dt activation.
struct DtPolicy {
    enum class Mode { none, clip_positive, attenuate };

    Mode mode = Mode::none;
    double dt_max = 0;       // clip_positive
    double alpha = 1;        // attenuate
    std::int64_t steps = 0;  // attenuate: active while step <= steps

    static DtPolicy none() { return {}; }
    static DtPolicy clip(double dt_max)
    {
        DtPolicy p{Mode::clip_positive, dt_max, 1, 0};
        p.validate();
        return p;
    }
    static DtPolicy attenuate(double alpha, std::int64_t steps)
    {
        DtPolicy p{Mode::attenuate, 0, alpha, steps};
        p.validate();
        return p;
    }

    void validate() const
    {
        if (mode == Mode::clip_positive) {
            require(dt_max > 0, "DtPolicy: clip requires dt_max > 0");
        }
        if (mode == Mode::attenuate) {
            require(alpha > 0 && alpha < 1, "DtPolicy: attenuation requires 0 < alpha < 1");
            require(steps >= 0, "DtPolicy: attenuation step count must be non-negative");
        }
    }
};

template <class Real>
Real apply_dt_policy(Real dt, const DtPolicy& policy, std::int64_t step)
{
    switch (policy.mode) {
    case DtPolicy::Mode::none: return dt;
    case DtPolicy::Mode::clip_positive: return std::min(dt, static_cast<Real>(policy.dt_max));
    case DtPolicy::Mode::attenuate: return step <= policy.steps ? static_cast<Real>(policy.alpha) * dt : dt;
    }
    return dt;
}

template <class Real>
Tensor<Real> apply_dt_policy(Tensor<Real> dt, const DtPolicy& policy, std::int64_t step)
{
    for (auto& v : dt.values()) {
        require(v > 0, "apply_dt_policy: dt must be positive");
        v = apply_dt_policy(v, policy, step);
    }
    return dt;
}

/// Differentiable form used inside the block.
template <class Real>
Var<Real> apply_dt_policy(Var<Real> dt, const DtPolicy& policy, std::int64_t step)
{
    switch (policy.mode) {
    case DtPolicy::Mode::none: return dt;
    case DtPolicy::Mode::clip_positive: return ops::clamp_max(dt, static_cast<Real>(policy.dt_max));
    case DtPolicy::Mode::attenuate:
        return step <= policy.steps ? ops::scale(dt, static_cast<Real>(policy.alpha)) : dt;
    }
    return dt;
}

} // namespace hlm::ssm
