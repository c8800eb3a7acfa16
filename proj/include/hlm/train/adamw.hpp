// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "hlm/model/params.hpp"
#include "hlm/mup/multipliers.hpp"

namespace hlm::train {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    bool bias_correction = true;
};

/// First and second moments per parameter, in ParamId order.
template <class Real>
struct OptimizerState {
    std::vector<Tensor<Real>> m;
    std::vector<Tensor<Real>> v;
    std::int64_t step = 0;

    static OptimizerState zeros(const model::ParameterStore<Real>& params)
    {
        OptimizerState s;
        for (const auto& p : params) {
            s.m.emplace_back(p.value.shape());
            s.v.emplace_back(p.value.shape());
        }
        return s;
    }
};

/// Learning-rate and weight-decay factors of one parameter on top of the
/// global (eta, lambda). Vector-like groups get no weight decay.
template <class Real>
std::pair<double, double> group_factors(const model::Parameter<Real>& p, const mup::MuPMultiplierSet& mults)
{
    if (p.group.is_matrix) {
        return {mults.lr(p.group.as_matrix()) * p.lr_scale, mults.wd(p.group.as_matrix()) * p.wd_scale};
    }
    return {mults.lr(p.group.as_vector()) * p.lr_scale, 0.0};
}

/// One decoupled-weight-decay Adam step:
///   W <- W - lr * A - lr * wd * W,  A = m_hat / (sqrt(v_hat) + eps)
/// with lr = eta * lr factor and wd = lambda * wd factor. Parameters absent
/// from `grads` are treated as having zero gradient. With eps = 0 a zero
/// second moment gives A = 0.
template <class Real>
void adamw_step(model::ParameterStore<Real>& params, const std::map<ParamId, Tensor<Real>>& grads,
                const mup::MuPMultiplierSet& mults, double eta, double lambda, OptimizerState<Real>& state,
                const AdamConfig& cfg = {})
{
    require(eta >= 0 && lambda >= 0, "adamw_step: eta and lambda must be non-negative");
    require(state.m.size() == params.size() && state.v.size() == params.size(),
            "adamw_step: optimizer state does not match parameters");
    for (const auto& [id, g] : grads) {
        require(id < params.size(), "adamw_step: gradient for unknown parameter");
        require(g.shape() == params[id].value.shape(), "adamw_step: gradient shape mismatch for " + params[id].name);
        if (!g.all_finite()) {
            throw NumericError("adamw_step: non-finite gradient for parameter '" + params[id].name + "'");
        }
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double c1 = cfg.bias_correction ? 1.0 - std::pow(cfg.beta1, t) : 1.0;
    const double c2 = cfg.bias_correction ? 1.0 - std::pow(cfg.beta2, t) : 1.0;
    const Real b1 = static_cast<Real>(cfg.beta1), b2 = static_cast<Real>(cfg.beta2);

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        const auto it = grads.find(i);
        const auto [lr_f, wd_f] = group_factors(p, mults);
        const Real lr = static_cast<Real>(eta * lr_f);
        const Real decay = static_cast<Real>(eta * lr_f * lambda * wd_f);
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            const Real g = it == grads.end() ? Real{0} : it->second[k];
            m[k] = b1 * m[k] + (Real{1} - b1) * g;
            v[k] = b2 * v[k] + (Real{1} - b2) * g * g;
            const Real mh = m[k] / static_cast<Real>(c1);
            const Real vh = v[k] / static_cast<Real>(c2);
            const Real den = std::sqrt(vh) + static_cast<Real>(cfg.eps);
            const Real A = den > Real{0} ? mh / den : Real{0};
            p.value[k] = p.value[k] - lr * A - decay * p.value[k];
        }
    }
}

} // namespace hlm::train
