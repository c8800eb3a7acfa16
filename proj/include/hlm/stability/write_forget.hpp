// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "hlm/numerics/errors.hpp"
#include "hlm/numerics/random.hpp"

namespace hlm::stability {

/// Single-head scalar SSM used to study the write/forget antagonism.
///   gate_i  = softplus(alpha * dt_raw_i)
///   decay_i = exp(-exp(A_log) * gate_i)
///   M_ts    = C B gate_s prod_{i=s+1..t} decay_i
/// Attenuation multiplies the raw (pre-softplus) gate.
struct WriteForgetInstance {
    double A_log = 0;
    std::vector<double> dt_raw;
    double B = 1;
    double C = 1;
    double alpha = 1;

    void validate() const
    {
        require(!dt_raw.empty(), "WriteForgetInstance: need at least one position");
        require(alpha > 0 && alpha <= 1, "WriteForgetInstance: alpha must be in (0, 1]");
    }
    std::size_t length() const { return dt_raw.size(); }
};

inline double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double softplus_inverse(double y)
{
    require(y > 0, "softplus_inverse: argument must be positive");
    return y + std::log(-std::expm1(-y));
}

inline double gate(const WriteForgetInstance& w, std::size_t i) { return softplus(w.alpha * w.dt_raw.at(i)); }
inline double decay(const WriteForgetInstance& w, std::size_t i)
{
    return std::exp(-std::exp(w.A_log) * gate(w, i));
}

/// log M_ts summed in log space.
inline double log_mixing(const WriteForgetInstance& w, std::size_t s, std::size_t t)
{
    w.validate();
    require(s <= t && t < w.length(), "log_mixing: need s <= t < length");
    require(w.B * w.C > 0, "log_mixing: C*B must be positive for the logarithm");
    double acc = std::log(w.C * w.B) + std::log(gate(w, s));
    for (std::size_t i = s + 1; i <= t; ++i) {
        acc -= std::exp(w.A_log) * gate(w, i);
    }
    return acc;
}

struct LogMixingSensitivity {
    /// Positive write term at s.
    double write = 0;
    /// Non-positive decay term from the positions s+1..t.
    double decay = 0;
    double total() const { return write + decay; }
};

/// Sensitivity of log M_ts to a shift b of the raw gate shared by every
/// position (dt_raw_i -> dt_raw_i + b, as a gate bias does). The write term
/// comes from gate_s; the decay term from every later gate in the product.
inline LogMixingSensitivity grad_logM_dt_terms(const WriteForgetInstance& w, std::size_t s, std::size_t t)
{
    w.validate();
    if (!(s < t)) {
        throw ContractError("grad_logM_dt: need s < t");
    }
    require(t < w.length(), "grad_logM_dt: t outside the instance");
    LogMixingSensitivity g;
    g.write = w.alpha * sigmoid(w.alpha * w.dt_raw[s]) / gate(w, s);
    for (std::size_t i = s + 1; i <= t; ++i) {
        g.decay -= std::exp(w.A_log) * w.alpha * sigmoid(w.alpha * w.dt_raw[i]);
    }
    return g;
}

inline double grad_logM_dt(const WriteForgetInstance& w, std::size_t s, std::size_t t)
{
    return grad_logM_dt_terms(w, s, t).total();
}

/// dL/dA_log = -exp(A_log) sum_i gate_i decay_i dL/ddecay_i.
inline double grad_loss_Alog(const WriteForgetInstance& w, std::span<const double> upstream)
{
    w.validate();
    require(upstream.size() == w.length(), "grad_loss_Alog: one upstream value per position");
    double acc = 0;
    for (std::size_t i = 0; i < w.length(); ++i) {
        require(std::isfinite(upstream[i]), "grad_loss_Alog: upstream must be finite");
        acc += gate(w, i) * decay(w, i) * upstream[i];
    }
    return -std::exp(w.A_log) * acc;
}

/// y_t = sum_{s<=t} M_ts x_s, evaluated by the recurrence.
inline std::vector<double> mix(const WriteForgetInstance& w, std::span<const double> x)
{
    require(x.size() == w.length(), "mix: one input per position");
    std::vector<double> y(x.size());
    double h = 0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        h = decay(w, t) * h + w.B * gate(w, t) * x[t];
        y[t] = w.C * h;
    }
    return y;
}

/// L = (1/2) sum_t (y_t - target_t)^2.
inline double quadratic_loss(const WriteForgetInstance& w, std::span<const double> x, std::span<const double> target)
{
    require(target.size() == w.length(), "quadratic_loss: one target per position");
    const auto y = mix(w, x);
    double L = 0;
    for (std::size_t t = 0; t < y.size(); ++t) {
        L += 0.5 * (y[t] - target[t]) * (y[t] - target[t]);
    }
    return L;
}

/// dL/ddecay_i for the quadratic loss, holding every other factor fixed.
/// decay_i enters M_ts for s < i <= t, so dM_ts/ddecay_i = M_ts / decay_i.
inline std::vector<double> decay_upstream(const WriteForgetInstance& w, std::span<const double> x,
                                          std::span<const double> target)
{
    const std::size_t T = w.length();
    const auto y = mix(w, x);
    std::vector<double> g(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        const double r = y[t] - target[t];
        for (std::size_t s = 0; s < t; ++s) {
            const double M = std::exp(log_mixing(w, s, t));
            for (std::size_t i = s + 1; i <= t; ++i) {
                g[i] += r * x[s] * M / decay(w, i);
            }
        }
    }
    return g;
}

/// Extra memory loss from a gate perturbation: exp(-exp(A_log) * delta).
inline double memory_decay_factor(double A_log, double delta_gate)
{
    require(delta_gate >= 0, "memory_decay_factor: perturbation must be non-negative");
    return std::exp(-std::exp(A_log) * delta_gate);
}

/// Lipschitz modulus of the attenuated write/forget map: (1 - alpha) + alpha e^{A_log}.
inline double attenuation_lipschitz(double alpha, double A_log)
{
    require(alpha >= 0 && alpha <= 1, "attenuation_lipschitz: alpha must be in [0, 1]");
    return (1.0 - alpha) + alpha * std::exp(A_log);
}

/// Width proxy for the leading Jacobian eigenvalue, 1 + eta * head_count * grad_var,
/// where grad_var is the variance of the gate gradient (not a Hessian entry).
inline double width_instability_proxy(double eta, double head_count, double grad_var)
{
    require(eta >= 0 && head_count >= 0 && grad_var >= 0, "width_instability_proxy: inputs must be non-negative");
    return 1.0 + eta * head_count * grad_var;
}

inline WriteForgetInstance random_write_forget(Rng& rng, std::size_t T)
{
    WriteForgetInstance w;
    w.A_log = rng.uniform(-2.0, 1.0);
    w.B = rng.uniform(0.5, 2.0);
    w.C = rng.uniform(0.5, 2.0);
    w.alpha = rng.uniform(0.2, 1.0);
    for (std::size_t i = 0; i < T; ++i) {
        w.dt_raw.push_back(rng.uniform(-3.0, 2.0));
    }
    return w;
}

} // namespace hlm::stability
