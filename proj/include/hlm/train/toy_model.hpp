// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "hlm/numerics/errors.hpp"
#include "hlm/numerics/random.hpp"

namespace hlm::train {

/// Scalar noisy quadratic under decoupled weight decay:
///   x_{t+1} = x_t - eta (h (x_t - x*) + xi_t) - eta lambda x_t,  xi ~ N(0, sigma^2).
struct ToyModelSpec {
    double h = 0.01;
    double x_star = 0;
    double sigma = 1;
    double eta = 1e-3;
    double lambda = 0.1;
    std::int64_t steps = 100000;
    /// Leading steps dropped before tail averages are taken.
    std::int64_t burn_in = 0;
    double x0 = 0;
    std::uint64_t seed = 0;

    /// Steps for a perturbation to decay by e: 1 / (eta (h + lambda)).
    double relaxation_steps() const { return 1.0 / (eta * (h + lambda)); }
};

struct ToyMoments {
    double x_inf = 0;
    double x2_inf = 0;
    double x2_simplified = 0;
    /// eta * lambda << 1 (taken as < 0.01); the simplified form assumes it.
    bool small_eta_lambda = false;
    /// h << lambda (taken as < 0.1 lambda): the noise term dominates the
    /// stationary norm when x* = 0.
    bool noise_dominated = false;
};

/// x_inf = h x* / (h + lambda),
/// x2_inf = eta sigma^2 / ((lambda + h)(2 - eta lambda - eta h)) + x_inf^2,
/// x2_simplified = (1/2)(eta/lambda)(sigma^2 + 2 (h x*)^2 / (eta lambda)).
inline ToyMoments toy_stationary_moments(const ToyModelSpec& s)
{
    const double den = (s.lambda + s.h) * (2.0 - s.eta * s.lambda - s.eta * s.h);
    if (!(den > 0) || !(s.h + s.lambda > 0)) {
        throw ContractError("toy_stationary_moments: (lambda + h)(2 - eta lambda - eta h) must be positive");
    }
    require(s.eta > 0 && s.lambda > 0, "toy_stationary_moments: eta and lambda must be positive");
    ToyMoments m;
    m.x_inf = s.h * s.x_star / (s.h + s.lambda);
    m.x2_inf = s.eta * s.sigma * s.sigma / den + m.x_inf * m.x_inf;
    const double hx = s.h * s.x_star;
    m.x2_simplified = 0.5 * (s.eta / s.lambda) * (s.sigma * s.sigma + 2.0 * hx * hx / (s.eta * s.lambda));
    m.small_eta_lambda = s.eta * s.lambda < 0.01;
    m.noise_dominated = s.h < 0.1 * s.lambda;
    return m;
}

struct ToySimulation {
    double mean = 0;
    double second_moment = 0;
    double final_x = 0;
    std::int64_t tail_steps = 0;
    /// Burn-in covers at least 10 relaxation times and the tail at least 50.
    bool stationary = false;
};

inline ToySimulation toy_simulate(const ToyModelSpec& s)
{
    require(s.steps >= 1 && s.burn_in >= 0 && s.burn_in < s.steps, "toy_simulate: need 0 <= burn_in < steps");
    Rng rng(s.seed);
    double x = s.x0, sum = 0, sum2 = 0;
    for (std::int64_t t = 0; t < s.steps; ++t) {
        const double grad = s.h * (x - s.x_star) + s.sigma * rng.normal();
        x = x - s.eta * grad - s.eta * s.lambda * x;
        if (!(std::abs(x) <= 1e12)) {
            throw NumericError("toy_simulate: diverged at step " + std::to_string(t));
        }
        if (t >= s.burn_in) {
            sum += x;
            sum2 += x * x;
        }
    }
    ToySimulation out;
    out.tail_steps = s.steps - s.burn_in;
    out.mean = sum / static_cast<double>(out.tail_steps);
    out.second_moment = sum2 / static_cast<double>(out.tail_steps);
    out.final_x = x;
    const double tau = s.relaxation_steps();
    out.stationary = static_cast<double>(s.burn_in) >= 10 * tau && static_cast<double>(out.tail_steps) >= 50 * tau;
    return out;
}

} // namespace hlm::train
