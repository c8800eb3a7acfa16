// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "hlm/train/toy_model.hpp"

namespace hlm::verify {

/// Monte-Carlo moments across seeds against the closed form. z-scores are
/// |across-seed mean - closed form| / standard error of that mean.
struct ToyAgreement {
    double mean_estimate = 0, mean_exact = 0, mean_z = 0;
    double x2_estimate = 0, x2_exact = 0, x2_z = 0;
    bool stationary = true;
};

inline ToyAgreement toy_agreement(train::ToyModelSpec spec, int seeds = 20)
{
    const auto exact = train::toy_stationary_moments(spec);
    std::vector<double> means, x2s;
    ToyAgreement out;
    for (int s = 0; s < seeds; ++s) {
        spec.seed = 1000 + static_cast<std::uint64_t>(s);
        const auto sim = train::toy_simulate(spec);
        means.push_back(sim.mean);
        x2s.push_back(sim.second_moment);
        out.stationary = out.stationary && sim.stationary;
    }
    auto z = [&](const std::vector<double>& v, double target, double& estimate) {
        double mu = 0;
        for (double x : v) mu += x;
        mu /= static_cast<double>(v.size());
        double var = 0;
        for (double x : v) var += (x - mu) * (x - mu);
        var /= static_cast<double>(v.size() - 1);
        estimate = mu;
        return std::abs(mu - target) / std::sqrt(var / static_cast<double>(v.size()));
    };
    out.mean_exact = exact.x_inf;
    out.x2_exact = exact.x2_inf;
    out.mean_z = z(means, exact.x_inf, out.mean_estimate);
    out.x2_z = z(x2s, exact.x2_inf, out.x2_estimate);
    return out;
}

/// A spec whose run covers 10 relaxation times of burn-in plus `tail_tau`.
inline train::ToyModelSpec stationary_spec(double h, double x_star, double sigma, double eta, double lambda,
                                           double tail_tau)
{
    train::ToyModelSpec s{h, x_star, sigma, eta, lambda};
    const double tau = s.relaxation_steps();
    s.burn_in = static_cast<std::int64_t>(std::ceil(10 * tau));
    s.steps = s.burn_in + static_cast<std::int64_t>(std::ceil(tail_tau * tau));
    s.x0 = 0;
    return s;
}

/// Least-squares slope of log x2 against log(eta/lambda) over a 4x4 grid in
/// the noise-dominated regime (h << lambda, x* = 0).
struct SlopeFit {
    double slope = 0;
    double intercept = 0;
    std::vector<double> log_ratio, log_x2;
};

inline SlopeFit noise_dominated_slope(std::uint64_t seed = 7)
{
    const double etas[] = {1e-3, 2e-3, 4e-3, 8e-3};
    const double lambdas[] = {0.05, 0.1, 0.2, 0.4};
    SlopeFit f;
    for (double eta : etas) {
        for (double lam : lambdas) {
            auto spec = stationary_spec(1e-3, 0.0, 1.0, eta, lam, 400);
            spec.seed = seed++;
            f.log_ratio.push_back(std::log(eta / lam));
            f.log_x2.push_back(std::log(train::toy_simulate(spec).second_moment));
        }
    }
    const double n = static_cast<double>(f.log_ratio.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < f.log_ratio.size(); ++i) {
        sx += f.log_ratio[i];
        sy += f.log_x2[i];
        sxx += f.log_ratio[i] * f.log_ratio[i];
        sxy += f.log_ratio[i] * f.log_x2[i];
    }
    f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    f.intercept = (sy - f.slope * sx) / n;
    return f;
}

} // namespace hlm::verify
