// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "hlm/numerics/errors.hpp"

namespace hlm::train {

/// Data-parallel throughput in samples per unit time:
///   B_g / ((B_g / (N_dp B_mu)) t_mu + t_sync(N_dp)).
/// The global batch must split into whole micro-batches on every replica.
inline double dp_throughput(std::int64_t B_g, std::int64_t N_dp, std::int64_t B_mu, double t_mu,
                            const std::function<double(std::int64_t)>& t_sync)
{
    require(B_g > 0 && N_dp > 0 && B_mu > 0 && t_mu > 0, "dp_throughput: sizes and t_mu must be positive");
    if (B_g % (N_dp * B_mu) != 0) {
        throw ContractError("dp_throughput: global batch " + std::to_string(B_g) + " is not divisible by N_dp*B_mu = " +
                            std::to_string(N_dp * B_mu));
    }
    const double accum = static_cast<double>(B_g / (N_dp * B_mu));
    return static_cast<double>(B_g) / (accum * t_mu + t_sync(N_dp));
}

/// Number of gradient-accumulation steps per optimizer step.
inline std::int64_t accumulation_steps(std::int64_t B_g, std::int64_t N_dp, std::int64_t B_mu)
{
    require(B_g > 0 && N_dp > 0 && B_mu > 0 && B_g % (N_dp * B_mu) == 0,
            "accumulation_steps: B_g must be a positive multiple of N_dp*B_mu");
    return B_g / (N_dp * B_mu);
}

} // namespace hlm::train
