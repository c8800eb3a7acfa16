// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "hlm/numerics/random.hpp"
#include "hlm/ssm/scan.hpp"

namespace hlm::verify {

inline Tensor<double> random_normal(Shape shape, Rng& rng, double sd = 1.0)
{
    Tensor<double> t(std::move(shape));
    for (auto& v : t.values()) {
        v = rng.normal(0.0, sd);
    }
    return t;
}

inline Tensor<double> random_uniform(Shape shape, Rng& rng, double lo, double hi)
{
    Tensor<double> t(std::move(shape));
    for (auto& v : t.values()) {
        v = rng.uniform(lo, hi);
    }
    return t;
}

/// Random scan problem with dt in [0.01, 1], A_log in [-2, 2] and optional
/// resets strictly after position 0.
struct ScanInstance {
    ssm::SsmDims dims;
    Tensor<double> x, B, C, dt, A_log, D;
    std::vector<std::uint8_t> resets;

    ssm::ScanInputs<double> inputs() const { return {x, B, C, dt, A_log, D, resets}; }
};

inline ScanInstance random_scan_instance(Rng& rng, std::size_t T, const ssm::SsmDims& dims, double reset_prob)
{
    ScanInstance s;
    s.dims = dims;
    s.x = random_normal({T, dims.d_ssm()}, rng);
    s.B = random_normal({T, dims.bc_width()}, rng);
    s.C = random_normal({T, dims.bc_width()}, rng);
    s.dt = random_uniform({T, dims.n_heads}, rng, 0.01, 1.0);
    s.A_log = random_uniform({dims.n_heads}, rng, -2.0, 2.0);
    s.D = random_normal({dims.n_heads}, rng);
    s.resets.assign(T, 0);
    for (std::size_t t = 1; t < T; ++t) {
        s.resets[t] = rng.uniform() < reset_prob ? 1 : 0;
    }
    return s;
}

/// Random head layout: heads in [1, 4], a group count dividing them.
inline ssm::SsmDims random_dims(Rng& rng)
{
    ssm::SsmDims d;
    d.n_heads = 1 + rng.below(4);
    d.d_head = 1 + rng.below(3);
    d.d_state = 1 + rng.below(4);
    d.n_groups = d.n_heads % 2 == 0 && rng.uniform() < 0.5 ? 2 : 1;
    return d;
}

} // namespace hlm::verify
