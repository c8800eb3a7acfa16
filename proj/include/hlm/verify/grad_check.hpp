// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "hlm/numerics/finite_difference.hpp"
#include "hlm/numerics/ops.hpp"
#include "hlm/numerics/random.hpp"
#include "hlm/numerics/tape.hpp"

namespace hlm::verify {

inline Tensor<double> randn(Shape shape, Rng& rng, double sd = 1.0)
{
    Tensor<double> t(std::move(shape));
    for (auto& v : t.values()) {
        v = rng.normal(0.0, sd);
    }
    return t;
}

inline Tensor<double> uniform(Shape shape, Rng& rng, double lo, double hi)
{
    Tensor<double> t(std::move(shape));
    for (auto& v : t.values()) {
        v = rng.uniform(lo, hi);
    }
    return t;
}

using LossBuilder = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

/// Largest relative error between tape gradients and central differences
/// over every input tensor. Each input is a parameter leaf with id = index.
inline double grad_check(const std::vector<Tensor<double>>& inputs, const LossBuilder& build, double step = 1e-6)
{
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        vars.push_back(tape.parameter(i, inputs[i]));
    }
    auto grads = tape.backward(build(tape, vars));

    double worst = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        std::function<double(const Tensor<double>&)> f = [&](const Tensor<double>& probe) {
            Tape<double> tp;
            std::vector<Var<double>> vs;
            for (std::size_t j = 0; j < inputs.size(); ++j) {
                vs.push_back(tp.parameter(j, j == i ? probe : inputs[j]));
            }
            return build(tp, vs).value().item();
        };
        auto fd = finite_difference_gradient(f, inputs[i], step);
        worst = std::max(worst, max_rel_err(grads.at(i), fd, 1e-8));
    }
    return worst;
}

/// sum(w * y) for a fixed random weighting, so every output element matters.
inline Var<double> weighted_sum(Var<double> y, std::uint64_t seed)
{
    Rng rng(seed);
    auto w = y.tape().constant(randn(y.shape(), rng));
    return ops::sum(ops::mul(y, w));
}

} // namespace hlm::verify
