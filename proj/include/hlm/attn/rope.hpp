// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "hlm/numerics/tape.hpp"

namespace hlm::attn {

struct RopeSpec {
    double base = 1e11;
    std::size_t d_head = 64;

    void validate() const
    {
        require(base >= 1, "RopeSpec: base must be >= 1");
        require(d_head >= 2 && d_head % 2 == 0, "RopeSpec: d_head must be even");
    }
};

/// theta_k = base^(-2k / d_head), k = 0 .. d_head/2 - 1.
inline std::vector<double> rope_frequencies(const RopeSpec& spec)
{
    spec.validate();
    std::vector<double> theta(spec.d_head / 2);
    for (std::size_t k = 0; k < theta.size(); ++k) {
        theta[k] = std::pow(spec.base, -2.0 * static_cast<double>(k) / static_cast<double>(spec.d_head));
    }
    return theta;
}

namespace detail {

/// Rotates consecutive pairs (2k, 2k+1) of every head in row t by
/// sign * pos[t] * theta_k.
template <class Real>
void rotate_rows(Tensor<Real>& x, std::span<const std::int32_t> pos, const std::vector<double>& theta,
                 std::size_t d_head, double sign)
{
    const std::size_t T = x.dim(0), width = x.dim(1), heads = width / d_head;
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < theta.size(); ++k) {
            const double ang = sign * static_cast<double>(pos[t]) * theta[k];
            const Real c = static_cast<Real>(std::cos(ang)), s = static_cast<Real>(std::sin(ang));
            for (std::size_t h = 0; h < heads; ++h) {
                Real& a = x(t, h * d_head + 2 * k);
                Real& b = x(t, h * d_head + 2 * k + 1);
                const Real a0 = a, b0 = b;
                a = c * a0 - s * b0;
                b = s * a0 + c * b0;
            }
        }
    }
}

} // namespace detail

/// Rotary embedding applied to every head of x [T, heads * d_head].
template <class Real>
Tensor<Real> apply_rope(Tensor<Real> x, std::span<const std::int32_t> positions, const RopeSpec& spec)
{
    require(x.rank() == 2 && x.dim(1) % spec.d_head == 0, "apply_rope: width must be a multiple of d_head");
    require(positions.size() == x.dim(0), "apply_rope: one position per row");
    for (auto p : positions) {
        require(p >= 0, "apply_rope: positions must be non-negative");
    }
    detail::rotate_rows(x, positions, rope_frequencies(spec), spec.d_head, 1.0);
    return x;
}

template <class Real>
Var<Real> apply_rope(Var<Real> x, std::span<const std::int32_t> positions, const RopeSpec& spec)
{
    auto out = apply_rope(x.value(), positions, spec);
    std::vector<std::int32_t> pos(positions.begin(), positions.end());
    const auto ix = x.id();
    return x.tape().record("apply_rope", std::move(out), {x}, [ix, pos, spec](Tape<Real>& tp, std::size_t self) {
        Tensor<Real> g = tp.grad(self);
        detail::rotate_rows(g, pos, rope_frequencies(spec), spec.d_head, -1.0);
        tp.accumulate(ix, g);
    });
}

} // namespace hlm::attn
