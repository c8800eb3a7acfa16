// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hlm/numerics/tape.hpp"

namespace hlm::ssm {

namespace detail {

/// For each t, the earliest index whose input t may see: the last reset at or
/// before t, or -(k-1) (into the tail) when no reset occurred in this chunk.
inline std::vector<std::ptrdiff_t> conv_visible_from(std::span<const std::uint8_t> resets, std::size_t k)
{
    std::vector<std::ptrdiff_t> from(resets.size());
    std::ptrdiff_t last = -static_cast<std::ptrdiff_t>(k - 1);
    for (std::size_t t = 0; t < resets.size(); ++t) {
        if (resets[t]) {
            last = static_cast<std::ptrdiff_t>(t);
        }
        from[t] = last;
    }
    return from;
}

} // namespace detail

/// Causal depthwise convolution restricted to the current document.
///
///   out[t, c] = bias[c] + sum_j w[c, j] * in[t - (k-1) + j, c]
///
/// Inputs before the most recent reset are treated as zero. Indices < 0 read
/// from `tail` [k-1, channels] (the previous chunk's last k-1 inputs). The
/// tail is a constant; no gradient flows into it.
template <class Real>
Var<Real> causal_conv1d(Var<Real> x, Var<Real> w, Var<Real> bias, std::span<const std::uint8_t> resets,
                        const Tensor<Real>& tail)
{
    const auto& xv = x.value();
    require(xv.rank() == 2, "causal_conv1d: input must be [T, channels]");
    const std::size_t T = xv.dim(0), ch = xv.dim(1);
    require(w.value().rank() == 2 && w.value().dim(0) == ch, "causal_conv1d: weight must be [channels, k]");
    const std::size_t k = w.value().dim(1);
    require(k >= 1, "causal_conv1d: kernel width must be >= 1");
    require(bias.value().size() == ch, "causal_conv1d: bias must be [channels]");
    require(resets.size() == T, "causal_conv1d: one reset flag per timestep");
    require(tail.size() == (k - 1) * ch, "causal_conv1d: tail must be [k-1, channels]");

    const auto from = detail::conv_visible_from(resets, k);
    const std::ptrdiff_t K = static_cast<std::ptrdiff_t>(k);
    auto input_at = [&](std::ptrdiff_t s, std::size_t c) -> Real {
        return s >= 0 ? xv(static_cast<std::size_t>(s), c) : tail(static_cast<std::size_t>(s + K - 1), c);
    };

    Tensor<Real> out(Shape{T, ch});
    const auto& wv = w.value();
    const auto& bv = bias.value();
    for (std::size_t t = 0; t < T; ++t) {
        const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(t);
        for (std::size_t c = 0; c < ch; ++c) {
            Real acc = bv[c];
            for (std::size_t j = 0; j < k; ++j) {
                const std::ptrdiff_t s = ti - (K - 1) + static_cast<std::ptrdiff_t>(j);
                if (s >= from[t]) {
                    acc += wv(c, j) * input_at(s, c);
                }
            }
            out(t, c) = acc;
        }
    }

    auto ix = x.id(), iw = w.id(), ib = bias.id();
    return x.tape().record(
        "causal_conv1d", std::move(out), {x, w, bias},
        [ix, iw, ib, T, ch, k, K, from, tail](Tape<Real>& tp, std::size_t self) {
            const auto& g = tp.grad(self);
            const auto& xv = tp.value(ix);
            const auto& wv = tp.value(iw);
            const bool gx = tp.needs_grad(ix), gw = tp.needs_grad(iw), gb = tp.needs_grad(ib);
            for (std::size_t t = 0; t < T; ++t) {
                const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(t);
                for (std::size_t c = 0; c < ch; ++c) {
                    const Real gv = g(t, c);
                    if (gb) {
                        tp.grad(ib)[c] += gv;
                    }
                    for (std::size_t j = 0; j < k; ++j) {
                        const std::ptrdiff_t s = ti - (K - 1) + static_cast<std::ptrdiff_t>(j);
                        if (s < from[t]) {
                            continue;
                        }
                        if (s >= 0) {
                            const auto su = static_cast<std::size_t>(s);
                            if (gx) {
                                tp.grad(ix)(su, c) += gv * wv(c, j);
                            }
                            if (gw) {
                                tp.grad(iw)(c, j) += gv * xv(su, c);
                            }
                        } else if (gw) {
                            tp.grad(iw)(c, j) += gv * tail(static_cast<std::size_t>(s + K - 1), c);
                        }
                    }
                }
            }
        });
}

/// The last k-1 inputs of this chunk as seen by the next one: rows drawn from
/// before the final reset are zero, and short chunks shift in the old tail.
template <class Real>
Tensor<Real> next_conv_tail(const Tensor<Real>& x, std::span<const std::uint8_t> resets, const Tensor<Real>& tail,
                            std::size_t k)
{
    const std::size_t T = x.dim(0), ch = x.dim(1);
    Tensor<Real> out(Shape{k - 1, ch});
    if (k <= 1) {
        return out;
    }
    const auto from = detail::conv_visible_from(resets, k);
    // Inputs the next chunk's first timestep may see start at the last reset.
    const std::ptrdiff_t visible = T > 0 ? from[T - 1] : -static_cast<std::ptrdiff_t>(k - 1);
    const std::ptrdiff_t K = static_cast<std::ptrdiff_t>(k), Ti = static_cast<std::ptrdiff_t>(T);
    for (std::size_t r = 0; r < k - 1; ++r) {
        const std::ptrdiff_t s = Ti - (K - 1) + static_cast<std::ptrdiff_t>(r);
        if (s < visible) {
            continue;
        }
        for (std::size_t c = 0; c < ch; ++c) {
            out(r, c) = s >= 0 ? x(static_cast<std::size_t>(s), c) : tail(static_cast<std::size_t>(s + K - 1), c);
        }
    }
    return out;
}

} // namespace hlm::ssm
