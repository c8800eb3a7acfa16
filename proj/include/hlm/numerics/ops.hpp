// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "hlm/numerics/tape.hpp"

// Differentiable primitives over Tape. Broadcasting is limited to adding a
// per-column vector to every row of a matrix; any other shape mismatch is a
// ContractError.

namespace hlm::ops {

namespace detail {

template <class Real>
void same_shape(const Var<Real>& a, const Var<Real>& b, const char* op)
{
    if (a.shape() != b.shape()) {
        throw ContractError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                            shape_string(b.shape()));
    }
}

template <class Real>
void is_matrix(const Var<Real>& a, const char* op)
{
    if (a.value().rank() != 2) {
        throw ContractError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
    }
}

template <class Real>
Real sigmoid(Real x)
{
    if (x >= 0) {
        return Real{1} / (Real{1} + std::exp(-x));
    }
    Real e = std::exp(x);
    return e / (Real{1} + e);
}

} // namespace detail

/// softplus(x) = log(1 + e^x); returns x directly for x > 30.
template <class Real>
Real softplus_scalar(Real x)
{
    if (x > Real{30}) {
        return x;
    }
    return std::log1p(std::exp(x));
}

template <class Real>
Real sigmoid_scalar(Real x)
{
    return detail::sigmoid(x);
}

template <class Real>
Real silu_scalar(Real x)
{
    return x * detail::sigmoid(x);
}

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b)
{
    detail::same_shape(a, b, "add");
    Tensor<Real> out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += bv[i];
    }
    auto ia = a.id(), ib = b.id();
    return a.tape().record("add", std::move(out), {a, b}, [ia, ib](Tape<Real>& t, std::size_t self) {
        const auto& g = t.grad(self);
        t.accumulate(ia, g);
        t.accumulate(ib, g);
    });
}

template <class Real>
Var<Real> sub(Var<Real> a, Var<Real> b)
{
    detail::same_shape(a, b, "sub");
    Tensor<Real> out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= bv[i];
    }
    auto ia = a.id(), ib = b.id();
    return a.tape().record("sub", std::move(out), {a, b}, [ia, ib](Tape<Real>& t, std::size_t self) {
        Tensor<Real> g = t.grad(self);
        t.accumulate(ia, g);
        for (auto& v : g.values()) {
            v = -v;
        }
        t.accumulate(ib, g);
    });
}

template <class Real>
Var<Real> mul(Var<Real> a, Var<Real> b)
{
    detail::same_shape(a, b, "mul");
    Tensor<Real> out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= bv[i];
    }
    auto ia = a.id(), ib = b.id();
    return a.tape().record("mul", std::move(out), {a, b}, [ia, ib](Tape<Real>& t, std::size_t self) {
        const Tensor<Real> g = t.grad(self);
        const auto& av = t.value(ia);
        const auto& bv = t.value(ib);
        if (t.needs_grad(ia)) {
            auto& ga = t.grad(ia);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * bv[i];
            }
        }
        if (t.needs_grad(ib)) {
            auto& gb = t.grad(ib);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gb[i] += g[i] * av[i];
            }
        }
    });
}

template <class Real>
Var<Real> scale(Var<Real> a, Real c)
{
    Tensor<Real> out = a.value();
    for (auto& v : out.values()) {
        v *= c;
    }
    auto ia = a.id();
    return a.tape().record("scale", std::move(out), {a}, [ia, c](Tape<Real>& t, std::size_t self) {
        Tensor<Real> g = t.grad(self);
        for (auto& v : g.values()) {
            v *= c;
        }
        t.accumulate(ia, g);
    });
}

/// x[T, n] + bias[n] broadcast over rows.
template <class Real>
Var<Real> add_rows(Var<Real> x, Var<Real> bias)
{
    detail::is_matrix(x, "add_rows");
    const std::size_t rows = x.value().dim(0), n = x.value().dim(1);
    require(bias.value().size() == n && bias.value().rank() == 1,
            "add_rows: bias shape " + shape_string(bias.shape()) + " vs columns " + std::to_string(n));
    Tensor<Real> out = x.value();
    const auto& b = bias.value();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            out(r, c) += b[c];
        }
    }
    auto ix = x.id(), ib = bias.id();
    return x.tape().record("add_rows", std::move(out), {x, bias},
                           [ix, ib, rows, n](Tape<Real>& t, std::size_t self) {
                               const auto& g = t.grad(self);
                               t.accumulate(ix, g);
                               if (t.needs_grad(ib)) {
                                   auto& gb = t.grad(ib);
                                   for (std::size_t r = 0; r < rows; ++r) {
                                       for (std::size_t c = 0; c < n; ++c) {
                                           gb[c] += g(r, c);
                                       }
                                   }
                               }
                           });
}

/// y[T, out] = x[T, in] * W[out, in]^T
template <class Real>
Var<Real> linear(Var<Real> x, Var<Real> w)
{
    detail::is_matrix(x, "linear");
    detail::is_matrix(w, "linear");
    const std::size_t rows = x.value().dim(0), in = x.value().dim(1), out_dim = w.value().dim(0);
    require(w.value().dim(1) == in, "linear: input width " + std::to_string(in) + " vs weight " +
                                        shape_string(w.shape()));
    Tensor<Real> out(Shape{rows, out_dim});
    const Real* xv = x.value().data();
    const Real* wv = w.value().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* xr = xv + r * in;
        for (std::size_t o = 0; o < out_dim; ++o) {
            const Real* wr = wv + o * in;
            Real acc = 0;
            for (std::size_t i = 0; i < in; ++i) {
                acc += xr[i] * wr[i];
            }
            out(r, o) = acc;
        }
    }
    auto ix = x.id(), iw = w.id();
    return x.tape().record("linear", std::move(out), {x, w},
                           [ix, iw, rows, in, out_dim](Tape<Real>& t, std::size_t self) {
                               const auto& g = t.grad(self);
                               if (t.needs_grad(ix)) {
                                   const Real* wv = t.value(iw).data();
                                   auto& gx = t.grad(ix);
                                   for (std::size_t r = 0; r < rows; ++r) {
                                       Real* gxr = gx.data() + r * in;
                                       for (std::size_t o = 0; o < out_dim; ++o) {
                                           const Real go = g(r, o);
                                           const Real* wr = wv + o * in;
                                           for (std::size_t i = 0; i < in; ++i) {
                                               gxr[i] += go * wr[i];
                                           }
                                       }
                                   }
                               }
                               if (t.needs_grad(iw)) {
                                   const Real* xv = t.value(ix).data();
                                   auto& gw = t.grad(iw);
                                   for (std::size_t r = 0; r < rows; ++r) {
                                       const Real* xr = xv + r * in;
                                       for (std::size_t o = 0; o < out_dim; ++o) {
                                           const Real go = g(r, o);
                                           Real* gwr = gw.data() + o * in;
                                           for (std::size_t i = 0; i < in; ++i) {
                                               gwr[i] += go * xr[i];
                                           }
                                       }
                                   }
                               }
                           });
}

template <class Real>
Var<Real> silu(Var<Real> a)
{
    Tensor<Real> out = a.value();
    for (auto& v : out.values()) {
        v = silu_scalar(v);
    }
    auto ia = a.id();
    return a.tape().record("silu", std::move(out), {a}, [ia](Tape<Real>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& x = t.value(ia);
        auto& ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const Real s = detail::sigmoid(x[i]);
            ga[i] += g[i] * s * (Real{1} + x[i] * (Real{1} - s));
        }
    });
}

template <class Real>
Var<Real> softplus(Var<Real> a)
{
    Tensor<Real> out = a.value();
    for (auto& v : out.values()) {
        v = softplus_scalar(v);
    }
    auto ia = a.id();
    return a.tape().record("softplus", std::move(out), {a}, [ia](Tape<Real>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& x = t.value(ia);
        auto& ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * (x[i] > Real{30} ? Real{1} : detail::sigmoid(x[i]));
        }
    });
}

template <class Real>
Var<Real> exp(Var<Real> a)
{
    Tensor<Real> out = a.value();
    for (auto& v : out.values()) {
        v = std::exp(v);
    }
    auto ia = a.id();
    return a.tape().record("exp", std::move(out), {a}, [ia](Tape<Real>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& y = t.value(self);
        auto& ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * y[i];
        }
    });
}

/// Elementwise min(a, cap).
template <class Real>
Var<Real> clamp_max(Var<Real> a, Real cap)
{
    Tensor<Real> out = a.value();
    for (auto& v : out.values()) {
        v = std::min(v, cap);
    }
    auto ia = a.id();
    return a.tape().record("clamp_max", std::move(out), {a}, [ia, cap](Tape<Real>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& x = t.value(ia);
        auto& ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (x[i] < cap) {
                ga[i] += g[i];
            }
        }
    });
}

template <class Real>
Var<Real> sum(Var<Real> a)
{
    Real acc = 0;
    for (Real v : a.value().values()) {
        acc += v;
    }
    auto ia = a.id();
    return a.tape().record("sum", Tensor<Real>::scalar(acc), {a}, [ia](Tape<Real>& t, std::size_t self) {
        const Real g = t.grad(self)[0];
        auto& ga = t.grad(ia);
        for (auto& v : ga.values()) {
            v += g;
        }
    });
}

template <class Real>
Var<Real> mean(Var<Real> a)
{
    require(a.value().size() > 0, "mean of empty tensor");
    return scale(sum(a), Real{1} / static_cast<Real>(a.value().size()));
}

/// Sum of scalars, accumulated in argument order.
template <class Real>
Var<Real> add_scalars(const std::vector<Var<Real>>& terms)
{
    require(!terms.empty(), "add_scalars: no terms");
    Real acc = 0;
    std::vector<std::size_t> ids;
    for (const auto& v : terms) {
        require(v.value().size() == 1, "add_scalars: non-scalar term");
        acc += v.value()[0];
        ids.push_back(v.id());
    }
    return terms.front().tape().record("add_scalars", Tensor<Real>::scalar(acc), terms,
                                       [ids](Tape<Real>& t, std::size_t self) {
                                           const Real g = t.grad(self)[0];
                                           for (auto id : ids) {
                                               if (t.needs_grad(id)) {
                                                   t.grad(id)[0] += g;
                                               }
                                           }
                                       });
}

/// Columns [begin, end) of a matrix.
template <class Real>
Var<Real> slice_cols(Var<Real> x, std::size_t begin, std::size_t end)
{
    detail::is_matrix(x, "slice_cols");
    const std::size_t rows = x.value().dim(0), n = x.value().dim(1);
    require(begin <= end && end <= n, "slice_cols: range out of bounds");
    const std::size_t w = end - begin;
    Tensor<Real> out(Shape{rows, w});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            out(r, c) = x.value()(r, begin + c);
        }
    }
    auto ix = x.id();
    return x.tape().record("slice_cols", std::move(out), {x},
                           [ix, rows, w, begin](Tape<Real>& t, std::size_t self) {
                               const auto& g = t.grad(self);
                               auto& gx = t.grad(ix);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t c = 0; c < w; ++c) {
                                       gx(r, begin + c) += g(r, c);
                                   }
                               }
                           });
}

template <class Real>
Var<Real> concat_cols(const std::vector<Var<Real>>& parts)
{
    require(!parts.empty(), "concat_cols: no inputs");
    const std::size_t rows = parts.front().value().dim(0);
    std::size_t total = 0;
    std::vector<std::size_t> widths, ids;
    for (const auto& p : parts) {
        detail::is_matrix(p, "concat_cols");
        require(p.value().dim(0) == rows, "concat_cols: row count mismatch");
        widths.push_back(p.value().dim(1));
        ids.push_back(p.id());
        total += p.value().dim(1);
    }
    Tensor<Real> out(Shape{rows, total});
    std::size_t off = 0;
    for (const auto& p : parts) {
        const auto& v = p.value();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < v.dim(1); ++c) {
                out(r, off + c) = v(r, c);
            }
        }
        off += v.dim(1);
    }
    return parts.front().tape().record("concat_cols", std::move(out), parts,
                                       [ids, widths, rows](Tape<Real>& t, std::size_t self) {
                                           const auto& g = t.grad(self);
                                           std::size_t off = 0;
                                           for (std::size_t k = 0; k < ids.size(); ++k) {
                                               if (t.needs_grad(ids[k])) {
                                                   auto& gp = t.grad(ids[k]);
                                                   for (std::size_t r = 0; r < rows; ++r) {
                                                       for (std::size_t c = 0; c < widths[k]; ++c) {
                                                           gp(r, c) += g(r, off + c);
                                                       }
                                                   }
                                               }
                                               off += widths[k];
                                           }
                                       });
}

/// RMS normalization over `groups` equal column blocks of each row, then a
/// per-column gain. groups == 1 is the ordinary RMSnorm.
template <class Real>
Var<Real> rmsnorm(Var<Real> x, Var<Real> gain, std::size_t groups = 1, Real eps = Real(1e-6))
{
    detail::is_matrix(x, "rmsnorm");
    const std::size_t rows = x.value().dim(0), n = x.value().dim(1);
    require(gain.value().size() == n, "rmsnorm: gain size " + std::to_string(gain.value().size()) +
                                          " vs width " + std::to_string(n));
    require(groups >= 1 && n % groups == 0, "rmsnorm: group count must divide width");
    const std::size_t gw = n / groups;
    Tensor<Real> out(Shape{rows, n});
    std::vector<Real> inv_rms(rows * groups);
    const auto& xv = x.value();
    const auto& gv = gain.value();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t grp = 0; grp < groups; ++grp) {
            Real ss = 0;
            for (std::size_t c = grp * gw; c < (grp + 1) * gw; ++c) {
                ss += xv(r, c) * xv(r, c);
            }
            const Real inv = Real{1} / std::sqrt(ss / static_cast<Real>(gw) + eps);
            inv_rms[r * groups + grp] = inv;
            for (std::size_t c = grp * gw; c < (grp + 1) * gw; ++c) {
                out(r, c) = xv(r, c) * inv * gv[c];
            }
        }
    }
    auto ix = x.id(), ig = gain.id();
    return x.tape().record(
        "rmsnorm", std::move(out), {x, gain},
        [ix, ig, rows, n, groups, gw, inv_rms = std::move(inv_rms)](Tape<Real>& t, std::size_t self) {
            const auto& g = t.grad(self);
            const auto& xv = t.value(ix);
            const auto& gv = t.value(ig);
            const bool want_x = t.needs_grad(ix), want_g = t.needs_grad(ig);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t grp = 0; grp < groups; ++grp) {
                    const Real inv = inv_rms[r * groups + grp];
                    const std::size_t c0 = grp * gw, c1 = (grp + 1) * gw;
                    if (want_g) {
                        auto& gg = t.grad(ig);
                        for (std::size_t c = c0; c < c1; ++c) {
                            gg[c] += g(r, c) * xv(r, c) * inv;
                        }
                    }
                    if (want_x) {
                        Real dot = 0;
                        for (std::size_t c = c0; c < c1; ++c) {
                            dot += g(r, c) * gv[c] * xv(r, c) * inv;
                        }
                        dot /= static_cast<Real>(gw);
                        auto& gx = t.grad(ix);
                        for (std::size_t c = c0; c < c1; ++c) {
                            const Real xhat = xv(r, c) * inv;
                            gx(r, c) += (g(r, c) * gv[c] - xhat * dot) * inv;
                        }
                    }
                }
            }
            (void)n;
        });
}

/// Rows of W[vocab, d] selected by token id.
template <class Real>
Var<Real> embedding(Var<Real> table, std::span<const std::int32_t> tokens)
{
    detail::is_matrix(table, "embedding");
    const std::size_t vocab = table.value().dim(0), d = table.value().dim(1);
    Tensor<Real> out(Shape{tokens.size(), d});
    std::vector<std::int32_t> ids(tokens.begin(), tokens.end());
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab) {
            throw ContractError("embedding: token id " + std::to_string(ids[r]) + " outside vocabulary of " +
                                std::to_string(vocab));
        }
        for (std::size_t c = 0; c < d; ++c) {
            out(r, c) = table.value()(static_cast<std::size_t>(ids[r]), c);
        }
    }
    auto it = table.id();
    return table.tape().record("embedding", std::move(out), {table},
                               [it, d, ids = std::move(ids)](Tape<Real>& t, std::size_t self) {
                                   const auto& g = t.grad(self);
                                   auto& gt = t.grad(it);
                                   for (std::size_t r = 0; r < ids.size(); ++r) {
                                       for (std::size_t c = 0; c < d; ++c) {
                                           gt(static_cast<std::size_t>(ids[r]), c) += g(r, c);
                                       }
                                   }
                               });
}

/// Mean next-token cross-entropy over rows whose target is >= 0; rows with a
/// negative target are ignored. Returns a scalar.
template <class Real>
Var<Real> cross_entropy(Var<Real> logits, std::span<const std::int32_t> targets)
{
    detail::is_matrix(logits, "cross_entropy");
    const std::size_t rows = logits.value().dim(0), vocab = logits.value().dim(1);
    require(targets.size() == rows, "cross_entropy: target count mismatch");
    std::vector<std::int32_t> tg(targets.begin(), targets.end());
    Tensor<Real> probs(Shape{rows, vocab});
    Real total = 0;
    std::size_t counted = 0;
    const auto& lv = logits.value();
    for (std::size_t r = 0; r < rows; ++r) {
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t c = 0; c < vocab; ++c) {
            mx = std::max(mx, lv(r, c));
        }
        Real z = 0;
        for (std::size_t c = 0; c < vocab; ++c) {
            probs(r, c) = std::exp(lv(r, c) - mx);
            z += probs(r, c);
        }
        for (std::size_t c = 0; c < vocab; ++c) {
            probs(r, c) /= z;
        }
        if (tg[r] >= 0) {
            require(static_cast<std::size_t>(tg[r]) < vocab, "cross_entropy: target outside vocabulary");
            total += -(lv(r, static_cast<std::size_t>(tg[r])) - mx - std::log(z));
            ++counted;
        }
    }
    require(counted > 0, "cross_entropy: no valid targets");
    const Real inv = Real{1} / static_cast<Real>(counted);
    auto il = logits.id();
    return logits.tape().record(
        "cross_entropy", Tensor<Real>::scalar(total * inv), {logits},
        [il, rows, vocab, inv, tg = std::move(tg), probs = std::move(probs)](Tape<Real>& t, std::size_t self) {
            const Real g = t.grad(self)[0] * inv;
            auto& gl = t.grad(il);
            for (std::size_t r = 0; r < rows; ++r) {
                if (tg[r] < 0) {
                    continue;
                }
                for (std::size_t c = 0; c < vocab; ++c) {
                    gl(r, c) += g * probs(r, c);
                }
                gl(r, static_cast<std::size_t>(tg[r])) -= g;
            }
        });
}

} // namespace hlm::ops
