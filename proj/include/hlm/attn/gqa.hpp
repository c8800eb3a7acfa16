// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "hlm/numerics/tape.hpp"

namespace hlm::attn {

struct GqaDims {
    std::size_t n_q_heads = 1;
    std::size_t n_kv_heads = 1;
    std::size_t d_head = 2;

    std::size_t d_attn() const { return n_q_heads * d_head; }
    std::size_t d_kv() const { return n_kv_heads * d_head; }
    std::size_t group_size() const { return n_q_heads / n_kv_heads; }

    void validate() const
    {
        require(n_q_heads >= 1 && n_kv_heads >= 1 && d_head >= 1, "GqaDims: extents must be >= 1");
        require(n_q_heads % n_kv_heads == 0, "GqaDims: query heads must be a multiple of kv heads");
    }
};

inline void check_doc_ids(std::span<const std::int32_t> doc_ids)
{
    for (std::size_t t = 1; t < doc_ids.size(); ++t) {
        if (doc_ids[t] < doc_ids[t - 1]) {
            throw ContractError("attention: doc_ids decrease at position " + std::to_string(t));
        }
    }
}

/// Softmax attention core. Row t of query head i attends to rows s <= t with
/// doc_ids[s] == doc_ids[t], using kv head i / group_size. No score scaling is
/// applied; any temperature lives in the key projection.
/// q [T, n_q * d_head], k and v [T, n_kv * d_head] -> [T, n_q * d_head].
template <class Real>
Var<Real> attention_core(Var<Real> q, Var<Real> k, Var<Real> v, std::span<const std::int32_t> doc_ids,
                         const GqaDims& dims)
{
    dims.validate();
    const std::size_t T = q.value().dim(0), dh = dims.d_head, G = dims.group_size();
    require(q.shape() == Shape({T, dims.d_attn()}), "attention_core: q must be [T, n_q * d_head]");
    require(k.shape() == Shape({T, dims.d_kv()}) && v.shape() == k.shape(),
            "attention_core: k and v must be [T, n_kv * d_head]");
    require(doc_ids.size() == T, "attention_core: one doc id per row");
    check_doc_ids(doc_ids);

    // first row of the document containing t; docs are contiguous runs
    std::vector<std::size_t> start(T);
    for (std::size_t t = 0; t < T; ++t) {
        start[t] = (t > 0 && doc_ids[t] == doc_ids[t - 1]) ? start[t - 1] : t;
    }

    const auto& qv = q.value();
    const auto& kv = k.value();
    const auto& vv = v.value();
    Tensor<Real> out(Shape{T, dims.d_attn()});
    // probs[h][t][s - start[t]]
    std::vector<std::vector<Real>> probs(dims.n_q_heads * T);
    for (std::size_t h = 0; h < dims.n_q_heads; ++h) {
        const std::size_t kh = h / G;
        for (std::size_t t = 0; t < T; ++t) {
            auto& p = probs[h * T + t];
            p.resize(t - start[t] + 1);
            Real mx = -std::numeric_limits<Real>::infinity();
            for (std::size_t s = start[t]; s <= t; ++s) {
                Real dot = 0;
                for (std::size_t c = 0; c < dh; ++c) {
                    dot += qv(t, h * dh + c) * kv(s, kh * dh + c);
                }
                p[s - start[t]] = dot;
                mx = std::max(mx, dot);
            }
            Real z = 0;
            for (auto& e : p) {
                e = std::exp(e - mx);
                z += e;
            }
            for (auto& e : p) {
                e /= z;
            }
            for (std::size_t s = start[t]; s <= t; ++s) {
                const Real w = p[s - start[t]];
                for (std::size_t c = 0; c < dh; ++c) {
                    out(t, h * dh + c) += w * vv(s, kh * dh + c);
                }
            }
        }
    }

    const auto iq = q.id(), ik = k.id(), iv = v.id();
    return q.tape().record(
        "attention_core", std::move(out), {q, k, v},
        [=, probs = std::move(probs), start = std::move(start)](Tape<Real>& tp, std::size_t self) {
            const auto& g = tp.grad(self);
            const auto& qv = tp.value(iq);
            const auto& kv = tp.value(ik);
            const auto& vv = tp.value(iv);
            Tensor<Real> gq(qv.shape()), gk(kv.shape()), gv(vv.shape());
            std::vector<Real> dp;
            for (std::size_t h = 0; h < dims.n_q_heads; ++h) {
                const std::size_t kh = h / G;
                for (std::size_t t = 0; t < T; ++t) {
                    const auto& p = probs[h * T + t];
                    dp.assign(p.size(), Real{0});
                    Real dot_pg = 0;
                    for (std::size_t s = start[t]; s <= t; ++s) {
                        const Real w = p[s - start[t]];
                        Real acc = 0;
                        for (std::size_t c = 0; c < dh; ++c) {
                            acc += g(t, h * dh + c) * vv(s, kh * dh + c);
                            gv(s, kh * dh + c) += w * g(t, h * dh + c);
                        }
                        dp[s - start[t]] = acc;
                        dot_pg += w * acc;
                    }
                    for (std::size_t s = start[t]; s <= t; ++s) {
                        const Real ds = p[s - start[t]] * (dp[s - start[t]] - dot_pg);
                        for (std::size_t c = 0; c < dh; ++c) {
                            gq(t, h * dh + c) += ds * kv(s, kh * dh + c);
                            gk(s, kh * dh + c) += ds * qv(t, h * dh + c);
                        }
                    }
                }
            }
            tp.accumulate(iq, gq);
            tp.accumulate(ik, gk);
            tp.accumulate(iv, gv);
        });
}

} // namespace hlm::attn
