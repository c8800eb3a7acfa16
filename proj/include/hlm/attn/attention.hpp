// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>

#include "hlm/attn/gqa.hpp"
#include "hlm/attn/rope.hpp"
#include "hlm/mup/multipliers.hpp"
#include "hlm/numerics/ops.hpp"

namespace hlm::attn {

/// W_Q [n_q*d_head, d]; W_K, W_V [n_kv*d_head, d]; W_out [d, n_q*d_head].
template <class Real>
struct AttnVars {
    Var<Real> W_Q, W_K, W_V, W_out;
};

/// Grouped-query attention over the residual slice r [T, d]:
///   Q = rope(W_Q r), K = rope(m_key W_K r), V = W_V r,
///   out = m_attn W_out attn(Q, K, V)
/// with causal, same-document masking.
template <class Real>
Var<Real> gqa_attention(Var<Real> r, const AttnVars<Real>& p, const RopeSpec& rope, const GqaDims& dims,
                        const mup::MuPMultiplierSet& mults, std::span<const std::int32_t> doc_ids,
                        std::span<const std::int32_t> positions)
{
    require(rope.d_head == dims.d_head, "gqa_attention: rope and head dims disagree");
    require(positions.size() == r.value().dim(0), "gqa_attention: one position per row");
    check_doc_ids(doc_ids);
    const auto m_key = static_cast<Real>(mults.forward(mup::Forward::key));
    const auto m_attn = static_cast<Real>(mults.forward(mup::Forward::attn));
    auto q = apply_rope(ops::linear(r, p.W_Q), positions, rope);
    auto k = apply_rope(ops::scale(ops::linear(r, p.W_K), m_key), positions, rope);
    auto v = ops::linear(r, p.W_V);
    auto o = attention_core(q, k, v, doc_ids, dims);
    return ops::scale(ops::linear(o, p.W_out), m_attn);
}

} // namespace hlm::attn
