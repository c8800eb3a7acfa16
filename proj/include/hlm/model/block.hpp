// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hlm/attn/attention.hpp"
#include "hlm/model/config.hpp"
#include "hlm/model/mlp.hpp"
#include "hlm/ssm/mamba2.hpp"

namespace hlm::model {

/// Everything a block needs besides its parameters.
struct BlockDims {
    Arrangement arrangement = Arrangement::SA_M;
    ssm::Mamba2Dims ssm;
    attn::GqaDims attn;
    attn::RopeSpec rope;
    std::size_t d_mlp = 1;
};

/// Per-row sequence layout: reset flags, document ids and RoPE positions.
struct RowLayout {
    std::span<const std::uint8_t> resets;
    std::span<const std::int32_t> doc_ids;
    std::span<const std::int32_t> positions;
};

/// norms holds norm_count(arrangement) gain vectors in application order.
template <class Real>
struct LayerVars {
    ssm::Mamba2Vars<Real> ssm;
    attn::AttnVars<Real> attn;
    MlpVars<Real> mlp;
    std::vector<Var<Real>> norms;
};

struct BlockContext {
    const mup::MuPMultiplierSet* mults = nullptr;
    ssm::DtPolicy policy;
    std::int64_t step = 0;
};

/// One hybrid block.
///   SAM:   n = N(r);  r + S(n) + A(n) + M(n)
///   SA_M:  n = N(r);  r' = r + S(n) + A(n);  r' + M(N'(r'))
///   S_A_M: r' = r + S(N1(r));  r'' = r' + A(N2(r'));  r'' + M(N3(r''))
template <class Real>
Var<Real> block_forward(Var<Real> r, const LayerVars<Real>& p, const BlockDims& dims, const RowLayout& row,
                        const BlockContext& ctx, ssm::SsmState<Real>* state = nullptr)
{
    require(ctx.mults != nullptr, "block_forward: multipliers missing");
    require(p.norms.size() == norm_count(dims.arrangement), "block_forward: wrong number of norms for arrangement");
    const auto& mults = *ctx.mults;
    auto S = [&](Var<Real> x) {
        return ssm::mamba2_block_forward(x, p.ssm, mults, ctx.policy, row.resets, ctx.step, dims.ssm, state);
    };
    auto A = [&](Var<Real> x) {
        return attn::gqa_attention(x, p.attn, dims.rope, dims.attn, mults, row.doc_ids, row.positions);
    };
    auto M = [&](Var<Real> x) { return mlp_forward(x, p.mlp, mults); };
    auto N = [&](Var<Real> x, std::size_t i) { return ops::rmsnorm(x, p.norms[i]); };

    switch (dims.arrangement) {
    case Arrangement::SAM: {
        auto n = N(r, 0);
        return ops::add(ops::add(ops::add(r, S(n)), A(n)), M(n));
    }
    case Arrangement::SA_M: {
        auto n = N(r, 0);
        auto r1 = ops::add(ops::add(r, S(n)), A(n));
        return ops::add(r1, M(N(r1, 1)));
    }
    case Arrangement::S_A_M: {
        auto r1 = ops::add(r, S(N(r, 0)));
        auto r2 = ops::add(r1, A(N(r1, 1)));
        return ops::add(r2, M(N(r2, 2)));
    }
    }
    return r;
}

} // namespace hlm::model
