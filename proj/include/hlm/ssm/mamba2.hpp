// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>

#include "hlm/mup/multipliers.hpp"
#include "hlm/numerics/ops.hpp"
#include "hlm/ssm/conv.hpp"
#include "hlm/ssm/dt_policy.hpp"
#include "hlm/ssm/scan_op.hpp"

namespace hlm::ssm {

struct Mamba2Dims {
    std::size_t d_model = 1;
    SsmDims ssm;
    std::size_t conv_k = 4;
    /// 0 runs the sequential scan.
    std::size_t chunk_size = 0;

    std::size_t d_ssm() const { return ssm.d_ssm(); }
    /// Channels passing through the convolution: x, B and C.
    std::size_t conv_channels() const { return ssm.d_ssm() + 2 * ssm.bc_width(); }

    void validate() const
    {
        ssm.validate();
        require(d_model >= 1 && conv_k >= 1, "Mamba2Dims: d_model and conv_k must be >= 1");
    }
};

/// Parameters of one SSM mixer as tape leaves.
/// W_x, W_z [d_ssm, d]; W_B, W_C [groups*d_state, d]; W_dt [heads, d];
/// conv_w [channels, k]; conv_b [channels]; b_dt, A_log, D [heads];
/// norm [d_ssm]; W_out [d, d_ssm].
template <class Real>
struct Mamba2Vars {
    Var<Real> W_x, W_z, W_B, W_C, W_dt;
    Var<Real> conv_w, conv_b;
    Var<Real> b_dt, A_log, D;
    Var<Real> norm;
    Var<Real> W_out;
};

/// Pre-softplus dt, post-policy dt and the pieces a caller may want to inspect.
template <class Real>
struct Mamba2Trace {
    Var<Real> dt_raw;
    Var<Real> dt;
};

/// One SSM mixer over u [T, d]:
///   xBC = SiLU(conv(m_x W_x u | m_B W_B u | m_C W_C u)),  z = m_z W_z u,
///   dt = policy(softplus(m_dt W_dt u + b_dt)),
///   y = scan(x, B, C, dt) * SiLU(z),  out = m_SSM W_out norm_groups(y).
/// `state`, when given, supplies the incoming hidden state and conv tail and
/// receives the outgoing ones; otherwise the sequence starts from zeros.
template <class Real>
Var<Real> mamba2_block_forward(Var<Real> u, const Mamba2Vars<Real>& p, const mup::MuPMultiplierSet& mults,
                               const DtPolicy& policy, std::span<const std::uint8_t> resets, std::int64_t step,
                               const Mamba2Dims& dims, SsmState<Real>* state = nullptr,
                               Mamba2Trace<Real>* trace = nullptr)
{
    using mup::Forward;
    dims.validate();
    require(u.value().rank() == 2 && u.value().dim(1) == dims.d_model, "mamba2_block_forward: u must be [T, d_model]");
    require(resets.size() == u.value().dim(0), "mamba2_block_forward: one reset flag per timestep");
    auto m = [&](Forward f) { return static_cast<Real>(mults.forward(f)); };

    auto x_in = ops::scale(ops::linear(u, p.W_x), m(Forward::x));
    auto z = ops::scale(ops::linear(u, p.W_z), m(Forward::z));
    auto b_in = ops::scale(ops::linear(u, p.W_B), m(Forward::B));
    auto c_in = ops::scale(ops::linear(u, p.W_C), m(Forward::C));
    auto dt_in = ops::scale(ops::linear(u, p.W_dt), m(Forward::dt));

    const std::size_t ch = dims.conv_channels(), k = dims.conv_k;
    Tensor<Real> tail(Shape{k - 1, ch});
    Tensor<Real> hidden(Shape{dims.ssm.n_heads, dims.ssm.d_head, dims.ssm.d_state});
    if (state) {
        if (!state->conv_tail.empty()) {
            require(state->conv_tail.shape() == tail.shape(), "mamba2_block_forward: conv tail shape mismatch");
            tail = state->conv_tail;
        }
        if (!state->hidden.empty()) {
            require(state->hidden.shape() == hidden.shape(), "mamba2_block_forward: hidden state shape mismatch");
            hidden = state->hidden;
        }
    }

    auto xbc_raw = ops::concat_cols<Real>({x_in, b_in, c_in});
    auto xbc = ops::silu(causal_conv1d(xbc_raw, p.conv_w, p.conv_b, resets, tail));
    const std::size_t ds = dims.d_ssm(), bw = dims.ssm.bc_width();
    auto xs = ops::slice_cols(xbc, 0, ds);
    auto Bs = ops::slice_cols(xbc, ds, ds + bw);
    auto Cs = ops::slice_cols(xbc, ds + bw, ds + 2 * bw);

    auto dt_raw = ops::add_rows(dt_in, p.b_dt);
    auto dt = apply_dt_policy(ops::softplus(dt_raw), policy, step);
    if (trace) {
        trace->dt_raw = dt_raw;
        trace->dt = dt;
    }

    Tensor<Real> final_hidden;
    auto y = ssm_scan(xs, Bs, Cs, dt, p.A_log, p.D, resets, dims.ssm, hidden, dims.chunk_size, &final_hidden);
    if (state) {
        state->hidden = std::move(final_hidden);
        state->conv_tail = next_conv_tail(xbc_raw.value(), resets, tail, k);
    }
    auto gated = ops::mul(y, ops::silu(z));
    auto normed = ops::rmsnorm(gated, p.norm, dims.ssm.n_groups);
    return ops::scale(ops::linear(normed, p.W_out), m(Forward::ssm));
}

} // namespace hlm::ssm
