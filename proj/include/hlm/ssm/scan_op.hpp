// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "hlm/numerics/tape.hpp"
#include "hlm/ssm/scan.hpp"

namespace hlm::ssm {

/// Differentiable selective scan. The forward value comes from the chunked
/// kernel (chunk_size 0 selects the sequential one); backward recomputes the
/// hidden states sequentially and runs the adjoint recurrence
///   lam_t = C_t gy_t + Abar_{t+1} lam_{t+1}.
/// The initial state is a constant. When `final` is non-null it receives the
/// state after the last timestep.
template <class Real>
Var<Real> ssm_scan(Var<Real> x, Var<Real> B, Var<Real> C, Var<Real> dt, Var<Real> A_log, Var<Real> D,
                   std::span<const std::uint8_t> resets, const SsmDims& dims, const Tensor<Real>& init_hidden,
                   std::size_t chunk_size = 0, Tensor<Real>* final = nullptr)
{
    ScanInputs<Real> in{x.value(), B.value(), C.value(), dt.value(), A_log.value(), D.value(), resets};
    SsmState<Real> init;
    init.hidden = init_hidden;
    auto res = chunk_size == 0 ? ssm_scan_sequential(in, dims, init) : ssm_scan_chunked(in, dims, init, chunk_size);
    if (final) {
        *final = res.final.hidden;
    }
    std::vector<std::uint8_t> rs(resets.begin(), resets.end());
    const auto ix = x.id(), iB = B.id(), iC = C.id(), idt = dt.id(), iA = A_log.id(), iD = D.id();
    return x.tape().record(
        "ssm_scan", std::move(res.y), {x, B, C, dt, A_log, D},
        [=, rs = std::move(rs)](Tape<Real>& tp, std::size_t self) {
            const auto& gy = tp.grad(self);
            const auto& xv = tp.value(ix);
            const auto& Bv = tp.value(iB);
            const auto& Cv = tp.value(iC);
            const auto& dtv = tp.value(idt);
            const auto& Av = tp.value(iA);
            const auto& Dv = tp.value(iD);
            const std::size_t T = xv.dim(0), H = dims.n_heads, P = dims.d_head, N = dims.d_state;
            const std::size_t hpg = dims.heads_per_group();

            Tensor<Real> gx(xv.shape()), gB(Bv.shape()), gC(Cv.shape()), gdt(dtv.shape()), gA(Av.shape()),
                gD(Dv.shape());
            std::vector<Real> hs((T + 1) * P * N), lam(P * N), abar(T);
            for (std::size_t hd = 0; hd < H; ++hd) {
                const std::size_t g = hd / hpg;
                const Real a = std::exp(Av[hd]);
                for (std::size_t t = 0; t < T; ++t) {
                    abar[t] = std::exp(detail::log_decay(a, dtv(t, hd), rs[t]));
                }
                // hs[t+1] = state after timestep t; hs[0] = initial state
                std::copy(init_hidden.data() + hd * P * N, init_hidden.data() + (hd + 1) * P * N, hs.begin());
                for (std::size_t t = 0; t < T; ++t) {
                    const Real* prev = hs.data() + t * P * N;
                    Real* cur = hs.data() + (t + 1) * P * N;
                    for (std::size_t p = 0; p < P; ++p) {
                        const Real w = dtv(t, hd) * xv(t, hd * P + p);
                        for (std::size_t n = 0; n < N; ++n) {
                            cur[p * N + n] = abar[t] * prev[p * N + n] + Bv(t, g * N + n) * w;
                        }
                    }
                }
                std::fill(lam.begin(), lam.end(), Real{0});
                for (std::size_t t = T; t-- > 0;) {
                    const Real* prev = hs.data() + t * P * N;
                    const Real* cur = hs.data() + (t + 1) * P * N;
                    const Real carry = t + 1 < T ? abar[t + 1] : Real{0};
                    Real g_abar = 0, g_dt = 0;
                    for (std::size_t p = 0; p < P; ++p) {
                        const std::size_t col = hd * P + p;
                        const Real gyv = gy(t, col);
                        const Real xval = xv(t, col);
                        gD[hd] += gyv * xval;
                        Real gxv = Dv[hd] * gyv;
                        for (std::size_t n = 0; n < N; ++n) {
                            Real& l = lam[p * N + n];
                            l = Cv(t, g * N + n) * gyv + carry * l;
                            gC(t, g * N + n) += gyv * cur[p * N + n];
                            const Real bn = Bv(t, g * N + n);
                            gxv += l * bn * dtv(t, hd);
                            gB(t, g * N + n) += l * dtv(t, hd) * xval;
                            g_dt += l * bn * xval;
                            g_abar += l * prev[p * N + n];
                        }
                        gx(t, col) += gxv;
                    }
                    // d abar / d dt = -e^A abar, d abar / d A_log = -e^A dt abar
                    gdt(t, hd) += g_dt - a * abar[t] * g_abar;
                    gA[hd] += -a * dtv(t, hd) * abar[t] * g_abar;
                }
            }
            tp.accumulate(ix, gx);
            tp.accumulate(iB, gB);
            tp.accumulate(iC, gC);
            tp.accumulate(idt, gdt);
            tp.accumulate(iA, gA);
            tp.accumulate(iD, gD);
        });
}

} // namespace hlm::ssm
