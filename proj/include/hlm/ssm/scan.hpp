// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hlm/numerics/tensor.hpp"

namespace hlm::ssm {

/// Additive bias injected into the decay exponent at document starts.
inline constexpr double kResetBias = -80.0;

/// Head/group/state layout of one SSM mixer.
struct SsmDims {
    std::size_t n_heads = 1;
    std::size_t d_head = 1;
    std::size_t d_state = 1;
    std::size_t n_groups = 1;

    std::size_t d_ssm() const { return n_heads * d_head; }
    std::size_t bc_width() const { return n_groups * d_state; }
    std::size_t heads_per_group() const { return n_heads / n_groups; }

    void validate() const
    {
        require(n_heads >= 1 && d_head >= 1 && d_state >= 1 && n_groups >= 1, "SsmDims: extents must be >= 1");
        require(n_heads % n_groups == 0, "SsmDims: group count must divide head count");
    }
};

/// Recurrent hand-off between chunks: hidden [heads, d_head, d_state] and the
/// last k-1 conv inputs [k-1, channels]. Rows of conv_tail that precede a
/// document reset are stored as zeros.
template <class Real>
struct SsmState {
    Tensor<Real> hidden;
    Tensor<Real> conv_tail;

    static SsmState zeros(const SsmDims& dims, std::size_t conv_k = 1, std::size_t conv_channels = 0)
    {
        SsmState s;
        s.hidden = Tensor<Real>(Shape{dims.n_heads, dims.d_head, dims.d_state});
        s.conv_tail = Tensor<Real>(Shape{conv_k > 0 ? conv_k - 1 : 0, conv_channels});
        return s;
    }
};

/// Per-timestep scan inputs. x [T, heads*d_head], B and C [T, groups*d_state],
/// dt [T, heads] (post-softplus, > 0), A_log and D [heads], resets [T].
template <class Real>
struct ScanInputs {
    const Tensor<Real>& x;
    const Tensor<Real>& B;
    const Tensor<Real>& C;
    const Tensor<Real>& dt;
    const Tensor<Real>& A_log;
    const Tensor<Real>& D;
    std::span<const std::uint8_t> resets;
};

template <class Real>
struct ScanResult {
    Tensor<Real> y;
    SsmState<Real> final;
};

namespace detail {

template <class Real>
std::size_t check_inputs(const ScanInputs<Real>& in, const SsmDims& dims)
{
    dims.validate();
    const std::size_t T = in.x.rows();
    require(in.x.rank() == 2 && in.x.dim(1) == dims.d_ssm(), "scan: x must be [T, heads*d_head]");
    require(in.B.shape() == Shape({T, dims.bc_width()}), "scan: B must be [T, groups*d_state]");
    require(in.C.shape() == Shape({T, dims.bc_width()}), "scan: C must be [T, groups*d_state]");
    require(in.dt.shape() == Shape({T, dims.n_heads}), "scan: dt must be [T, heads]");
    require(in.A_log.size() == dims.n_heads && in.D.size() == dims.n_heads, "scan: A_log and D must be [heads]");
    require(in.resets.size() == T, "scan: resets must have one flag per timestep");
    for (std::size_t i = 0; i < in.dt.size(); ++i) {
        if (!(in.dt[i] > 0)) {
            throw ContractError("scan: dt must be positive (timestep " + std::to_string(i / dims.n_heads) + ")");
        }
    }
    return T;
}

/// log of the decay factor: -exp(A_log) * dt + reset * (-80).
template <class Real>
Real log_decay(Real a, Real dt, std::uint8_t reset)
{
    return -a * dt + (reset ? static_cast<Real>(kResetBias) : Real{0});
}

template <class Real>
void check_state(const Tensor<Real>& h, std::size_t t)
{
    if (!h.all_finite()) {
        throw NumericError("scan: non-finite hidden state at timestep " + std::to_string(t));
    }
}

} // namespace detail

/// Decay factor exp(-exp(A_log) * dt - 80 * reset).
template <class Real>
Real decay_factor(Real A_log, Real dt, bool reset)
{
    return std::exp(detail::log_decay(std::exp(A_log), dt, static_cast<std::uint8_t>(reset)));
}

/// Reference recurrence, one timestep at a time. The state is written before
/// it is read: h_t = Abar_t h_{t-1} + B_t dt_t x_t, y_t = C_t . h_t + D x_t.
template <class Real>
ScanResult<Real> ssm_scan_sequential(const ScanInputs<Real>& in, const SsmDims& dims, const SsmState<Real>& init)
{
    const std::size_t T = detail::check_inputs(in, dims);
    const std::size_t H = dims.n_heads, P = dims.d_head, N = dims.d_state, hpg = dims.heads_per_group();
    require(init.hidden.shape() == Shape({H, P, N}), "scan: init hidden must be [heads, d_head, d_state]");

    ScanResult<Real> out{Tensor<Real>(Shape{T, H * P}), init};
    auto& h = out.final.hidden;
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t hd = 0; hd < H; ++hd) {
            const std::size_t g = hd / hpg;
            const Real dt = in.dt(t, hd);
            const Real abar = std::exp(detail::log_decay(std::exp(in.A_log[hd]), dt, in.resets[t]));
            for (std::size_t p = 0; p < P; ++p) {
                const Real xv = in.x(t, hd * P + p);
                Real* hp = h.data() + (hd * P + p) * N;
                Real acc = 0;
                for (std::size_t n = 0; n < N; ++n) {
                    hp[n] = abar * hp[n] + in.B(t, g * N + n) * dt * xv;
                    acc += in.C(t, g * N + n) * hp[n];
                }
                out.y(t, hd * P + p) = acc + in.D[hd] * xv;
            }
        }
        detail::check_state(h, t);
    }
    return out;
}

/// Chunked form of the same recurrence. Inside a chunk the output is the
/// quadratic (masked mixing) form plus the decayed contribution of the
/// incoming state; the state is then advanced to the chunk end and handed to
/// the next chunk.
template <class Real>
ScanResult<Real> ssm_scan_chunked(const ScanInputs<Real>& in, const SsmDims& dims, const SsmState<Real>& init,
                                  std::size_t chunk_size)
{
    require(chunk_size >= 1, "scan: chunk_size must be >= 1");
    const std::size_t T = detail::check_inputs(in, dims);
    const std::size_t H = dims.n_heads, P = dims.d_head, N = dims.d_state, hpg = dims.heads_per_group();
    require(init.hidden.shape() == Shape({H, P, N}), "scan: init hidden must be [heads, d_head, d_state]");

    ScanResult<Real> out{Tensor<Real>(Shape{T, H * P}), init};
    auto& h = out.final.hidden;
    std::vector<Real> log_a(chunk_size), mix(chunk_size * chunk_size), carry(chunk_size);

    for (std::size_t c0 = 0; c0 < T; c0 += chunk_size) {
        const std::size_t c1 = std::min(T, c0 + chunk_size), L = c1 - c0;
        for (std::size_t hd = 0; hd < H; ++hd) {
            const std::size_t g = hd / hpg;
            const Real a = std::exp(in.A_log[hd]);
            for (std::size_t i = 0; i < L; ++i) {
                log_a[i] = detail::log_decay(a, in.dt(c0 + i, hd), in.resets[c0 + i]);
            }
            // mix[i][j] = C_i . B_j dt_j prod_{k=j+1..i} Abar_k for j <= i
            for (std::size_t i = 0; i < L; ++i) {
                Real seg = 0;
                for (std::size_t j = i + 1; j-- > 0;) {
                    Real cb = 0;
                    for (std::size_t n = 0; n < N; ++n) {
                        cb += in.C(c0 + i, g * N + n) * in.B(c0 + j, g * N + n);
                    }
                    mix[i * chunk_size + j] = cb * in.dt(c0 + j, hd) * std::exp(seg);
                    seg += log_a[j];
                }
                // seg now holds sum_{k=0..i} log_a[k]: decay of the incoming state
                carry[i] = std::exp(seg);
            }
            for (std::size_t p = 0; p < P; ++p) {
                const Real* hin = h.data() + (hd * P + p) * N;
                for (std::size_t i = 0; i < L; ++i) {
                    Real acc = 0;
                    for (std::size_t n = 0; n < N; ++n) {
                        acc += in.C(c0 + i, g * N + n) * hin[n];
                    }
                    acc *= carry[i];
                    for (std::size_t j = 0; j <= i; ++j) {
                        acc += mix[i * chunk_size + j] * in.x(c0 + j, hd * P + p);
                    }
                    out.y(c0 + i, hd * P + p) = acc + in.D[hd] * in.x(c0 + i, hd * P + p);
                }
            }
            // advance state to the chunk end
            for (std::size_t p = 0; p < P; ++p) {
                Real* hp = h.data() + (hd * P + p) * N;
                for (std::size_t n = 0; n < N; ++n) {
                    hp[n] *= carry[L - 1];
                }
                Real seg = 0;
                for (std::size_t j = L; j-- > 0;) {
                    const Real w = std::exp(seg) * in.dt(c0 + j, hd) * in.x(c0 + j, hd * P + p);
                    for (std::size_t n = 0; n < N; ++n) {
                        hp[n] += w * in.B(c0 + j, g * N + n);
                    }
                    seg += log_a[j];
                }
            }
        }
        detail::check_state(h, c1 - 1);
    }
    return out;
}

/// Largest sequence the materialized oracle accepts.
inline constexpr std::size_t kMaxMaterializeLength = 512;

/// Dense causal mixing matrices, one per head: M[h][t][s] =
/// C_t . B_s dt_s prod_{i=s+1..t} Abar_i + D delta_ts (empty product = 1).
/// Verification-only oracle; y_t = sum_s M_ts x_s reproduces the scan from a
/// zero state.
template <class Real>
Tensor<Real> materialize_mixing_matrix(const Tensor<Real>& B, const Tensor<Real>& C, const Tensor<Real>& dt,
                                       const Tensor<Real>& A_log, const Tensor<Real>& D,
                                       std::span<const std::uint8_t> resets, const SsmDims& dims)
{
    dims.validate();
    const std::size_t T = dt.rows();
    if (T > kMaxMaterializeLength) {
        throw ContractError("materialize_mixing_matrix: T=" + std::to_string(T) + " exceeds verification limit " +
                            std::to_string(kMaxMaterializeLength));
    }
    require(B.shape() == Shape({T, dims.bc_width()}) && C.shape() == B.shape(), "materialize: B/C shape");
    require(dt.shape() == Shape({T, dims.n_heads}) && resets.size() == T, "materialize: dt/resets shape");
    const std::size_t H = dims.n_heads, N = dims.d_state, hpg = dims.heads_per_group();
    Tensor<Real> M(Shape{H, T, T});
    for (std::size_t hd = 0; hd < H; ++hd) {
        const std::size_t g = hd / hpg;
        const Real a = std::exp(A_log[hd]);
        for (std::size_t t = 0; t < T; ++t) {
            Real log_prod = 0;
            for (std::size_t s = t + 1; s-- > 0;) {
                Real cb = 0;
                for (std::size_t n = 0; n < N; ++n) {
                    cb += C(t, g * N + n) * B(s, g * N + n);
                }
                M[(hd * T + t) * T + s] = cb * dt(s, hd) * std::exp(log_prod) + (s == t ? D[hd] : Real{0});
                log_prod += detail::log_decay(a, dt(s, hd), resets[s]);
            }
        }
    }
    return M;
}

/// y[t, h*P+p] = sum_s M[h][t][s] x[s, h*P+p]
template <class Real>
Tensor<Real> apply_mixing_matrix(const Tensor<Real>& M, const Tensor<Real>& x, const SsmDims& dims)
{
    const std::size_t H = dims.n_heads, P = dims.d_head, T = x.rows();
    require(M.shape() == Shape({H, T, T}), "apply_mixing_matrix: M shape");
    Tensor<Real> y(Shape{T, H * P});
    for (std::size_t hd = 0; hd < H; ++hd) {
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t p = 0; p < P; ++p) {
                Real acc = 0;
                for (std::size_t s = 0; s <= t; ++s) {
                    acc += M[(hd * T + t) * T + s] * x(s, hd * P + p);
                }
                y(t, hd * P + p) = acc;
            }
        }
    }
    return y;
}

} // namespace hlm::ssm
