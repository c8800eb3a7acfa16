// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hlm/attn/attention.hpp"
#include "hlm/ssm/scan.hpp"
#include "hlm/verify/random_instances.hpp"

namespace hlm::verify {

/// Worst disagreement between the sequential scan, the materialized mixing
/// matrix and the chunked scan at chunk sizes {1, 2, 3, 16, T}. Odd
/// instances carry random mid-sequence resets.
inline double scan_oracle_error(std::uint64_t seed = 2024, int instances = 100, std::size_t max_T = 128)
{
    Rng rng(seed);
    double worst = 0;
    for (int i = 0; i < instances; ++i) {
        const std::size_t T = 1 + rng.below(max_T);
        const auto d = random_dims(rng);
        const auto s = random_scan_instance(rng, T, d, i % 2 ? 0.05 : 0.0);
        const auto zero = ssm::SsmState<double>::zeros(d);
        const auto seq = ssm::ssm_scan_sequential(s.inputs(), d, zero);
        const auto M = ssm::materialize_mixing_matrix(s.B, s.C, s.dt, s.A_log, s.D, s.resets, d);
        worst = std::max(worst, max_abs_diff(seq.y, ssm::apply_mixing_matrix(M, s.x, d)));
        for (std::size_t cs : {std::size_t{1}, std::size_t{2}, std::size_t{3}, std::size_t{16}, T}) {
            worst = std::max(worst, max_abs_diff(seq.y, ssm::ssm_scan_chunked(s.inputs(), d, zero, cs).y));
        }
    }
    return worst;
}

/// Random document lengths covering T; returns the start of every document.
inline std::vector<std::size_t> random_document_starts(Rng& rng, std::size_t T, std::size_t max_len)
{
    std::vector<std::size_t> starts{0};
    for (std::size_t at = 1 + rng.below(max_len); at < T; at += 1 + rng.below(max_len)) {
        starts.push_back(at);
    }
    return starts;
}

struct ResetIsolation {
    /// max over cross-document pairs of |M_ts| / (exp(-80) |M0_ts|); 0 when
    /// every counterpart underflows. Passing means <= 1 up to rounding.
    double worst_ratio = 0;
    std::size_t pairs = 0;
};

/// Packs random documents into one sequence, resets at each document start,
/// and compares every cross-boundary coefficient with the unreset matrix.
inline ResetIsolation reset_isolation(std::uint64_t seed = 77, int instances = 20)
{
    Rng rng(seed);
    ResetIsolation out;
    const double bound = std::exp(-80.0);
    for (int i = 0; i < instances; ++i) {
        const std::size_t T = 8 + rng.below(57);
        const auto d = random_dims(rng);
        auto s = random_scan_instance(rng, T, d, 0.0);
        const auto starts = random_document_starts(rng, T, 16);
        std::vector<std::size_t> doc(T, 0);
        for (std::size_t k = 1; k < starts.size(); ++k) {
            s.resets[starts[k]] = 1;
            std::fill(doc.begin() + static_cast<std::ptrdiff_t>(starts[k]), doc.end(), k);
        }
        const auto M = ssm::materialize_mixing_matrix(s.B, s.C, s.dt, s.A_log, s.D, s.resets, d);
        const auto M0 = ssm::materialize_mixing_matrix(s.B, s.C, s.dt, s.A_log, s.D,
                                                       std::vector<std::uint8_t>(T, 0), d);
        for (std::size_t h = 0; h < d.n_heads; ++h) {
            for (std::size_t t = 0; t < T; ++t) {
                for (std::size_t u = 0; u < t; ++u) {
                    if (doc[u] == doc[t]) {
                        continue;
                    }
                    ++out.pairs;
                    const double m = std::abs(M[(h * T + t) * T + u]);
                    const double m0 = std::abs(M0[(h * T + t) * T + u]);
                    if (m == 0) {
                        continue;
                    }
                    out.worst_ratio = std::max(out.worst_ratio, m / (bound * m0));
                }
            }
        }
    }
    return out;
}

/// Packed-vs-per-document attention forward on random layouts with grouped
/// heads and non-unit key and output multipliers. Returns the max abs error.
inline double attention_packing_error(std::uint64_t seed = 10, int instances = 10)
{
    double worst = 0;
    for (int i = 0; i < instances; ++i) {
        Rng rng(seed + static_cast<std::uint64_t>(i));
        const attn::GqaDims g{4, 2, 4};
        const attn::RopeSpec rope{1e4, g.d_head};
        const std::size_t dm = 8, T = 6 + rng.below(27);
        const double sd = 1.0 / std::sqrt(static_cast<double>(dm));
        const std::vector<Tensor<double>> w{random_normal({g.d_attn(), dm}, rng, sd),
                                            random_normal({g.d_kv(), dm}, rng, sd),
                                            random_normal({g.d_kv(), dm}, rng, sd),
                                            random_normal({dm, g.d_attn()}, rng, sd)};
        auto mults = mup::MuPMultiplierSet::ones(mup::ModelShapes{});
        mults.forward_ref[static_cast<std::size_t>(mup::Forward::key)] = 0.7;
        mults.forward_ref[static_cast<std::size_t>(mup::Forward::attn)] = 1.3;
        const auto u = random_normal({T, dm}, rng);
        auto run = [&](const Tensor<double>& x, const std::vector<std::int32_t>& docs,
                       const std::vector<std::int32_t>& pos) {
            Tape<double> tape;
            attn::AttnVars<double> p{tape.constant(w[0]), tape.constant(w[1]), tape.constant(w[2]),
                                     tape.constant(w[3])};
            return attn::gqa_attention(tape.constant(x), p, rope, g, mults, docs, pos).value();
        };
        auto starts = random_document_starts(rng, T, 9);
        std::vector<std::int32_t> docs(T), pos(T);
        for (std::size_t k = 0; k < starts.size(); ++k) {
            const std::size_t end = k + 1 < starts.size() ? starts[k + 1] : T;
            for (std::size_t t = starts[k]; t < end; ++t) {
                docs[t] = static_cast<std::int32_t>(k);
                pos[t] = static_cast<std::int32_t>(t - starts[k]);
            }
        }
        const auto packed = run(u, docs, pos);
        starts.push_back(T);
        for (std::size_t k = 0; k + 1 < starts.size(); ++k) {
            const std::size_t a = starts[k], b = starts[k + 1];
            Tensor<double> piece(Shape{b - a, dm});
            std::copy(u.data() + a * dm, u.data() + b * dm, piece.data());
            std::vector<std::int32_t> d0(b - a, 0), p(pos.begin() + static_cast<std::ptrdiff_t>(a),
                                                      pos.begin() + static_cast<std::ptrdiff_t>(b));
            const auto alone = run(piece, d0, p);
            for (std::size_t e = 0; e < alone.size(); ++e) {
                worst = std::max(worst, std::abs(alone[e] - packed[a * dm + e]));
            }
        }
    }
    return worst;
}

} // namespace hlm::verify
