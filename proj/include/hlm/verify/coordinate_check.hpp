// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hlm/model/model.hpp"
#include "hlm/mup/scaling.hpp"

namespace hlm::verify {

/// Two-layer SA_M config with small heads, used for width sweeps.
inline model::HybridConfig narrow_config(std::size_t d, model::Arrangement arr, std::uint64_t seed)
{
    model::HybridConfig c;
    c.d_model = d;
    c.n_layers = 2;
    c.vocab = 32;
    c.ssm.d_head = 16;
    c.ssm.d_state = 8;
    c.attn.d_head = 16;
    c.arrangement = arr;
    c.seed = seed;
    return c;
}

struct CoordinateCheck {
    std::vector<std::size_t> widths;
    /// rms[l][w]: seed-averaged block output RMS of layer l at widths[w].
    std::vector<std::vector<double>> rms;
    /// Largest max/min ratio over layers.
    double worst_spread = 0;
};

/// Block output RMS at init with `base` moved to each width by the scaling
/// laws.
inline CoordinateCheck coordinate_check(const mup::MuPMultiplierSet& base, std::vector<std::size_t> widths = {64, 128, 256},
                                        int seeds = 3)
{
    CoordinateCheck out;
    out.widths = widths;
    out.rms.assign(2, {});
    for (std::size_t d : widths) {
        std::vector<double> acc(2, 0.0);
        for (int seed = 0; seed < seeds; ++seed) {
            const auto c = narrow_config(d, model::Arrangement::SA_M, static_cast<std::uint64_t>(seed));
            const auto mults = mup::transfer(base, model::model_shapes(model::resolve_dims(c)));
            auto m = model::init_model<double>(c, mults);
            Rng rng(static_cast<std::uint64_t>(seed));
            std::vector<std::int32_t> tok(16);
            for (auto& t : tok) {
                t = static_cast<std::int32_t>(rng.below(c.vocab));
            }
            model::SingleDocLayout row(tok.size());
            model::BlockContext ctx{&mults, ssm::DtPolicy::none(), 0};
            model::ForwardTaps<double> taps;
            Tape<double> tape;
            auto vars = m.params.bind(tape);
            model::model_forward(m, vars, tok, row.view(), ctx, &taps);
            for (std::size_t l = 0; l < 2; ++l) {
                double s = 0;
                const auto& v = taps.block_outputs[l].value();
                for (double x : v.values()) {
                    s += x * x;
                }
                acc[l] += std::sqrt(s / static_cast<double>(v.size())) / seeds;
            }
        }
        for (std::size_t l = 0; l < 2; ++l) {
            out.rms[l].push_back(acc[l]);
        }
    }
    for (const auto& v : out.rms) {
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        out.worst_spread = std::max(out.worst_spread, *hi / *lo);
    }
    return out;
}

} // namespace hlm::verify
