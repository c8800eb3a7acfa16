// SPDX-License-Identifier: Apache-2.0
// Builds a small hybrid model in each block arrangement, runs one forward
// pass over a byte-encoded sentence and prints per-block activation RMS and
// the next-byte cross-entropy at init (close to ln 256 = 5.55).
#include <cmath>
#include <cstdio>

#include "hlm/harness/pretokenize.hpp"
#include "hlm/model/model.hpp"
#include "hlm/mup/scaling.hpp"

using namespace hlm;

int main()
{
    const auto tokens = harness::encode_text("The quiet robot follows 12 birds to the harbor.");
    const std::size_t T = tokens.size();
    for (auto arr : {model::Arrangement::SAM, model::Arrangement::SA_M, model::Arrangement::S_A_M}) {
        model::HybridConfig c;
        c.d_model = 64;
        c.n_layers = 2;
        c.vocab = harness::kByteVocab;
        c.ssm.d_head = 16;
        c.ssm.d_state = 8;
        c.attn.d_head = 16;
        c.arrangement = arr;
        const auto mults =
            mup::transfer(mup::MuPMultiplierSet::base_model(), model::model_shapes(model::resolve_dims(c)));
        auto m = model::init_model<double>(c, mults);

        model::SingleDocLayout row(T);
        model::BlockContext ctx{&mults, ssm::DtPolicy::none(), 0};
        model::ForwardTaps<double> taps;
        Tape<double> tape;
        auto vars = m.params.bind(tape);
        const auto logits = model::model_forward(m, vars, tokens, row.view(), ctx, &taps).value();

        double loss = 0;
        for (std::size_t t = 0; t + 1 < T; ++t) {
            double mx = -INFINITY;
            for (std::size_t v = 0; v < c.vocab; ++v) {
                mx = std::max(mx, logits(t, v));
            }
            double z = 0;
            for (std::size_t v = 0; v < c.vocab; ++v) {
                z += std::exp(logits(t, v) - mx);
            }
            loss += mx + std::log(z) - logits(t, static_cast<std::size_t>(tokens[t + 1]));
        }
        std::printf("%-6s tokens %zu  logits [%zu, %zu]  loss %.4f  block rms", model::to_string(arr).c_str(), T,
                    logits.dim(0), logits.dim(1), loss / static_cast<double>(T - 1));
        for (const auto& h : taps.block_outputs) {
            double s = 0;
            for (double x : h.value().values()) {
                s += x * x;
            }
            std::printf(" %.3f", std::sqrt(s / static_cast<double>(h.value().size())));
        }
        std::printf("\n");
    }
    return 0;
}
