// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <span>
#include <vector>

#include "hlm/model/model.hpp"

namespace hlm::train {

/// One training row: inputs, next-token targets (negative = ignored) and
/// the packing layout.
struct TrainRow {
    std::vector<std::int32_t> tokens;
    std::vector<std::int32_t> targets;
    std::vector<std::uint8_t> resets;
    std::vector<std::int32_t> doc_ids;
    std::vector<std::int32_t> positions;

    model::RowLayout layout() const { return {resets, doc_ids, positions}; }
};

template <class Real>
struct LossAndGrads {
    double loss = 0;
    std::map<ParamId, Tensor<Real>> grads;
};

/// Mean over rows of each row's mean cross-entropy, with gradients. Rows run
/// on separate tapes so memory stays bounded by one row.
template <class Real>
LossAndGrads<Real> loss_and_grads(const model::HybridModel<Real>& m, const mup::MuPMultiplierSet& mults,
                                  const model::BlockContext& ctx_in, std::span<const TrainRow> rows)
{
    require(!rows.empty(), "loss_and_grads: empty batch");
    model::BlockContext ctx = ctx_in;
    ctx.mults = &mults;
    LossAndGrads<Real> out;
    const Real inv = Real{1} / static_cast<Real>(rows.size());
    for (const auto& row : rows) {
        Tape<Real> tape;
        auto vars = m.params.bind(tape);
        auto L = ops::cross_entropy(model::model_forward(m, vars, row.tokens, row.layout(), ctx), row.targets);
        out.loss += static_cast<double>(L.value().item()) / static_cast<double>(rows.size());
        auto g = tape.backward(L);
        for (auto& [id, t] : g) {
            auto it = out.grads.find(id);
            if (it == out.grads.end()) {
                for (auto& v : t.values()) {
                    v *= inv;
                }
                out.grads.emplace(id, std::move(t));
            } else {
                for (std::size_t k = 0; k < t.size(); ++k) {
                    it->second[k] += t[k] * inv;
                }
            }
        }
    }
    return out;
}

/// Forward-only mean loss.
template <class Real>
double evaluate_loss(const model::HybridModel<Real>& m, const mup::MuPMultiplierSet& mults,
                     const model::BlockContext& ctx_in, std::span<const TrainRow> rows)
{
    require(!rows.empty(), "evaluate_loss: empty batch");
    model::BlockContext ctx = ctx_in;
    ctx.mults = &mults;
    double total = 0;
    for (const auto& row : rows) {
        Tape<Real> tape;
        std::vector<Var<Real>> vars;
        for (const auto& p : m.params) {
            vars.push_back(tape.constant(p.value));
        }
        total += static_cast<double>(
            ops::cross_entropy(model::model_forward(m, vars, row.tokens, row.layout(), ctx), row.targets)
                .value()
                .item());
    }
    return total / static_cast<double>(rows.size());
}

/// A single-document row of random tokens predicting random targets.
inline TrainRow random_row(Rng& rng, std::size_t T, std::size_t vocab)
{
    TrainRow r;
    const model::SingleDocLayout layout(T);
    r.resets = layout.resets;
    r.doc_ids = layout.doc_ids;
    r.positions = layout.positions;
    for (std::size_t t = 0; t < T; ++t) {
        r.tokens.push_back(static_cast<std::int32_t>(rng.below(vocab)));
        r.targets.push_back(static_cast<std::int32_t>(rng.below(vocab)));
    }
    return r;
}

} // namespace hlm::train
