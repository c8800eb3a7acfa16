// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "hlm/model/model.hpp"
#include "hlm/verify/grad_check.hpp"

namespace hlm::verify {

/// Seeded gradient checks of whole components against central differences.
/// Each returns the largest relative error over all inputs and parameters.

namespace detail {

inline std::vector<Tensor<double>> store_tensors(const model::ParameterStore<double>& store)
{
    std::vector<Tensor<double>> out;
    for (const auto& p : store) {
        out.push_back(p.value);
    }
    return out;
}

/// Two documents, the second starting at row `split`.
struct PackedRow {
    std::vector<std::uint8_t> resets;
    std::vector<std::int32_t> doc_ids;
    std::vector<std::int32_t> positions;

    PackedRow(std::size_t T, std::size_t split) : resets(T, 0), doc_ids(T, 0), positions(T, 0)
    {
        for (std::size_t t = 0; t < T; ++t) {
            const bool second = t >= split;
            resets[t] = t == 0 || t == split;
            doc_ids[t] = second ? 1 : 0;
            positions[t] = static_cast<std::int32_t>(second ? t - split : t + 2);
        }
    }

    model::RowLayout view() const { return {resets, doc_ids, positions}; }
};

inline mup::MuPMultiplierSet random_multipliers(Rng& rng)
{
    auto m = mup::MuPMultiplierSet::ones(mup::ModelShapes{});
    for (auto& v : m.forward_ref) {
        v = std::exp2(rng.uniform(-1.0, 1.0));
    }
    return m;
}

} // namespace detail

inline double ssm_block_gradient_error(std::uint64_t seed)
{
    Rng rng(seed * 7919 + 1);
    ssm::Mamba2Dims dims;
    dims.d_model = 5;
    dims.ssm = ssm::SsmDims{2, 2, 3, seed % 2 ? 2u : 1u};
    dims.conv_k = 3;
    dims.chunk_size = seed % 3;
    const auto mults = detail::random_multipliers(rng);
    model::ParameterStore<double> store;
    model::Initializer<double> init(store, mults, rng);
    const auto ids = model::add_ssm_params(init, "", dims);
    for (std::size_t h = 0; h < dims.ssm.n_heads; ++h) {
        store[ids.b_dt].value[h] = rng.uniform(-1.5, 0.5);
        store[ids.A_log].value[h] = rng.uniform(-1.0, 1.0);
    }
    auto inputs = detail::store_tensors(store);
    inputs.push_back(randn({7, 5}, rng));
    const std::vector<std::uint8_t> resets{1, 0, 0, 1, 0, 0, 0};
    const auto policy = seed % 3 == 2 ? ssm::DtPolicy::attenuate(0.5, 10) : ssm::DtPolicy::none();
    return grad_check(inputs, [&](Tape<double>&, const std::vector<Var<double>>& v) {
        return weighted_sum(
            ssm::mamba2_block_forward(v.back(), model::ssm_vars(v, ids), mults, policy, resets, 3, dims), seed);
    });
}

inline double attention_gradient_error(std::uint64_t seed)
{
    Rng rng(seed * 7919 + 2);
    const attn::GqaDims dims{4, seed % 2 ? 2u : 1u, 2};
    const attn::RopeSpec rope{1e4, 2};
    const auto mults = detail::random_multipliers(rng);
    model::ParameterStore<double> store;
    model::Initializer<double> init(store, mults, rng);
    const auto ids = model::add_attn_params(init, "", 6, dims);
    auto inputs = detail::store_tensors(store);
    inputs.push_back(randn({7, 6}, rng));
    const detail::PackedRow row(7, 3);
    return grad_check(inputs, [&](Tape<double>&, const std::vector<Var<double>>& v) {
        return weighted_sum(
            attn::gqa_attention(v.back(), model::attn_vars(v, ids), rope, dims, mults, row.doc_ids, row.positions),
            seed);
    });
}

inline double mlp_gradient_error(std::uint64_t seed)
{
    Rng rng(seed * 7919 + 3);
    const auto mults = detail::random_multipliers(rng);
    model::ParameterStore<double> store;
    model::Initializer<double> init(store, mults, rng);
    const auto ids = model::add_mlp_params(init, "", 5, 7);
    auto inputs = detail::store_tensors(store);
    inputs.push_back(randn({4, 5}, rng));
    return grad_check(inputs, [&](Tape<double>&, const std::vector<Var<double>>& v) {
        return weighted_sum(model::mlp_forward(v.back(), model::mlp_vars(v, ids), mults), seed);
    });
}

/// Smallest config exercising every component: two layers, two SSM heads,
/// two query heads sharing one KV head.
inline model::HybridConfig tiny_config(model::Arrangement arrangement, std::uint64_t seed)
{
    model::HybridConfig c;
    c.d_model = 8;
    c.n_layers = 2;
    c.vocab = 11;
    c.eighths_S = 2;
    c.eighths_A = 2;
    c.eighths_M = 4;
    c.base_S = 16;
    c.base_A = 16;
    c.base_M = 16;
    c.arrangement = arrangement;
    c.ssm = {2, 3, 1, 3, 4};
    c.attn = {1, 2, 1e4};
    c.seed = seed;
    return c;
}

/// Cross-entropy of the full model on a packed two-document row.
inline double model_gradient_error(std::uint64_t seed)
{
    const auto arrangement = static_cast<model::Arrangement>(seed % 3);
    const auto config = tiny_config(arrangement, seed);
    const auto dims = model::resolve_dims(config);
    Rng rng(seed * 7919 + 4);
    auto mults = detail::random_multipliers(rng);
    mults.ref_shapes = mults.shapes = model::model_shapes(dims);
    auto m = model::init_model<double>(config, mults);
    for (const auto& layer : m.layers) {
        for (std::size_t h = 0; h < dims.ssm.ssm.n_heads; ++h) {
            m.params[layer.ssm.b_dt].value[h] = rng.uniform(-1.5, 0.5);
            m.params[layer.ssm.A_log].value[h] = rng.uniform(-1.0, 1.0);
        }
    }
    const std::size_t T = 6;
    std::vector<std::int32_t> tokens(T), targets(T);
    for (std::size_t t = 0; t < T; ++t) {
        tokens[t] = static_cast<std::int32_t>(rng.below(config.vocab));
        targets[t] = static_cast<std::int32_t>(rng.below(config.vocab));
    }
    const detail::PackedRow row(T, 4);
    model::BlockContext ctx{&mults, ssm::DtPolicy::none(), 0};
    return grad_check(detail::store_tensors(m.params), [&](Tape<double>&, const std::vector<Var<double>>& v) {
        return ops::cross_entropy(model::model_forward(m, v, tokens, row.view(), ctx), targets);
    });
}

} // namespace hlm::verify
