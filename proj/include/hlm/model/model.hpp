// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hlm/model/block.hpp"
#include "hlm/model/config.hpp"
#include "hlm/model/params.hpp"
#include "hlm/numerics/random.hpp"

namespace hlm::model {

/// Resolves allocation and head counts from a config.
inline BlockDims resolve_dims(const HybridConfig& c)
{
    const auto alloc = allocate_channels(c);
    BlockDims d;
    d.arrangement = c.arrangement;
    d.ssm.d_model = c.d_model;
    d.ssm.ssm = ssm::SsmDims{alloc.d_ssm / c.ssm.d_head, c.ssm.d_head, c.ssm.d_state, c.ssm.n_groups};
    d.ssm.conv_k = c.ssm.conv_k;
    d.ssm.chunk_size = c.ssm.chunk_size;
    d.ssm.validate();
    d.attn = attn::GqaDims{alloc.d_attn / c.attn.d_head, c.attn.n_kv_heads, c.attn.d_head};
    d.attn.validate();
    d.rope = attn::RopeSpec{c.attn.rope_base, c.attn.d_head};
    d.d_mlp = alloc.d_mlp;
    return d;
}

/// Widths entering the multiplier scaling laws.
inline mup::ModelShapes model_shapes(const BlockDims& d)
{
    mup::ModelShapes s;
    s.d = static_cast<double>(d.ssm.d_model);
    s.d_head_ssm = static_cast<double>(d.ssm.ssm.d_head);
    s.n_heads_ssm = static_cast<double>(d.ssm.ssm.n_heads);
    s.d_state = static_cast<double>(d.ssm.ssm.d_state);
    s.n_groups = static_cast<double>(d.ssm.ssm.n_groups);
    s.d_head_attn = static_cast<double>(d.attn.d_head);
    s.n_heads_attn = static_cast<double>(d.attn.n_q_heads);
    s.d_mlp = static_cast<double>(d.d_mlp);
    return s;
}

struct SsmIds {
    ParamId W_x, W_z, W_B, W_C, W_dt, conv_w, conv_b, b_dt, A_log, D, norm, W_out;
};
struct AttnIds {
    ParamId W_Q, W_K, W_V, W_out;
};
struct MlpIds {
    ParamId W_up, W_gate, W_down;
};
struct LayerIds {
    SsmIds ssm;
    AttnIds attn;
    MlpIds mlp;
    std::vector<ParamId> norms;
};

inline double softplus_inverse(double y) { return y + std::log(-std::expm1(-y)); }

/// Initialization. A matrix tied to forward multiplier m is drawn with
/// std = target / m, so the product m*W starts at the target scale:
/// 1/sqrt(fan_in) for projections, 1 for the embedding and 1/d for the
/// unembedding. Untied matrices use the target directly. Later changes to m
/// (tuning, symmetry rescaling) do not touch the stored weights.
template <class Real>
class Initializer {
public:
    Initializer(ParameterStore<Real>& store, const mup::MuPMultiplierSet& mults, Rng& rng)
        : store_(store), mults_(mults), rng_(rng)
    {
    }

    ParamId matrix(const std::string& name, std::size_t rows, std::size_t cols, mup::Matrix group,
                   std::optional<mup::Forward> tied, double target)
    {
        const double sd = tied ? target / mults_.forward(*tied) : target;
        Tensor<Real> w(Shape{rows, cols});
        for (auto& v : w.values()) {
            v = static_cast<Real>(rng_.normal(0.0, sd));
        }
        return store_.add(name, std::move(w), ParamGroup::matrix(group), tied);
    }

    ParamId vector(const std::string& name, Shape shape, mup::Vector group, Real fill)
    {
        return store_.add(name, Tensor<Real>(std::move(shape), fill), ParamGroup::vector(group));
    }

    ParamId vector(const std::string& name, Tensor<Real> value, mup::Vector group)
    {
        return store_.add(name, std::move(value), ParamGroup::vector(group));
    }

    Rng& rng() { return rng_; }

private:
    ParameterStore<Real>& store_;
    const mup::MuPMultiplierSet& mults_;
    Rng& rng_;
};

/// A_log = ln(linspace(1, 16)), dt at init log-spaced over [1e-3, 1e-1]
/// (one head sits at the geometric midpoint), conv taps uniform in
/// +-1/sqrt(k), D = 1, norm gains 1.
template <class Real>
SsmIds add_ssm_params(Initializer<Real>& init, const std::string& prefix, const ssm::Mamba2Dims& d)
{
    using mup::Forward;
    using mup::Matrix;
    using mup::Vector;
    const std::size_t dm = d.d_model, H = d.ssm.n_heads, ch = d.conv_channels(), k = d.conv_k;
    const double in_sd = 1.0 / std::sqrt(static_cast<double>(dm));
    SsmIds ids{};
    ids.W_x = init.matrix(prefix + "W_x", d.d_ssm(), dm, Matrix::W_in, Forward::x, in_sd);
    ids.W_z = init.matrix(prefix + "W_z", d.d_ssm(), dm, Matrix::W_in, Forward::z, in_sd);
    ids.W_B = init.matrix(prefix + "W_B", d.ssm.bc_width(), dm, Matrix::W_in, Forward::B, in_sd);
    ids.W_C = init.matrix(prefix + "W_C", d.ssm.bc_width(), dm, Matrix::W_in, Forward::C, in_sd);
    ids.W_dt = init.matrix(prefix + "W_dt", H, dm, Matrix::W_in, Forward::dt, in_sd);

    const double bound = 1.0 / std::sqrt(static_cast<double>(k));
    Tensor<Real> cw(Shape{ch, k});
    for (auto& v : cw.values()) {
        v = static_cast<Real>(init.rng().uniform(-bound, bound));
    }
    ids.conv_w = init.vector(prefix + "conv_w", std::move(cw), Vector::W_conv1d);
    ids.conv_b = init.vector(prefix + "conv_b", Shape{ch}, Vector::b_conv1d, Real{0});

    Tensor<Real> b_dt(Shape{H}), A_log(Shape{H});
    for (std::size_t h = 0; h < H; ++h) {
        const double frac = H == 1 ? 0.5 : static_cast<double>(h) / static_cast<double>(H - 1);
        const double dt0 = std::exp(std::log(1e-3) + frac * (std::log(1e-1) - std::log(1e-3)));
        b_dt[h] = static_cast<Real>(softplus_inverse(dt0));
        const double a = H == 1 ? 1.0 : 1.0 + 15.0 * static_cast<double>(h) / static_cast<double>(H - 1);
        A_log[h] = static_cast<Real>(std::log(a));
    }
    ids.b_dt = init.vector(prefix + "b_dt", std::move(b_dt), Vector::b_dt);
    ids.A_log = init.vector(prefix + "A_log", std::move(A_log), Vector::A_log);
    ids.D = init.vector(prefix + "D", Shape{H}, Vector::D, Real{1});
    ids.norm = init.vector(prefix + "norm", Shape{d.d_ssm()}, Vector::N_ssm, Real{1});
    ids.W_out = init.matrix(prefix + "W_out", dm, d.d_ssm(), Matrix::W_out, Forward::ssm,
                            1.0 / std::sqrt(static_cast<double>(d.d_ssm())));
    return ids;
}

template <class Real>
AttnIds add_attn_params(Initializer<Real>& init, const std::string& prefix, std::size_t d_model,
                        const attn::GqaDims& a)
{
    using mup::Forward;
    using mup::Matrix;
    const double in_sd = 1.0 / std::sqrt(static_cast<double>(d_model));
    AttnIds ids{};
    ids.W_Q = init.matrix(prefix + "W_Q", a.d_attn(), d_model, Matrix::W_in, std::nullopt, in_sd);
    ids.W_K = init.matrix(prefix + "W_K", a.d_kv(), d_model, Matrix::W_in, Forward::key, in_sd);
    ids.W_V = init.matrix(prefix + "W_V", a.d_kv(), d_model, Matrix::W_in, std::nullopt, in_sd);
    ids.W_out = init.matrix(prefix + "W_out", d_model, a.d_attn(), Matrix::W_out, Forward::attn,
                            1.0 / std::sqrt(static_cast<double>(a.d_attn())));
    return ids;
}

template <class Real>
MlpIds add_mlp_params(Initializer<Real>& init, const std::string& prefix, std::size_t d_model, std::size_t d_mlp)
{
    using mup::Forward;
    using mup::Matrix;
    const double in_sd = 1.0 / std::sqrt(static_cast<double>(d_model));
    MlpIds ids{};
    ids.W_up = init.matrix(prefix + "W_up", d_mlp, d_model, Matrix::W_up, std::nullopt, in_sd);
    ids.W_gate = init.matrix(prefix + "W_gate", d_mlp, d_model, Matrix::W_gate, Forward::gate, in_sd);
    ids.W_down = init.matrix(prefix + "W_down", d_model, d_mlp, Matrix::W_down, Forward::mlp,
                             1.0 / std::sqrt(static_cast<double>(d_mlp)));
    return ids;
}

/// Norm gains of one block: the mixer norm(s) belong to N_Mixer, the norm in
/// front of the MLP to N_MLP. SAM's single shared norm counts as a mixer norm.
template <class Real>
std::vector<ParamId> add_block_norms(Initializer<Real>& init, const std::string& prefix, std::size_t d_model,
                                     Arrangement arrangement)
{
    std::vector<ParamId> ids;
    const std::size_t n = norm_count(arrangement);
    for (std::size_t i = 0; i < n; ++i) {
        const bool mlp_norm = arrangement != Arrangement::SAM && i + 1 == n;
        ids.push_back(init.vector(prefix + "norm" + std::to_string(i), Shape{d_model},
                                  mlp_norm ? mup::Vector::N_mlp : mup::Vector::N_mixer, Real{1}));
    }
    return ids;
}

template <class Real>
struct HybridModel {
    HybridConfig config;
    BlockDims dims;
    ParameterStore<Real> params;
    ParamId W_emb = 0;
    std::vector<LayerIds> layers;
    ParamId N_f = 0;
    ParamId W_unemb = 0;
};

/// Builds and initializes a model. `mults` supplies the forward multipliers
/// used to derive init scales; its shapes should match the model's.
template <class Real>
HybridModel<Real> init_model(const HybridConfig& config, const mup::MuPMultiplierSet& mults)
{
    HybridModel<Real> m;
    m.config = config;
    m.dims = resolve_dims(config);
    Rng rng(config.seed);
    Initializer<Real> init(m.params, mults, rng);
    const std::size_t d = config.d_model;
    m.W_emb = init.matrix("W_emb", config.vocab, d, mup::Matrix::W_emb, mup::Forward::emb, 1.0);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        const std::string pre = "layer" + std::to_string(l) + ".";
        LayerIds ids;
        ids.norms = add_block_norms(init, pre, d, config.arrangement);
        ids.ssm = add_ssm_params(init, pre + "ssm.", m.dims.ssm);
        ids.attn = add_attn_params(init, pre + "attn.", d, m.dims.attn);
        ids.mlp = add_mlp_params(init, pre + "mlp.", d, m.dims.d_mlp);
        m.layers.push_back(std::move(ids));
    }
    m.N_f = init.vector("N_f", Shape{d}, mup::Vector::N_f, Real{1});
    m.W_unemb = init.matrix("W_unemb", config.vocab, d, mup::Matrix::W_unemb, mup::Forward::unemb,
                            1.0 / static_cast<double>(d));
    return m;
}

template <class Real>
ssm::Mamba2Vars<Real> ssm_vars(const std::vector<Var<Real>>& v, const SsmIds& i)
{
    return {v[i.W_x], v[i.W_z], v[i.W_B], v[i.W_C], v[i.W_dt], v[i.conv_w], v[i.conv_b],
            v[i.b_dt], v[i.A_log], v[i.D], v[i.norm], v[i.W_out]};
}

template <class Real>
attn::AttnVars<Real> attn_vars(const std::vector<Var<Real>>& v, const AttnIds& i)
{
    return {v[i.W_Q], v[i.W_K], v[i.W_V], v[i.W_out]};
}

template <class Real>
MlpVars<Real> mlp_vars(const std::vector<Var<Real>>& v, const MlpIds& i)
{
    return {v[i.W_up], v[i.W_gate], v[i.W_down]};
}

template <class Real>
LayerVars<Real> layer_vars(const std::vector<Var<Real>>& v, const LayerIds& ids)
{
    LayerVars<Real> out{ssm_vars(v, ids.ssm), attn_vars(v, ids.attn), mlp_vars(v, ids.mlp), {}};
    for (auto id : ids.norms) {
        out.norms.push_back(v[id]);
    }
    return out;
}

/// Optional per-block taps for diagnostics (block output activations).
template <class Real>
struct ForwardTaps {
    std::vector<Var<Real>> block_outputs;
};

/// logits [T, vocab] = m_unemb W_unemb N_f(blocks(m_emb W_emb[tokens])).
template <class Real>
Var<Real> model_forward(const HybridModel<Real>& model, const std::vector<Var<Real>>& vars,
                        std::span<const std::int32_t> tokens, const RowLayout& row, const BlockContext& ctx,
                        ForwardTaps<Real>* taps = nullptr)
{
    require(ctx.mults != nullptr, "model_forward: multipliers missing");
    require(tokens.size() == row.resets.size() && tokens.size() == row.positions.size() &&
                tokens.size() == row.doc_ids.size(),
            "model_forward: tokens and layout lengths differ");
    const auto& mults = *ctx.mults;
    auto h = ops::scale(ops::embedding(vars[model.W_emb], tokens), static_cast<Real>(mults.forward(mup::Forward::emb)));
    for (const auto& ids : model.layers) {
        h = block_forward(h, layer_vars(vars, ids), model.dims, row, ctx);
        if (taps) {
            taps->block_outputs.push_back(h);
        }
    }
    h = ops::rmsnorm(h, vars[model.N_f]);
    return ops::scale(ops::linear(h, vars[model.W_unemb]), static_cast<Real>(mults.forward(mup::Forward::unemb)));
}

/// Layout for a single document starting at position 0.
struct SingleDocLayout {
    std::vector<std::uint8_t> resets;
    std::vector<std::int32_t> doc_ids;
    std::vector<std::int32_t> positions;

    explicit SingleDocLayout(std::size_t T) : resets(T, 0), doc_ids(T, 0), positions(T)
    {
        if (T > 0) {
            resets[0] = 1;
        }
        for (std::size_t t = 0; t < T; ++t) {
            positions[t] = static_cast<std::int32_t>(t);
        }
    }

    RowLayout view() const { return {resets, doc_ids, positions}; }
};

} // namespace hlm::model
