// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "hlm/numerics/errors.hpp"

namespace hlm::mup {

enum class Forward : std::size_t { emb, unemb, mlp, attn, ssm, gate, key, x, z, B, C, dt };
enum class Matrix : std::size_t { W_emb, W_unemb, W_in, W_out, W_up, W_gate, W_down };
enum class Vector : std::size_t { N_f, N_mixer, N_mlp, N_ssm, W_conv1d, b_conv1d, b_dt, A_log, D };

inline constexpr std::size_t kForwardCount = 12;
inline constexpr std::size_t kMatrixCount = 7;
inline constexpr std::size_t kVectorCount = 9;
/// Forward + matrix LR + matrix WD + vector LR.
inline constexpr std::size_t kTunableCount = kForwardCount + 2 * kMatrixCount + kVectorCount;
static_assert(kTunableCount == 35);

inline constexpr std::array<std::string_view, kForwardCount> kForwardNames = {
    "m_emb", "m_unemb", "m_MLP", "m_attn", "m_SSM", "m_gate", "m_key", "m_x", "m_z", "m_B", "m_C", "m_dt"};
inline constexpr std::array<std::string_view, kMatrixCount> kMatrixNames = {
    "W_emb", "W_unemb", "W_in", "W_out", "W_up", "W_gate", "W_down"};
inline constexpr std::array<std::string_view, kVectorCount> kVectorNames = {
    "N_f", "N_Mixer", "N_MLP", "N_SSM", "W_conv1d", "b_conv1d", "b_dt", "A_log", "D"};

/// Dimensions entering the width-scaling laws.
struct ModelShapes {
    double d = 1280;
    double d_head_ssm = 64;
    double n_heads_ssm = 16;
    double d_state = 128;
    double n_groups = 1;
    double d_head_attn = 64;
    double n_heads_attn = 12;
    double d_mlp = 3840;

    friend bool operator==(const ModelShapes&, const ModelShapes&) = default;
};

/// Proportionality factor of each forward multiplier's width-scaling law.
inline double scaling_law(Forward m, const ModelShapes& s)
{
    switch (m) {
    case Forward::emb: return 1.0;
    case Forward::unemb: return 1.0 / s.d;
    case Forward::mlp: return 1.0 / (s.d_mlp * s.d);
    case Forward::attn: return 1.0 / (s.d_head_attn * s.n_heads_attn * s.d);
    case Forward::ssm: return 1.0 / (s.d_head_ssm * s.n_heads_ssm);
    case Forward::gate: return 1.0 / s.d;
    case Forward::key: return 1.0 / (s.d * s.d * std::sqrt(s.d_head_attn));
    case Forward::x: return 1.0 / s.d;
    case Forward::z: return 1.0 / s.d;
    case Forward::B: return 1.0 / (s.d_state * s.n_groups * s.d);
    case Forward::C: return 1.0 / s.d;
    case Forward::dt: return 1.0 / s.d;
    }
    return 1.0;
}

/// The tunable multiplier system.
///
/// Forward multipliers are stored at the reference shapes; the value at the
/// current shapes is reference * law(shapes) / law(ref_shapes). Width transfer
/// only swaps `shapes`, which makes repeated transfers compose exactly. LR and
/// WD multipliers are width-independent.
struct MuPMultiplierSet {
    std::array<double, kForwardCount> forward_ref{};
    std::array<double, kMatrixCount> matrix_lr{};
    std::array<double, kMatrixCount> matrix_wd{};
    std::array<double, kVectorCount> vector_lr{};
    ModelShapes ref_shapes{};
    ModelShapes shapes{};

    double forward(Forward m) const
    {
        const auto i = static_cast<std::size_t>(m);
        if (shapes == ref_shapes) {
            return forward_ref[i];
        }
        return forward_ref[i] * (scaling_law(m, shapes) / scaling_law(m, ref_shapes));
    }
    double lr(Matrix g) const { return matrix_lr[static_cast<std::size_t>(g)]; }
    double wd(Matrix g) const { return matrix_wd[static_cast<std::size_t>(g)]; }
    double lr(Vector g) const { return vector_lr[static_cast<std::size_t>(g)]; }

    void validate() const
    {
        auto positive = [](const auto& arr, const char* what) {
            for (double v : arr) {
                if (!(v > 0) || !std::isfinite(v)) {
                    throw ContractError(std::string("multipliers must be positive and finite (") + what + ")");
                }
            }
        };
        positive(forward_ref, "forward");
        positive(matrix_lr, "matrix lr");
        positive(matrix_wd, "matrix wd");
        positive(vector_lr, "vector lr");
    }

    /// Every multiplier equal to one, at the given shapes.
    static MuPMultiplierSet ones(const ModelShapes& shapes)
    {
        MuPMultiplierSet m;
        m.forward_ref.fill(1.0);
        m.matrix_lr.fill(1.0);
        m.matrix_wd.fill(1.0);
        m.vector_lr.fill(1.0);
        m.ref_shapes = shapes;
        m.shapes = shapes;
        return m;
    }

    /// Tuned base-model multipliers (powers of two) and base-model shapes.
    /// The base model's B/C group count is not listed; one group is assumed.
    static MuPMultiplierSet base_model()
    {
        MuPMultiplierSet m;
        const auto p2 = [](double e) { return std::exp2(e); };
        m.forward_ref = {p2(2.5), p2(-5), p2(-2), p2(-1), p2(-1.5), p2(-0.5),
                         p2(-2),  p2(-2), p2(-1.5), p2(-1.5), p2(-1), p2(-1.5)};
        m.matrix_lr = {p2(2), p2(0), p2(-0.5), p2(-2), p2(-0.5), p2(0.5), p2(-0.5)};
        m.matrix_wd = {p2(-3), p2(-2), p2(0.5), p2(2), p2(-0.5), p2(0), p2(-0.5)};
        m.vector_lr = {p2(1.5), p2(2), p2(1.5), p2(1), p2(2.5), p2(1), p2(1.5), p2(1.5), p2(3)};
        m.ref_shapes = ModelShapes{};
        m.shapes = m.ref_shapes;
        return m;
    }
};

/// Reference global hyperparameters of the base model.
inline constexpr double kBaseLearningRate = 256e-6;
inline constexpr double kBaseWeightDecay = 0.1;

template <class E, std::size_t N>
std::optional<E> lookup(const std::array<std::string_view, N>& names, std::string_view name)
{
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == name) {
            return static_cast<E>(i);
        }
    }
    return std::nullopt;
}

inline Forward forward_from_name(std::string_view name)
{
    if (auto v = lookup<Forward>(kForwardNames, name)) {
        return *v;
    }
    throw ContractError("unknown forward multiplier '" + std::string(name) + "'");
}

inline Matrix matrix_from_name(std::string_view name)
{
    if (auto v = lookup<Matrix>(kMatrixNames, name)) {
        return *v;
    }
    throw ContractError("unknown matrix group '" + std::string(name) + "'");
}

inline Vector vector_from_name(std::string_view name)
{
    if (auto v = lookup<Vector>(kVectorNames, name)) {
        return *v;
    }
    throw ContractError("unknown vector group '" + std::string(name) + "'");
}

inline std::string_view name_of(Forward m) { return kForwardNames[static_cast<std::size_t>(m)]; }
inline std::string_view name_of(Matrix m) { return kMatrixNames[static_cast<std::size_t>(m)]; }
inline std::string_view name_of(Vector m) { return kVectorNames[static_cast<std::size_t>(m)]; }

} // namespace hlm::mup
