// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include "hlm/mup/multipliers.hpp"

namespace hlm::mup {

inline void to_json(nlohmann::json& j, const ModelShapes& s)
{
    j = {{"d", s.d},
         {"d_head_ssm", s.d_head_ssm},
         {"n_heads_ssm", s.n_heads_ssm},
         {"d_state", s.d_state},
         {"n_groups", s.n_groups},
         {"d_head_attn", s.d_head_attn},
         {"n_heads_attn", s.n_heads_attn},
         {"d_mlp", s.d_mlp}};
}

inline void from_json(const nlohmann::json& j, ModelShapes& s)
{
    ModelShapes d;
    s.d = j.value("d", d.d);
    s.d_head_ssm = j.value("d_head_ssm", d.d_head_ssm);
    s.n_heads_ssm = j.value("n_heads_ssm", d.n_heads_ssm);
    s.d_state = j.value("d_state", d.d_state);
    s.n_groups = j.value("n_groups", d.n_groups);
    s.d_head_attn = j.value("d_head_attn", d.d_head_attn);
    s.n_heads_attn = j.value("n_heads_attn", d.n_heads_attn);
    s.d_mlp = j.value("d_mlp", d.d_mlp);
}

namespace detail {

template <std::size_t N>
nlohmann::json named(const std::array<std::string_view, N>& names, const std::array<double, N>& values)
{
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t i = 0; i < N; ++i) {
        j[std::string(names[i])] = values[i];
    }
    return j;
}

/// Missing names keep their current value; unknown names are an error.
template <std::size_t N>
void read_named(const nlohmann::json& j, const std::array<std::string_view, N>& names, std::array<double, N>& values,
                const char* what)
{
    for (const auto& [key, val] : j.items()) {
        if (!lookup<std::size_t>(names, key)) {
            throw ContractError(std::string("unknown ") + what + " multiplier '" + key + "'");
        }
        values[*lookup<std::size_t>(names, key)] = val.template get<double>();
    }
}

} // namespace detail

inline void to_json(nlohmann::json& j, const MuPMultiplierSet& m)
{
    j = {{"forward", detail::named(kForwardNames, m.forward_ref)},
         {"matrix_lr", detail::named(kMatrixNames, m.matrix_lr)},
         {"matrix_wd", detail::named(kMatrixNames, m.matrix_wd)},
         {"vector_lr", detail::named(kVectorNames, m.vector_lr)},
         {"ref_shapes", m.ref_shapes},
         {"shapes", m.shapes}};
}

/// Starts from all-ones at the reference shapes, so partial files are valid.
inline void from_json(const nlohmann::json& j, MuPMultiplierSet& m)
{
    const auto ref = j.contains("ref_shapes") ? j.at("ref_shapes").get<ModelShapes>() : ModelShapes{};
    m = MuPMultiplierSet::ones(ref);
    if (j.contains("shapes")) {
        m.shapes = j.at("shapes").get<ModelShapes>();
    }
    if (j.contains("forward")) detail::read_named(j.at("forward"), kForwardNames, m.forward_ref, "forward");
    if (j.contains("matrix_lr")) detail::read_named(j.at("matrix_lr"), kMatrixNames, m.matrix_lr, "matrix_lr");
    if (j.contains("matrix_wd")) detail::read_named(j.at("matrix_wd"), kMatrixNames, m.matrix_wd, "matrix_wd");
    if (j.contains("vector_lr")) detail::read_named(j.at("vector_lr"), kVectorNames, m.vector_lr, "vector_lr");
    m.validate();
}

} // namespace hlm::mup
