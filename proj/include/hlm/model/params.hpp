// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hlm/mup/multipliers.hpp"
#include "hlm/numerics/tape.hpp"

namespace hlm::model {

/// Optimizer group of a parameter: a matrix group (own LR and WD multiplier)
/// or a vector-like group (own LR multiplier, no weight decay).
struct ParamGroup {
    bool is_matrix = true;
    std::size_t index = 0;

    static ParamGroup matrix(mup::Matrix m) { return {true, static_cast<std::size_t>(m)}; }
    static ParamGroup vector(mup::Vector v) { return {false, static_cast<std::size_t>(v)}; }

    mup::Matrix as_matrix() const { return static_cast<mup::Matrix>(index); }
    mup::Vector as_vector() const { return static_cast<mup::Vector>(index); }

    std::string name() const
    {
        return std::string(is_matrix ? mup::name_of(as_matrix()) : mup::name_of(as_vector()));
    }

    friend bool operator==(const ParamGroup&, const ParamGroup&) = default;
};

template <class Real>
struct Parameter {
    std::string name;
    Tensor<Real> value;
    ParamGroup group;
    /// Forward multiplier this matrix is multiplied by, if any.
    std::optional<mup::Forward> tied;
    /// Per-parameter factors on top of the group multipliers.
    double lr_scale = 1.0;
    double wd_scale = 1.0;
};

/// Ordered, named parameter list. ParamId is the position in the list.
template <class Real>
class ParameterStore {
public:
    ParamId add(std::string name, Tensor<Real> value, ParamGroup group, std::optional<mup::Forward> tied = {})
    {
        for (const auto& p : params_) {
            require(p.name != name, "ParameterStore: duplicate parameter name '" + name + "'");
        }
        params_.push_back(Parameter<Real>{std::move(name), std::move(value), group, tied});
        return params_.size() - 1;
    }

    std::size_t size() const noexcept { return params_.size(); }
    Parameter<Real>& operator[](ParamId id) { return params_.at(id); }
    const Parameter<Real>& operator[](ParamId id) const { return params_.at(id); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    ParamId find(const std::string& name) const
    {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            if (params_[i].name == name) {
                return i;
            }
        }
        throw ContractError("ParameterStore: no parameter named '" + name + "'");
    }

    std::size_t count_scalars() const
    {
        std::size_t n = 0;
        for (const auto& p : params_) {
            n += p.value.size();
        }
        return n;
    }

    /// Puts every parameter on the tape as a leaf; index i holds ParamId i.
    std::vector<Var<Real>> bind(Tape<Real>& tape) const
    {
        std::vector<Var<Real>> vars;
        vars.reserve(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            vars.push_back(tape.parameter(i, params_[i].value));
        }
        return vars;
    }

    template <class U>
    ParameterStore<U> cast() const
    {
        ParameterStore<U> out;
        for (const auto& p : params_) {
            const auto id = out.add(p.name, p.value.template cast<U>(), p.group, p.tied);
            out[id].lr_scale = p.lr_scale;
            out[id].wd_scale = p.wd_scale;
        }
        return out;
    }

private:
    std::vector<Parameter<Real>> params_;
};

} // namespace hlm::model
