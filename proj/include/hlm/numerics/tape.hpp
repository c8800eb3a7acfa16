// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hlm/numerics/tensor.hpp"

namespace hlm {

using ParamId = std::size_t;

template <class Real>
class Tape;

/// Handle to a node recorded on a Tape.
template <class Real>
class Var {
public:
    Var() = default;
    Var(Tape<Real>* tape, std::size_t id) : tape_(tape), id_(id) {}

    std::size_t id() const noexcept { return id_; }
    Tape<Real>& tape() const noexcept { return *tape_; }
    const Tensor<Real>& value() const { return tape_->value(id_); }
    const Shape& shape() const { return value().shape(); }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    Tape<Real>* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode record of primitive ops.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// reverse topological order and backward() visits each node exactly once.
/// Each backward closure adds into its parents' gradients; with nodes visited
/// in a fixed order, fan-in accumulation order is fixed as well and replaying
/// the same op sequence yields bit-identical gradients.
template <class Real>
class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<Real> constant(Tensor<Real> value) { return push("constant", std::move(value), false, {}, {}); }

    Var<Real> parameter(ParamId id, Tensor<Real> value)
    {
        auto v = push("parameter", std::move(value), true, {}, {});
        nodes_[v.id()].param = id;
        return v;
    }

    /// Records the result of a primitive. `backward` receives the tape and the
    /// node id; it reads grad(self) and adds into the parents' gradients.
    Var<Real> record(std::string_view op, Tensor<Real> value, std::initializer_list<Var<Real>> parents,
                     Backward backward)
    {
        return record(op, std::move(value), std::vector<Var<Real>>(parents), std::move(backward));
    }

    Var<Real> record(std::string_view op, Tensor<Real> value, const std::vector<Var<Real>>& parents,
                     Backward backward)
    {
        if (!value.all_finite()) {
            throw NumericError("non-finite value produced by op '" + std::string(op) + "'");
        }
        bool needs = false;
        std::vector<std::size_t> ids;
        ids.reserve(parents.size());
        for (const auto& p : parents) {
            ids.push_back(p.id());
            needs = needs || nodes_[p.id()].needs_grad;
        }
        return push(op, std::move(value), needs, std::move(ids), needs ? std::move(backward) : Backward{});
    }

    const Tensor<Real>& value(std::size_t id) const { return nodes_[id].value; }
    bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
    std::string_view op(std::size_t id) const { return nodes_[id].op; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Gradient buffer of a node, zero-allocated on first access.
    Tensor<Real>& grad(std::size_t id)
    {
        auto& n = nodes_[id];
        if (n.grad.size() != n.value.size()) {
            n.grad = Tensor<Real>(n.value.shape());
        }
        return n.grad;
    }

    /// Returns dLoss/dParam for every parameter leaf that received gradient.
    std::map<ParamId, Tensor<Real>> backward(Var<Real> loss)
    {
        require(&loss.tape() == this, "backward: loss belongs to another tape");
        require(value(loss.id()).size() == 1 && value(loss.id()).rank() == 0,
                "backward: loss must be a scalar, got shape " + shape_string(value(loss.id()).shape()));
        grad(loss.id())[0] = Real{1};
        for (std::size_t i = loss.id() + 1; i-- > 0;) {
            auto& n = nodes_[i];
            if (!n.needs_grad || n.grad.empty() || !n.backward) {
                continue;
            }
            if (!n.grad.all_finite()) {
                throw NumericError("non-finite gradient flowing into op '" + std::string(n.op) + "'");
            }
            n.backward(*this, i);
        }
        std::map<ParamId, Tensor<Real>> out;
        for (auto& n : nodes_) {
            if (n.param) {
                if (n.grad.empty()) {
                    n.grad = Tensor<Real>(n.value.shape());
                }
                if (!n.grad.all_finite()) {
                    throw NumericError("non-finite gradient for parameter " + std::to_string(*n.param));
                }
                auto it = out.find(*n.param);
                if (it == out.end()) {
                    out.emplace(*n.param, n.grad);
                } else {
                    for (std::size_t k = 0; k < n.grad.size(); ++k) {
                        it->second[k] += n.grad[k];
                    }
                }
            }
        }
        return out;
    }

    /// Adds `g` into the gradient of `parent` if that node needs it.
    void accumulate(std::size_t parent, const Tensor<Real>& g)
    {
        if (!nodes_[parent].needs_grad) {
            return;
        }
        auto& dst = grad(parent);
        for (std::size_t k = 0; k < g.size(); ++k) {
            dst[k] += g[k];
        }
    }

private:
    struct Node {
        Tensor<Real> value;
        Tensor<Real> grad;
        std::string_view op;
        bool needs_grad = false;
        std::vector<std::size_t> parents;
        Backward backward;
        std::optional<ParamId> param;
    };

    Var<Real> push(std::string_view op, Tensor<Real> value, bool needs, std::vector<std::size_t> parents,
                   Backward backward)
    {
        nodes_.push_back(Node{std::move(value), {}, op, needs, std::move(parents), std::move(backward), {}});
        return Var<Real>(this, nodes_.size() - 1);
    }

    // deque: node references stay valid while new nodes are appended
    std::deque<Node> nodes_;
};

} // namespace hlm
