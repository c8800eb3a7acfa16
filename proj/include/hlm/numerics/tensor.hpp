// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hlm/numerics/errors.hpp"

namespace hlm {

using Shape = std::vector<std::size_t>;

/// Verification precision runs every oracle suite in double; training
/// precision runs the harness in float. Selected by config, never inferred.
enum class Precision { verification, training };

template <Precision P> struct real_of;
template <> struct real_of<Precision::verification> { using type = double; };
template <> struct real_of<Precision::training> { using type = float; };

inline std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? ", " : "") << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major tensor. Invariant: product(shape) == size().
template <class Real>
class Tensor {
public:
    using value_type = Real;

    Tensor() = default;

    explicit Tensor(Shape shape, Real fill = Real{0})
        : shape_(std::move(shape)), data_(shape_size(shape_), fill)
    {
    }

    Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data))
    {
        if (shape_size(shape_) != data_.size()) {
            throw ContractError("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_string(shape_));
        }
    }

    static Tensor scalar(Real v) { return Tensor(Shape{}, std::vector<Real>{v}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    bool empty() const noexcept { return data_.empty(); }

    /// Leading extent for rank >= 1 tensors.
    std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
    /// Product of all extents after the leading one.
    std::size_t cols() const { return shape_.empty() ? 1 : size() / std::max<std::size_t>(shape_[0], 1); }

    Real* data() noexcept { return data_.data(); }
    const Real* data() const noexcept { return data_.data(); }
    std::span<Real> values() noexcept { return data_; }
    std::span<const Real> values() const noexcept { return data_; }
    std::vector<Real>& storage() noexcept { return data_; }
    const std::vector<Real>& storage() const noexcept { return data_; }

    Real& operator[](std::size_t i) { return data_[i]; }
    const Real& operator[](std::size_t i) const { return data_[i]; }

    Real& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    const Real& operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    Real item() const
    {
        require(data_.size() == 1, "item() on tensor of shape " + shape_string(shape_));
        return data_[0];
    }

    bool requires_grad() const noexcept { return requires_grad_; }
    void set_requires_grad(bool flag) noexcept { requires_grad_ = flag; }

    bool all_finite() const noexcept
    {
        for (Real v : data_) {
            if (!std::isfinite(v)) {
                return false;
            }
        }
        return true;
    }

    void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

    template <class U>
    Tensor<U> cast() const
    {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const Tensor& a, const Tensor& b)
    {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<Real> data_;
    bool requires_grad_ = false;
};

template <class Real>
Real max_abs(const Tensor<Real>& t)
{
    Real m = 0;
    for (Real v : t.values()) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

template <class Real>
Real max_abs_diff(const Tensor<Real>& a, const Tensor<Real>& b)
{
    require(a.shape() == b.shape(), "max_abs_diff: shape mismatch " + shape_string(a.shape()) +
                                        " vs " + shape_string(b.shape()));
    Real m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

/// Relative error used by every gradient check:
/// max_i |a_i - b_i| / max(max_i |b_i|, floor).
template <class Real>
Real max_rel_err(const Tensor<Real>& a, const Tensor<Real>& b, Real floor = Real(1e-12))
{
    return max_abs_diff(a, b) / std::max(max_abs(b), floor);
}

} // namespace hlm
