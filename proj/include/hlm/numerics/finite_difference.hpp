// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "hlm/numerics/tensor.hpp"

namespace hlm {

/// Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / 2h for every
/// coordinate of x. This is the oracle for all gradient checks.
template <class Real>
Tensor<Real> finite_difference_gradient(const std::function<Real(const Tensor<Real>&)>& f, const Tensor<Real>& x,
                                        Real step)
{
    require(step > 0, "finite_difference_gradient: step must be positive");
    Tensor<Real> grad(x.shape());
    Tensor<Real> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Real orig = probe[i];
        probe[i] = orig + step;
        const Real fp = f(probe);
        probe[i] = orig - step;
        const Real fm = f(probe);
        probe[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericError("finite_difference_gradient: non-finite value probing coordinate " +
                               std::to_string(i));
        }
        grad[i] = (fp - fm) / (Real{2} * step);
    }
    return grad;
}

/// Scalar convenience overload.
template <class Real>
Real finite_difference_derivative(const std::function<Real(Real)>& f, Real x, Real step)
{
    const Real fp = f(x + step), fm = f(x - step);
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("finite_difference_derivative: non-finite probe");
    }
    return (fp - fm) / (Real{2} * step);
}

} // namespace hlm
