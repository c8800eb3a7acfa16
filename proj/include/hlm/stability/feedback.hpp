// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "hlm/numerics/errors.hpp"
#include "hlm/stability/write_forget.hpp"

namespace hlm::stability {

/// 2x2 symmetric curvature in (raw gate, A_log) coordinates.
using Hessian2 = Eigen::Matrix2d;

/// Gradient descent where each coordinate sees the other one step late:
///   theta_{k+1} = theta_k - eta (D theta_k + O theta_{k-1})
/// with D = diag(H), O = H - D. State (theta_k, theta_{k-1}) evolves by
///   [[I - eta D, -eta O], [I, 0]].
inline Eigen::Matrix4d companion_matrix(const Hessian2& H, double eta)
{
    require(eta >= 0, "companion_matrix: eta must be non-negative");
    require(std::abs(H(0, 1) - H(1, 0)) <= 1e-12 * (1 + std::abs(H(0, 1))), "companion_matrix: H must be symmetric");
    Eigen::Matrix2d D = Eigen::Matrix2d::Zero();
    D(0, 0) = H(0, 0);
    D(1, 1) = H(1, 1);
    const Eigen::Matrix2d O = H - D;
    Eigen::Matrix4d M = Eigen::Matrix4d::Zero();
    M.topLeftCorner<2, 2>() = Eigen::Matrix2d::Identity() - eta * D;
    M.topRightCorner<2, 2>() = -eta * O;
    M.bottomLeftCorner<2, 2>() = Eigen::Matrix2d::Identity();
    return M;
}

inline double spectral_radius(const Eigen::Matrix4d& M)
{
    Eigen::EigenSolver<Eigen::Matrix4d> solver(M, false);
    require(solver.info() == Eigen::Success, "spectral_radius: eigen decomposition failed");
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

/// Attenuation alpha rescales the raw-gate direction: H -> S H S, S = diag(alpha, 1).
inline Hessian2 attenuate(const Hessian2& H, double alpha)
{
    require(alpha > 0 && alpha <= 1, "attenuate: alpha must be in (0, 1]");
    Eigen::Matrix2d S = Eigen::Matrix2d::Identity();
    S(0, 0) = alpha;
    return S * H * S;
}

struct FeedbackEigen {
    std::array<std::complex<double>, 4> eigenvalues;
    double radius = 0;
};

inline FeedbackEigen feedback_eigen(const Hessian2& H, double eta, double alpha = 1.0)
{
    const auto M = companion_matrix(attenuate(H, alpha), eta);
    Eigen::EigenSolver<Eigen::Matrix4d> solver(M, false);
    require(solver.info() == Eigen::Success, "feedback_eigen: eigen decomposition failed");
    FeedbackEigen out;
    for (int i = 0; i < 4; ++i) {
        out.eigenvalues[i] = solver.eigenvalues()[i];
        out.radius = std::max(out.radius, std::abs(out.eigenvalues[i]));
    }
    return out;
}

inline double feedback_radius(const Hessian2& H, double eta, double alpha = 1.0)
{
    return feedback_eigen(H, eta, alpha).radius;
}

/// First point of the geometric grid eta_min * ratio^k (k >= 0, up to eta_max)
/// where the radius exceeds one. With `refine`, the crossing is then located
/// by bisection between that point and its predecessor.
inline std::optional<double> critical_eta(const Hessian2& H, double alpha, double eta_min = 1e-3,
                                          double eta_max = 1e3, double ratio = 1.01, bool refine = false)
{
    require(eta_min > 0 && eta_max > eta_min && ratio > 1, "critical_eta: bad grid");
    double prev = 0;
    for (double eta = eta_min; eta <= eta_max; eta *= ratio) {
        if (feedback_radius(H, eta, alpha) > 1.0) {
            if (!refine) {
                return eta;
            }
            double lo = prev, hi = eta;
            for (int i = 0; i < 100 && hi - lo > 1e-14 * hi; ++i) {
                const double mid = 0.5 * (lo + hi);
                (feedback_radius(H, mid, alpha) > 1.0 ? hi : lo) = mid;
            }
            return hi;
        }
        prev = eta;
    }
    return std::nullopt;
}

/// Largest grid alpha = k / n (k = 1..n) whose attenuated radius at `eta` is
/// below one, scanning down from alpha = 1; empty when none is stable.
/// Every alpha on the grid at or below the returned value is also checked.
inline std::optional<double> critical_attenuation(const Hessian2& H, double eta, int n = 1000)
{
    require(n > 0, "critical_attenuation: need a positive grid size");
    std::optional<double> best;
    for (int k = n; k >= 1; --k) {
        const double alpha = static_cast<double>(k) / n;
        if (feedback_radius(H, eta, alpha) < 1.0) {
            if (!best) {
                best = alpha;
            }
        } else if (best) {
            // stable set is not an interval below the threshold
            return std::nullopt;
        }
    }
    return best;
}

/// Direct simulation of the delayed linear recursion, starting from
/// theta_0 = theta_{-1} = theta0. Returns theta_k for k = 0..steps.
inline std::vector<Eigen::Vector2d> delayed_linear_trajectory(const Hessian2& H, double eta,
                                                              const Eigen::Vector2d& theta0, int steps)
{
    std::vector<Eigen::Vector2d> out{theta0};
    Eigen::Vector2d prev = theta0, cur = theta0;
    for (int k = 0; k < steps; ++k) {
        Eigen::Vector2d next;
        next(0) = cur(0) - eta * (H(0, 0) * cur(0) + H(0, 1) * prev(1));
        next(1) = cur(1) - eta * (H(1, 1) * cur(1) + H(1, 0) * prev(0));
        prev = cur;
        cur = next;
        out.push_back(cur);
    }
    return out;
}

/// Scalar write/forget objective over the raw gate u and A_log:
///   J(u, a) = -log w + span e^a w + (kappa / 2)(a - a_ref)^2,  w = softplus(alpha u).
/// The first term rewards writing, the second charges the memory lost over
/// `span` positions, the anchor keeps A_log from running off.
struct WriteForgetObjective {
    double span = 64;
    double kappa = 1;
    double a_ref = 1;

    void validate() const { require(span > 0 && kappa > 0, "WriteForgetObjective: span and kappa must be positive"); }

    double value(double u, double a, double alpha) const
    {
        const double w = softplus(alpha * u);
        return -std::log(w) + span * std::exp(a) * w + 0.5 * kappa * (a - a_ref) * (a - a_ref);
    }

    /// (dJ/du, dJ/da).
    Eigen::Vector2d gradient(double u, double a, double alpha) const
    {
        const double v = alpha * u;
        const double w = softplus(v);
        const double dw = alpha * sigmoid(v);
        return {(-1.0 / w + span * std::exp(a)) * dw, span * std::exp(a) * w + kappa * (a - a_ref)};
    }

    /// Stationary point in (u, a) for a given attenuation.
    Eigen::Vector2d stationary(double alpha) const
    {
        validate();
        const double a = a_ref - 1.0 / kappa;
        const double w = std::exp(-a) / span;
        return {softplus_inverse(w) / alpha, a};
    }

    /// Hessian at the stationary point in (alpha u, a) coordinates; in (u, a)
    /// it is attenuate(hessian(), alpha).
    Hessian2 hessian() const
    {
        const Eigen::Vector2d s = stationary(1.0);
        const double w = softplus(s(0));
        const double r = sigmoid(s(0)) / w;
        Hessian2 H;
        H << r * r, r, r, 1.0 + kappa;
        return H;
    }
};

struct SimulationSpec {
    WriteForgetObjective objective;
    double eta = 0.1;
    double alpha = 1;
    int steps = 200;
    /// Initial offset from the stationary point in (u, a).
    double perturb_u = 1e-4;
    double perturb_a = 1e-4;
    /// Optional additive Gaussian noise on each gradient.
    double noise = 0;
    std::uint64_t seed = 0;
};

struct SimulationResult {
    std::vector<double> u, a, objective;
    Eigen::Vector2d stationary;
    bool diverged = false;
    int diverged_at = -1;
    /// max |u - u*| over the last quarter of the run divided by the same
    /// over the third quarter; infinite after divergence.
    double amplitude_ratio = 0;
    double final_amplitude = 0;
};

/// Delayed-feedback gradient descent on the write/forget objective:
///   u_{k+1} = u_k - eta dJ/du(u_k, a_{k-1})
///   a_{k+1} = a_k - eta dJ/da(u_{k-1}, a_k)
/// Near the stationary point this linearizes to companion_matrix(attenuate(H, alpha), eta).
inline SimulationResult simulate_write_forget(const SimulationSpec& spec)
{
    spec.objective.validate();
    require(spec.alpha > 0 && spec.alpha <= 1, "simulate_write_forget: alpha must be in (0, 1]");
    require(spec.eta > 0 && spec.steps >= 8, "simulate_write_forget: need eta > 0 and at least 8 steps");
    require(spec.noise >= 0, "simulate_write_forget: noise must be non-negative");
    Rng rng(spec.seed);
    SimulationResult out;
    out.stationary = spec.objective.stationary(spec.alpha);
    const double us = out.stationary(0), as = out.stationary(1);
    double u = us + spec.perturb_u, a = as + spec.perturb_a;
    double u_prev = u, a_prev = a;
    auto record = [&] {
        out.u.push_back(u);
        out.a.push_back(a);
        out.objective.push_back(spec.objective.value(u, a, spec.alpha));
    };
    record();
    for (int k = 0; k < spec.steps; ++k) {
        double gu = spec.objective.gradient(u, a_prev, spec.alpha)(0);
        double ga = spec.objective.gradient(u_prev, a, spec.alpha)(1);
        if (spec.noise > 0) {
            gu += spec.noise * rng.normal();
            ga += spec.noise * rng.normal();
        }
        const double un = u - spec.eta * gu, an = a - spec.eta * ga;
        u_prev = u;
        a_prev = a;
        u = un;
        a = an;
        if (!std::isfinite(u) || !std::isfinite(a) || std::abs(u) > 1e6 || std::abs(a) > 1e6) {
            out.diverged = true;
            out.diverged_at = k + 1;
            out.amplitude_ratio = std::numeric_limits<double>::infinity();
            out.final_amplitude = std::numeric_limits<double>::infinity();
            return out;
        }
        record();
    }
    const std::size_t n = out.u.size();
    auto amplitude = [&](std::size_t lo, std::size_t hi) {
        double m = 0;
        for (std::size_t i = lo; i < hi; ++i) {
            m = std::max(m, std::abs(out.u[i] - us));
        }
        return m;
    };
    const double early = amplitude(n / 2, 3 * n / 4);
    const double late = amplitude(3 * n / 4, n);
    out.final_amplitude = std::abs(out.u.back() - us);
    out.amplitude_ratio = early > 0 ? late / early : (late > 0 ? std::numeric_limits<double>::infinity() : 0.0);
    return out;
}

} // namespace hlm::stability
