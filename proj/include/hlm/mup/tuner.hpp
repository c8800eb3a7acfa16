// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hlm/mup/multipliers.hpp"

namespace hlm::mup {

/// One tunable direction. Matrix groups are swept in effective coordinates:
/// ELR moves (lr, wd) -> (p lr, p wd), EWD moves (lr, wd) -> (p lr, wd / p).
struct Coordinate {
    enum class Kind { forward, elr, ewd, vector_lr };
    Kind kind = Kind::forward;
    std::size_t index = 0;

    std::string name() const
    {
        switch (kind) {
        case Kind::forward: return std::string(kForwardNames[index]);
        case Kind::elr: return "ELR:" + std::string(kMatrixNames[index]);
        case Kind::ewd: return "EWD:" + std::string(kMatrixNames[index]);
        case Kind::vector_lr: return "LR:" + std::string(kVectorNames[index]);
        }
        return "?";
    }

    /// Current value along this direction.
    double value(const MuPMultiplierSet& m) const
    {
        switch (kind) {
        case Kind::forward: return m.forward_ref[index];
        case Kind::elr: return std::sqrt(m.matrix_lr[index] * m.matrix_wd[index]);
        case Kind::ewd: return std::sqrt(m.matrix_wd[index] / m.matrix_lr[index]);
        case Kind::vector_lr: return m.vector_lr[index];
        }
        return 0;
    }

    /// Moves the set so that value() is multiplied by `factor`.
    void scale(MuPMultiplierSet& m, double factor) const
    {
        switch (kind) {
        case Kind::forward: m.forward_ref[index] *= factor; break;
        case Kind::elr:
            m.matrix_lr[index] *= factor;
            m.matrix_wd[index] *= factor;
            break;
        case Kind::ewd:
            // value = sqrt(wd / lr); (p lr, wd / p) divides it by p
            m.matrix_lr[index] /= factor;
            m.matrix_wd[index] *= factor;
            break;
        case Kind::vector_lr: m.vector_lr[index] *= factor; break;
        }
    }

    friend bool operator==(const Coordinate&, const Coordinate&) = default;
};

/// All 35 directions in a fixed order: forward, ELR, EWD, vector LR.
inline std::vector<Coordinate> all_coordinates()
{
    std::vector<Coordinate> out;
    for (std::size_t i = 0; i < kForwardCount; ++i) {
        out.push_back({Coordinate::Kind::forward, i});
    }
    for (std::size_t i = 0; i < kMatrixCount; ++i) {
        out.push_back({Coordinate::Kind::elr, i});
    }
    for (std::size_t i = 0; i < kMatrixCount; ++i) {
        out.push_back({Coordinate::Kind::ewd, i});
    }
    for (std::size_t i = 0; i < kVectorCount; ++i) {
        out.push_back({Coordinate::Kind::vector_lr, i});
    }
    return out;
}

inline Coordinate coordinate_from_name(const std::string& name)
{
    for (const auto& c : all_coordinates()) {
        if (c.name() == name) {
            return c;
        }
    }
    throw ContractError("unknown tuning coordinate '" + name + "'");
}

struct Sensitivity {
    /// Curvature in log2 coordinates.
    double a = 0;
    /// Offset of the fitted minimum from the center, in log2 units; empty
    /// when the fit has no minimum (a <= 0).
    std::optional<double> offset;
};

/// Exact three-point quadratic fit of L(u) = (a/2)(u - u*)^2 + L* at
/// u = -log2 p, 0, +log2 p.
inline Sensitivity fit_sensitivity(double L_minus, double L_0, double L_plus, double p)
{
    require(p > 1, "fit_sensitivity: p must exceed 1");
    if (!std::isfinite(L_minus) || !std::isfinite(L_0) || !std::isfinite(L_plus)) {
        throw ContractError("fit_sensitivity: losses must be finite");
    }
    const double q = std::log2(p);
    Sensitivity s;
    s.a = (L_plus + L_minus - 2.0 * L_0) / (q * q);
    if (s.a > 0) {
        s.offset = (L_minus - L_plus) / (2.0 * s.a * q);
    }
    return s;
}

struct SweepRecord {
    std::string multiplier;
    double p = 2;
    double L_minus = 0, L_0 = 0, L_plus = 0;
    double value = 0;
    double next_value = 0;
    double a = 0;
    std::optional<double> offset;
    bool failed = false;
    std::string error;
};

using LossOracle = std::function<double(const MuPMultiplierSet&)>;

/// Selection: the lowest of the three losses; the center wins unless a side
/// is lower by more than `tie_tolerance`.
inline int select_move(double L_minus, double L_0, double L_plus, double tie_tolerance = 1e-4)
{
    const double best_side = std::min(L_minus, L_plus);
    if (!(best_side < L_0 - tie_tolerance)) {
        return 0;
    }
    return L_minus <= L_plus ? -1 : +1;
}

struct StageResult {
    MuPMultiplierSet next;
    std::vector<SweepRecord> records;
    double baseline = 0;
};

/// One stage of micro-sweeps. Every direction is probed at p^-1 and p^+1
/// around the current set; moves are chosen independently and applied
/// together. A throwing or non-finite oracle marks the record failed and the
/// direction is held.
inline StageResult tune_stage(const MuPMultiplierSet& current, double p, const LossOracle& oracle,
                              const std::vector<Coordinate>& coords = all_coordinates(), double tie_tolerance = 1e-4)
{
    require(p > 1, "tune_stage: p must exceed 1");
    StageResult out;
    out.next = current;
    out.baseline = oracle(current);
    require(std::isfinite(out.baseline), "tune_stage: baseline loss is not finite");
    for (const auto& c : coords) {
        SweepRecord r;
        r.multiplier = c.name();
        r.p = p;
        r.L_0 = out.baseline;
        r.value = c.value(current);
        r.next_value = r.value;
        try {
            auto lo = current, hi = current;
            c.scale(lo, 1.0 / p);
            c.scale(hi, p);
            r.L_minus = oracle(lo);
            r.L_plus = oracle(hi);
            const auto sens = fit_sensitivity(r.L_minus, r.L_0, r.L_plus, p);
            r.a = sens.a;
            r.offset = sens.offset;
            const int move = select_move(r.L_minus, r.L_0, r.L_plus, tie_tolerance);
            if (move != 0) {
                c.scale(out.next, move > 0 ? p : 1.0 / p);
            }
            r.next_value = c.value(out.next);
        } catch (const std::exception& e) {
            r.failed = true;
            r.error = e.what();
        }
        out.records.push_back(std::move(r));
    }
    return out;
}

/// Coarse-to-fine factors: p = 2 for three stages, then sqrt(2) for three.
inline std::vector<double> default_stage_factors()
{
    const double r2 = std::sqrt(2.0);
    return {2.0, 2.0, 2.0, r2, r2, r2};
}

/// Runs consecutive stages, each starting from the previous stage's choice.
inline std::vector<StageResult> tune(const MuPMultiplierSet& start, const std::vector<double>& factors,
                                     const LossOracle& oracle,
                                     const std::vector<Coordinate>& coords = all_coordinates())
{
    std::vector<StageResult> stages;
    auto current = start;
    for (double p : factors) {
        stages.push_back(tune_stage(current, p, oracle, coords));
        current = stages.back().next;
    }
    return stages;
}

/// Quadratic bowl in log2 coordinates: L = sum_ij (u_i - c_i) H_ij (u_j - c_j) / 2.
struct QuadraticBowl {
    std::vector<Coordinate> coords;
    std::vector<double> centers;
    std::vector<std::vector<double>> hessian;

    double operator()(const MuPMultiplierSet& m) const
    {
        const std::size_t n = coords.size();
        std::vector<double> d(n);
        for (std::size_t i = 0; i < n; ++i) {
            d[i] = std::log2(coords[i].value(m)) - centers[i];
        }
        double L = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                L += 0.5 * d[i] * hessian[i][j] * d[j];
            }
        }
        return L;
    }

    /// Largest |log2 value - center| over the bowl's coordinates.
    double distance(const MuPMultiplierSet& m) const
    {
        double worst = 0;
        for (std::size_t i = 0; i < coords.size(); ++i) {
            worst = std::max(worst, std::abs(std::log2(coords[i].value(m)) - centers[i]));
        }
        return worst;
    }
};

inline void to_json(nlohmann::json& j, const SweepRecord& r)
{
    j = {{"multiplier", r.multiplier}, {"p", r.p},           {"L_minus", r.L_minus},     {"L_0", r.L_0},
         {"L_plus", r.L_plus},         {"value", r.value},   {"next_value", r.next_value}, {"a", r.a},
         {"failed", r.failed}};
    j["offset"] = r.offset ? nlohmann::json(*r.offset) : nlohmann::json(nullptr);
    if (r.failed) {
        j["error"] = r.error;
    }
}

inline void from_json(const nlohmann::json& j, SweepRecord& r)
{
    r.multiplier = j.at("multiplier");
    r.p = j.at("p");
    r.L_minus = j.at("L_minus");
    r.L_0 = j.at("L_0");
    r.L_plus = j.at("L_plus");
    r.value = j.at("value");
    r.next_value = j.at("next_value");
    r.a = j.at("a");
    r.failed = j.value("failed", false);
    r.error = j.value("error", std::string());
    if (j.contains("offset") && !j.at("offset").is_null()) {
        r.offset = j.at("offset").get<double>();
    }
}

} // namespace hlm::mup
