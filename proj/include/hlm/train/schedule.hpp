// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>

#include <json.hpp>

#include "hlm/numerics/errors.hpp"

namespace hlm::train {

/// (eta_eff, lambda_eff) = (sqrt(eta * lambda), sqrt(lambda / eta)).
inline std::pair<double, double> elr_ewd(double eta, double lambda)
{
    require(eta > 0 && lambda > 0, "elr_ewd: eta and lambda must be positive");
    return {std::sqrt(eta * lambda), std::sqrt(lambda / eta)};
}

/// Inverse map: eta = eta_eff / lambda_eff, lambda = eta_eff * lambda_eff.
inline std::pair<double, double> from_elr_ewd(double eta_eff, double lambda_eff)
{
    require(eta_eff > 0 && lambda_eff > 0, "from_elr_ewd: inputs must be positive");
    return {eta_eff / lambda_eff, eta_eff * lambda_eff};
}

/// Rows: d(log eta_eff), d(log lambda_eff); columns: d/d(log eta), d/d(log lambda).
inline std::array<std::array<double, 2>, 2> elr_ewd_log_jacobian() { return {{{0.5, 0.5}, {-0.5, 0.5}}}; }

/// eta_ref * sqrt(b / b_ref)
inline double batch_scaled_lr(double eta_ref, double b_ref, double b)
{
    require(b > 0 && b_ref > 0, "batch_scaled_lr: batch sizes must be positive");
    return eta_ref * std::sqrt(b / b_ref);
}

enum class PowerMode { none, PS, EPS };

struct ScheduleSpec {
    double eta0 = 1e-3;
    double lambda0 = 0.1;
    double warmup_tokens = 0;
    struct Rampup {
        double b_start = 1;
        double b_end = 1;
        double duration_tokens = 0;
        bool batch_scaling = false;
    } rampup;
    double stable_tokens = 0;
    struct Decay {
        double factor = 8;
        double duration_tokens = 0;
    } decay;
    struct Power {
        PowerMode mode = PowerMode::none;
        double t0 = 1;
    } power;

    void validate() const
    {
        require(eta0 >= 0 && lambda0 >= 0, "ScheduleSpec: eta0 and lambda0 must be non-negative");
        require(warmup_tokens >= 0 && stable_tokens >= 0 && rampup.duration_tokens >= 0 &&
                    decay.duration_tokens >= 0,
                "ScheduleSpec: durations must be non-negative");
        require(decay.factor > 1, "ScheduleSpec: decay factor must exceed 1");
        require(rampup.b_start > 0 && rampup.b_end > 0, "ScheduleSpec: batch sizes must be positive");
        require(power.mode == PowerMode::none || power.t0 > 0, "ScheduleSpec: power t0 must be positive");
    }

    double decay_start() const { return warmup_tokens + stable_tokens; }
    double total_tokens() const { return decay_start() + decay.duration_tokens; }
};

struct SchedulePoint {
    double eta = 0;
    double lambda = 0;
    /// Unrounded batch size; the trainer rounds to micro-batch multiples.
    double batch = 0;
};

/// eta(t) = eta0 * warmup(t) * power(t) * sqrt(b_t / b_end) * decay(t), with
/// lambda(t) = lambda0 * (EPS factor). Warmup is linear from 0; the batch
/// ramps linearly from b_start to b_end; PS multiplies eta by
/// sqrt(min(1, t0/t)); EPS multiplies both by min(1, t0/t)^(1/4); decay starts
/// after warmup + stable tokens and shrinks eta exponentially to eta/factor
/// over its duration, holding lambda.
inline SchedulePoint schedule_at(double t, const ScheduleSpec& s)
{
    require(t >= 0, "schedule_at: tokens_seen must be non-negative");
    s.validate();
    SchedulePoint p;
    const double warm = s.warmup_tokens > 0 ? std::min(1.0, t / s.warmup_tokens) : 1.0;
    p.batch = s.rampup.duration_tokens > 0
                  ? s.rampup.b_start + (s.rampup.b_end - s.rampup.b_start) * std::min(1.0, t / s.rampup.duration_tokens)
                  : s.rampup.b_end;
    const double bscale = s.rampup.batch_scaling ? std::sqrt(p.batch / s.rampup.b_end) : 1.0;
    double pe = 1.0, pl = 1.0;
    if (t > 0 && s.power.mode == PowerMode::PS) {
        pe = std::sqrt(std::min(1.0, s.power.t0 / t));
    } else if (t > 0 && s.power.mode == PowerMode::EPS) {
        pe = pl = std::pow(std::min(1.0, s.power.t0 / t), 0.25);
    }
    double dec = 1.0;
    if (s.decay.duration_tokens > 0 && t > s.decay_start()) {
        const double frac = std::clamp((t - s.decay_start()) / s.decay.duration_tokens, 0.0, 1.0);
        dec = std::pow(s.decay.factor, -frac);
    }
    p.eta = s.eta0 * warm * pe * bscale * dec;
    p.lambda = s.lambda0 * pl;
    return p;
}

NLOHMANN_JSON_SERIALIZE_ENUM(PowerMode, {{PowerMode::none, "none"}, {PowerMode::PS, "PS"}, {PowerMode::EPS, "EPS"}})

inline void to_json(nlohmann::json& j, const ScheduleSpec& s)
{
    j = {{"eta0", s.eta0},
         {"lambda0", s.lambda0},
         {"warmup_tokens", s.warmup_tokens},
         {"rampup",
          {{"b_start", s.rampup.b_start},
           {"b_end", s.rampup.b_end},
           {"duration_tokens", s.rampup.duration_tokens},
           {"batch_scaling", s.rampup.batch_scaling}}},
         {"stable_tokens", s.stable_tokens},
         {"decay", {{"factor", s.decay.factor}, {"duration_tokens", s.decay.duration_tokens}}},
         {"power", {{"mode", s.power.mode}, {"t0", s.power.t0}}}};
}

inline void from_json(const nlohmann::json& j, ScheduleSpec& s)
{
    ScheduleSpec d;
    s.eta0 = j.value("eta0", d.eta0);
    s.lambda0 = j.value("lambda0", d.lambda0);
    s.warmup_tokens = j.value("warmup_tokens", d.warmup_tokens);
    if (j.contains("rampup")) {
        const auto& r = j.at("rampup");
        s.rampup.b_start = r.value("b_start", d.rampup.b_start);
        s.rampup.b_end = r.value("b_end", d.rampup.b_end);
        s.rampup.duration_tokens = r.value("duration_tokens", d.rampup.duration_tokens);
        s.rampup.batch_scaling = r.value("batch_scaling", d.rampup.batch_scaling);
    }
    s.stable_tokens = j.value("stable_tokens", d.stable_tokens);
    if (j.contains("decay")) {
        s.decay.factor = j.at("decay").value("factor", d.decay.factor);
        s.decay.duration_tokens = j.at("decay").value("duration_tokens", d.decay.duration_tokens);
    }
    if (j.contains("power")) {
        s.power.mode = j.at("power").value("mode", d.power.mode);
        s.power.t0 = j.at("power").value("t0", d.power.t0);
    }
    s.validate();
}

} // namespace hlm::train
