// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hlm/harness/synthetic.hpp"
#include "hlm/harness/trainer.hpp"
#include "hlm/mup/scaling.hpp"
#include "hlm/stability/feedback.hpp"
#include "hlm/stability/write_forget.hpp"
#include "hlm/train/schedule.hpp"
#include "hlm/verify/coordinate_check.hpp"
#include "hlm/verify/gradient_suite.hpp"
#include "hlm/verify/packed_checks.hpp"
#include "hlm/verify/symmetry_check.hpp"
#include "hlm/verify/toy_check.hpp"
#include "hlm/verify/tuner_check.hpp"

namespace hlm::verify {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0;
    /// Wall-clock budget; 0 means none.
    double budget = 0;
};

struct Criterion {
    int id;
    std::string name;
    double budget;
    /// Fills detail, returns whether every tolerance held.
    std::function<bool(std::ostringstream&)> check;
};

inline CriterionResult run_criterion(const Criterion& c)
{
    CriterionResult r{c.id, c.name, false, "", 0, c.budget};
    std::ostringstream detail;
    detail.precision(3);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        r.pass = c.check(detail);
    } catch (const std::exception& e) {
        detail << " exception: " << e.what();
        r.pass = false;
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget > 0 && r.seconds > c.budget) {
        detail << " over time budget";
        r.pass = false;
    }
    r.detail = detail.str();
    return r;
}

inline std::string format(const CriterionResult& r)
{
    char head[160];
    std::snprintf(head, sizeof head, "[%s] %2d %-28s %8.1fs", r.pass ? "PASS" : "FAIL", r.id, r.name.c_str(), r.seconds);
    std::string line(head);
    if (r.budget > 0) {
        char b[32];
        std::snprintf(b, sizeof b, " (budget %.0fs)", r.budget);
        line += b;
    }
    return line + "  " + r.detail;
}

namespace criteria {

inline bool scan_oracle(std::ostringstream& o)
{
    const double err = scan_oracle_error(2024, 100, 128);
    o << "max abs err " << err << " (< 1e-9)";
    return err < 1e-9;
}

inline bool reset_isolation_check(std::ostringstream& o)
{
    const auto r = reset_isolation(77, 20);
    const double attn = attention_packing_error(10, 20);
    o << "worst |M|/(e^-80 |M0|) " << r.worst_ratio << " over " << r.pairs << " pairs (<= 1); attention packed err "
      << attn << " (< 1e-12)";
    return r.pairs > 0 && r.worst_ratio <= 1.0 + 1e-12 && attn < 1e-12;
}

inline bool gradients(std::ostringstream& o)
{
    double block = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        block = std::max({block, ssm_block_gradient_error(seed), attention_gradient_error(seed), mlp_gradient_error(seed),
                          model_gradient_error(seed)});
    }
    Rng rng(3);
    double dt = 0, alog = 0;
    for (int i = 0; i < 100; ++i) {
        const auto w = stability::random_write_forget(rng, 10);
        const std::size_t t = 1 + rng.below(9);
        const std::size_t s = rng.below(t);
        const double h = 1e-5;
        auto shifted = [&](double b) {
            auto v = w;
            for (auto& d : v.dt_raw) d += b;
            return stability::log_mixing(v, s, t);
        };
        const double g = stability::grad_logM_dt(w, s, t);
        dt = std::max(dt, std::abs((shifted(h) - shifted(-h)) / (2 * h) - g) / std::max(1e-3, std::abs(g)));

        std::vector<double> x(10), target(10);
        for (std::size_t k = 0; k < 10; ++k) {
            x[k] = rng.normal();
            target[k] = rng.normal();
        }
        const double ga = stability::grad_loss_Alog(w, stability::decay_upstream(w, x, target));
        auto wp = w, wm = w;
        wp.A_log += 1e-6;
        wm.A_log -= 1e-6;
        const double fd = (stability::quadratic_loss(wp, x, target) - stability::quadratic_loss(wm, x, target)) / 2e-6;
        alog = std::max(alog, std::abs(ga - fd) / std::max(1.0, std::abs(fd)));
    }
    o << "blocks rel err " << block << " (< 1e-4); dt sensitivity " << dt << ", A_log " << alog << " (< 1e-6)";
    return block < 1e-4 && dt < 1e-6 && alog < 1e-6;
}

inline bool symmetry(std::ostringstream& o)
{
    double worst = 0;
    for (double p : {0.5, 2.0, 8.0}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            worst = std::max(worst, symmetry_trajectory_deviation(p, seed));
        }
    }
    const auto base = mup::MuPMultiplierSet::base_model();
    const auto s = base.ref_shapes;
    std::size_t mismatches = 0;
    for (double d1 : {64.0, 320.0, 2560.0, 777.0}) {
        for (double d2 : {128.0, 1280.0, 5120.0, 91.0}) {
            const auto a = mup::scale_multipliers(mup::scale_multipliers(base, s.d, d1, s), d1, d2, s);
            const auto b = mup::scale_multipliers(base, s.d, d2, s);
            for (std::size_t i = 0; i < mup::kForwardCount; ++i) {
                mismatches += a.forward(static_cast<mup::Forward>(i)) != b.forward(static_cast<mup::Forward>(i));
            }
        }
    }
    o << "rel loss deviation " << worst << " (< 1e-9); composition mismatches " << mismatches;
    return worst < 1e-9 && mismatches == 0;
}

inline bool coordinates(std::ostringstream& o)
{
    const auto c = coordinate_check(mup::MuPMultiplierSet::base_model());
    o << "block RMS spread " << c.worst_spread << " across widths 64/128/256 (< 4)";
    return c.worst_spread < 4.0;
}

inline bool toy(std::ostringstream& o)
{
    const auto a = toy_agreement(stationary_spec(0.5, 1.0, 1.0, 0.01, 0.5, 60), 20);
    const auto f = noise_dominated_slope();
    o << "mean z " << a.mean_z << ", x2 z " << a.x2_z << " (< 3); slope " << f.slope << " (1 +- 0.1)";
    return a.stationary && a.mean_z < 3 && a.x2_z < 3 && std::abs(f.slope - 1.0) <= 0.1;
}

inline bool schedules(std::ostringstream& o)
{
    train::ScheduleSpec s;
    s.eta0 = 4e-3;
    s.lambda0 = 0.1;
    s.power = {train::PowerMode::PS, 1000};
    bool points = train::schedule_at(1000, s).eta == 4e-3 && train::schedule_at(4000, s).eta == 2e-3 &&
                  train::schedule_at(4000, s).lambda == 0.1;
    s.power.mode = train::PowerMode::EPS;
    points = points && train::schedule_at(16000, s).eta == 2e-3 && train::schedule_at(16000, s).lambda == 0.05;

    const double ref = train::elr_ewd(s.eta0, s.lambda0).second;
    double drift = 0;
    for (double t = 1000; t < 1e9; t *= 1.37) {
        const auto p = train::schedule_at(t, s);
        drift = std::max(drift, std::abs(train::elr_ewd(p.eta, p.lambda).second / ref - 1.0));
    }
    bool batch = train::batch_scaled_lr(1e-3, 64, 256) == 2e-3 && train::batch_scaled_lr(1e-3, 64, 16) == 5e-4 &&
                 train::batch_scaled_lr(1e-3, 64, 64) == 1e-3;
    for (double b : {8.0, 24.0, 100.0, 1000.0}) {
        batch = batch && train::batch_scaled_lr(3e-4, 32, b) == 3e-4 * std::sqrt(b / 32);
    }
    o << "PS/EPS points " << (points ? "exact" : "WRONG") << "; EPS lambda_eff drift " << drift
      << " (< 1e-12); batch scaling " << (batch ? "exact" : "WRONG");
    return points && drift < 1e-12 && batch;
}

inline bool tuner(std::ostringstream& o)
{
    const auto run = run_bowl(reference_bowl(), mup::MuPMultiplierSet::ones({}));
    Rng rng(9);
    double worst = 0;
    for (int i = 0; i < 200; ++i) {
        const double a = rng.uniform(0.01, 5.0), u_star = rng.uniform(-3, 3), L_star = rng.uniform(-2, 2);
        const double u0 = rng.uniform(-3, 3);
        const double p = i % 2 ? 2.0 : std::sqrt(2.0);
        const double q = std::log2(p);
        auto L = [&](double u) { return 0.5 * a * (u - u_star) * (u - u_star) + L_star; };
        worst = std::max(worst, std::abs(mup::fit_sensitivity(L(u0 - q), L(u0), L(u0 + q), p).a - a));
    }
    o << "bowl distance " << run.final_distance << " after " << run.stages_to_converge
      << " stages (<= 0.5 in <= 6); curvature err " << worst << " (< 1e-12)";
    return run.final_distance <= 0.5 && run.stages_to_converge >= 1 && run.stages_to_converge <= 6 && worst < 1e-12;
}

inline bool stability_lab(std::ostringstream& o)
{
    const stability::WriteForgetObjective obj{64, 1, 1};
    const auto H = obj.hessian();
    const auto base = stability::critical_eta(H, 1.0);
    const auto att = stability::critical_eta(H, 0.3);
    if (!base || !att) {
        o << "no instability threshold found";
        return false;
    }
    const auto alpha_c = stability::critical_attenuation(H, *base);
    stability::SimulationSpec spec;
    spec.objective = obj;
    spec.eta = *base;
    spec.alpha = 1.0;
    const auto full = stability::simulate_write_forget(spec);
    bool decays = alpha_c.has_value();
    double worst_ratio = 0;
    for (double alpha : {0.5, 0.3}) {
        spec.alpha = alpha;
        const auto r = stability::simulate_write_forget(spec);
        decays = decays && alpha <= *alpha_c && !r.diverged;
        worst_ratio = std::max(worst_ratio, r.amplitude_ratio);
    }
    o << "eta* " << *base << " -> " << *att << " at alpha 0.3; stable below alpha " << (alpha_c ? *alpha_c : 0.0)
      << "; tail ratio " << worst_ratio << " attenuated vs " << full.amplitude_ratio << " at alpha 1";
    return *att > *base && decays && worst_ratio < 1.0 && (full.diverged || full.amplitude_ratio >= 1.0);
}

/// Small-model config used for the convergence echo.
inline harness::TrainConfig convergence_config(const std::vector<harness::Source>& sources)
{
    harness::TrainConfig c;
    c.model.d_model = 64;
    c.model.n_layers = 2;
    c.model.vocab = harness::kByteVocab;
    c.model.ssm.d_head = 16;
    c.model.ssm.d_state = 8;
    c.model.attn.d_head = 16;
    c.model.precision = Precision::training;
    c.model.seed = 1;
    c.mixture = harness::MixtureSpec::uniform(sources);
    c.rows = 4;
    c.T = 64;
    c.steps = 2000;
    c.schedule.eta0 = 2e-3;
    c.schedule.lambda0 = 0.1;
    c.schedule.warmup_tokens = 50.0 * 256;
    return c;
}

inline std::uint64_t hash_rows(const std::vector<train::TrainRow>& rows)
{
    using harness::fnv1a64;
    std::uint64_t h = fnv1a64(nullptr, 0);
    for (const auto& r : rows) {
        h = fnv1a64(r.tokens.data(), r.tokens.size() * sizeof(std::int32_t), h);
        h = fnv1a64(r.targets.data(), r.targets.size() * sizeof(std::int32_t), h);
        h = fnv1a64(r.resets.data(), r.resets.size(), h);
        h = fnv1a64(r.doc_ids.data(), r.doc_ids.size() * sizeof(std::int32_t), h);
        h = fnv1a64(r.positions.data(), r.positions.size() * sizeof(std::int32_t), h);
    }
    return h;
}

inline bool harness_determinism(std::ostringstream& o)
{
    // resume in verification precision: batches and losses must match bit for bit
    const auto small = harness::generate_synthetic({20000, 0.5, 21});
    auto cfg = convergence_config(small);
    cfg.model.d_model = 32;
    cfg.model.ssm.d_head = 8;
    cfg.model.ssm.d_state = 4;
    cfg.model.attn.d_head = 8;
    cfg.model.precision = Precision::verification;
    cfg.rows = 2;
    cfg.T = 32;
    cfg.steps = 12;
    std::vector<std::uint64_t> ref_hash, res_hash;
    harness::Trainer<double> full(cfg, small);
    full.set_batch_hook([&](std::int64_t, std::vector<train::TrainRow>& r) { ref_hash.push_back(hash_rows(r)); });
    const auto ref = full.run();

    const auto dir = std::filesystem::temp_directory_path() / "hlm_acceptance_resume";
    std::filesystem::remove_all(dir);
    harness::Trainer<double> first(cfg, small);
    first.set_batch_hook([&](std::int64_t, std::vector<train::TrainRow>& r) { res_hash.push_back(hash_rows(r)); });
    for (int k = 0; k < 5; ++k) {
        first.step();
    }
    first.save(dir);
    auto resumed = harness::Trainer<double>::load(dir, small);
    resumed.set_batch_hook([&](std::int64_t, std::vector<train::TrainRow>& r) { res_hash.push_back(hash_rows(r)); });
    const auto rest = resumed.run();
    std::filesystem::remove_all(dir);
    bool identical = res_hash == ref_hash && rest.size() + 5 == ref.size();
    for (std::size_t k = 0; identical && k < rest.size(); ++k) {
        identical = rest[k].loss == ref[k + 5].loss && rest[k].grad_norm == ref[k + 5].grad_norm;
    }

    // convergence echo in training precision
    const auto corpus = harness::generate_synthetic({200000, 0.5, 0});
    harness::Trainer<float> trainer(convergence_config(corpus), corpus);
    const auto log = trainer.run();
    const double initial = log.front().loss;
    double final_loss = 0;
    const std::size_t tail = 50;
    for (std::size_t k = log.size() - tail; k < log.size(); ++k) {
        final_loss += log[k].loss / static_cast<double>(tail);
    }
    o << "resume " << (identical ? "bit-identical" : "DIVERGED") << "; loss " << initial << " -> " << final_loss
      << " (last-50 mean, need < " << 0.8 * initial << ")";
    return identical && final_loss < 0.8 * initial;
}

} // namespace criteria

inline std::vector<Criterion> acceptance_criteria()
{
    return {{1, "ssm oracle equivalence", 60, criteria::scan_oracle},
            {2, "reset isolation", 30, criteria::reset_isolation_check},
            {3, "gradient suite", 300, criteria::gradients},
            {4, "parametrization symmetry", 0, criteria::symmetry},
            {5, "coordinate check", 0, criteria::coordinates},
            {6, "toy model moments", 0, criteria::toy},
            {7, "schedules", 0, criteria::schedules},
            {8, "multiplier tuner", 0, criteria::tuner},
            {9, "stability lab", 0, criteria::stability_lab},
            {10, "harness determinism", 900, criteria::harness_determinism}};
}

} // namespace hlm::verify
