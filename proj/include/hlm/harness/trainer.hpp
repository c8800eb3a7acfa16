// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "hlm/harness/checkpoint.hpp"
#include "hlm/harness/loader.hpp"
#include "hlm/model/model.hpp"
#include "hlm/mup/io.hpp"
#include "hlm/train/adamw.hpp"
#include "hlm/train/schedule.hpp"
#include "hlm/train/step.hpp"

namespace hlm::harness {

/// Skips a batch whose loss exceeds `multiple` times the median of the last
/// `window` accepted losses, once `min_history` losses are known.
struct SkipGuard {
    double multiple = 5;
    std::size_t window = 64;
    std::size_t min_history = 8;
};

struct TrainConfig {
    model::HybridConfig model;
    /// Multipliers at their reference shapes; transferred to the model's shapes.
    mup::MuPMultiplierSet multipliers = mup::MuPMultiplierSet::base_model();
    train::ScheduleSpec schedule;
    train::AdamConfig adam;
    MixtureSpec mixture;
    SkipGuard guard;
    ssm::DtPolicy dt_policy;
    std::size_t rows = 4;
    std::size_t T = 64;
    std::int64_t steps = 100;
    /// 0 disables periodic checkpoints.
    std::int64_t checkpoint_every = 0;
    std::string checkpoint_dir;
    /// Empty disables the metrics file.
    std::string metrics_path;
    std::int64_t log_every = 1;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c)
{
    j = {{"model", c.model},
         {"multipliers", c.multipliers},
         {"schedule", c.schedule},
         {"adam",
          {{"beta1", c.adam.beta1},
           {"beta2", c.adam.beta2},
           {"eps", c.adam.eps},
           {"bias_correction", c.adam.bias_correction}}},
         {"mixture", c.mixture},
         {"guard", {{"multiple", c.guard.multiple}, {"window", c.guard.window}, {"min_history", c.guard.min_history}}},
         {"rows", c.rows},
         {"T", c.T},
         {"steps", c.steps},
         {"checkpoint_every", c.checkpoint_every},
         {"checkpoint_dir", c.checkpoint_dir},
         {"metrics_path", c.metrics_path},
         {"log_every", c.log_every}};
    switch (c.dt_policy.mode) {
    case ssm::DtPolicy::Mode::none: j["dt_policy"] = {{"mode", "none"}}; break;
    case ssm::DtPolicy::Mode::clip_positive: j["dt_policy"] = {{"mode", "clip"}, {"dt_max", c.dt_policy.dt_max}}; break;
    case ssm::DtPolicy::Mode::attenuate:
        j["dt_policy"] = {{"mode", "attenuate"}, {"alpha", c.dt_policy.alpha}, {"steps", c.dt_policy.steps}};
        break;
    }
}

/// Missing keys keep their defaults, so small hand-written configs work.
inline void from_json(const nlohmann::json& j, TrainConfig& c)
{
    const TrainConfig d;
    c.model = j.value("model", d.model);
    c.multipliers = j.contains("multipliers") ? j.at("multipliers").get<mup::MuPMultiplierSet>() : d.multipliers;
    c.schedule = j.value("schedule", d.schedule);
    if (j.contains("adam")) {
        const auto& a = j.at("adam");
        c.adam.beta1 = a.value("beta1", d.adam.beta1);
        c.adam.beta2 = a.value("beta2", d.adam.beta2);
        c.adam.eps = a.value("eps", d.adam.eps);
        c.adam.bias_correction = a.value("bias_correction", d.adam.bias_correction);
    }
    if (j.contains("mixture")) {
        c.mixture = j.at("mixture").get<MixtureSpec>();
    }
    if (j.contains("guard")) {
        const auto& g = j.at("guard");
        c.guard.multiple = g.value("multiple", d.guard.multiple);
        c.guard.window = g.value("window", d.guard.window);
        c.guard.min_history = g.value("min_history", d.guard.min_history);
    }
    if (j.contains("dt_policy")) {
        const auto& p = j.at("dt_policy");
        const std::string mode = p.value("mode", std::string("none"));
        if (mode == "clip") {
            c.dt_policy = ssm::DtPolicy::clip(p.at("dt_max"));
        } else if (mode == "attenuate") {
            c.dt_policy = ssm::DtPolicy::attenuate(p.at("alpha"), p.at("steps"));
        } else {
            require(mode == "none", "TrainConfig: unknown dt_policy mode '" + mode + "'");
        }
    }
    c.rows = j.value("rows", d.rows);
    c.T = j.value("T", d.T);
    c.steps = j.value("steps", d.steps);
    c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
    c.checkpoint_dir = j.value("checkpoint_dir", d.checkpoint_dir);
    c.metrics_path = j.value("metrics_path", d.metrics_path);
    c.log_every = j.value("log_every", d.log_every);
}

struct StepRecord {
    std::int64_t step = 0;
    double tokens = 0;
    double loss = 0;
    double eta = 0;
    double lambda = 0;
    double batch = 0;
    double grad_norm = 0;
    bool skipped = false;
    /// Mean-square-root norm sqrt(sum W^2 / count) per optimizer group.
    std::map<std::string, double> group_rms;
};

inline void to_json(nlohmann::json& j, const StepRecord& r)
{
    j = {{"step", r.step},   {"tokens", r.tokens},       {"loss", r.loss},       {"eta", r.eta},
         {"lambda", r.lambda}, {"batch", r.batch}, {"grad_norm", r.grad_norm}, {"skipped", r.skipped},
         {"group_rms", r.group_rms}};
}

inline double median(std::vector<double> v)
{
    require(!v.empty(), "median: empty input");
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) {
        return hi;
    }
    return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

template <class Real>
std::map<std::string, double> group_rms(const model::ParameterStore<Real>& params)
{
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (const auto& p : params) {
        auto& [sq, n] = acc[p.group.name()];
        for (Real v : p.value.values()) {
            sq += static_cast<double>(v) * static_cast<double>(v);
        }
        n += p.value.size();
    }
    std::map<std::string, double> out;
    for (const auto& [name, sn] : acc) {
        out[name] = std::sqrt(sn.first / static_cast<double>(sn.second));
    }
    return out;
}

/// Next-token training loop over the mixture loader. Deterministic: the same
/// config and corpus give the same batches, losses and parameters, and a
/// restored checkpoint continues the run exactly.
template <class Real>
class Trainer {
public:
    /// Called with each batch's rows before the step; lets tests corrupt data.
    using BatchHook = std::function<void(std::int64_t step, std::vector<train::TrainRow>& rows)>;

    Trainer(TrainConfig config, std::vector<Source> sources)
        : config_(std::move(config)), loader_(std::move(sources), config_.mixture, config_.rows, config_.T),
          mults_(transferred(config_)), model_(model::init_model<Real>(config_.model, mults_)),
          opt_(train::OptimizerState<Real>::zeros(model_.params))
    {
        require(config_.steps >= 0 && config_.log_every >= 1, "TrainConfig: bad step counts");
        const bool is_double = std::is_same_v<Real, double>;
        require(is_double == (config_.model.precision == Precision::verification),
                "Trainer: scalar type does not match the configured precision");
        config_.schedule.validate();
        config_.dt_policy.validate();
    }

    const TrainConfig& config() const { return config_; }
    const model::HybridModel<Real>& model() const { return model_; }
    /// Direct access for fault-injection tests.
    model::HybridModel<Real>& mutable_model() { return model_; }
    const mup::MuPMultiplierSet& multipliers() const { return mults_; }
    const train::OptimizerState<Real>& optimizer() const { return opt_; }
    const DataLoader& loader() const { return loader_; }
    std::int64_t step_count() const { return step_; }
    double tokens_seen() const { return tokens_; }
    void set_batch_hook(BatchHook h) { hook_ = std::move(h); }

    StepRecord step()
    {
        const auto point = train::schedule_at(tokens_, config_.schedule);
        const auto batch = loader_.next_batch();
        auto rows = batch.train_rows();
        if (hook_) {
            hook_(step_, rows);
        }
        const model::BlockContext ctx{&mults_, config_.dt_policy, step_};
        train::LossAndGrads<Real> lg;
        try {
            lg = train::loss_and_grads(model_, mults_, ctx, rows);
        } catch (const NumericError& e) {
            abort_with_checkpoint(e.what());
        }

        StepRecord r;
        r.step = step_;
        r.tokens = tokens_;
        r.loss = lg.loss;
        r.eta = point.eta;
        r.lambda = point.lambda;
        r.batch = static_cast<double>(rows.size());
        double sq = 0;
        for (const auto& [id, g] : lg.grads) {
            for (Real v : g.values()) {
                sq += static_cast<double>(v) * static_cast<double>(v);
            }
        }
        r.grad_norm = std::sqrt(sq);

        if (!std::isfinite(lg.loss)) {
            abort_with_checkpoint("loss is " + std::to_string(lg.loss));
        }
        if (history_.size() >= config_.guard.min_history &&
            lg.loss > config_.guard.multiple * median({history_.begin(), history_.end()})) {
            r.skipped = true;
        } else {
            train::adamw_step(model_.params, lg.grads, mults_, point.eta, point.lambda, opt_, config_.adam);
            history_.push_back(lg.loss);
            if (history_.size() > config_.guard.window) {
                history_.pop_front();
            }
        }
        r.group_rms = group_rms(model_.params);
        tokens_ += static_cast<double>(config_.rows * config_.T);
        ++step_;
        if (!config_.checkpoint_dir.empty() && config_.checkpoint_every > 0 && step_ % config_.checkpoint_every == 0) {
            save(config_.checkpoint_dir);
        }
        return r;
    }

    /// Runs until `config.steps`, appending records to the metrics file.
    std::vector<StepRecord> run()
    {
        std::optional<std::ofstream> log;
        if (!config_.metrics_path.empty()) {
            log.emplace(config_.metrics_path, std::ios::app);
            require(static_cast<bool>(*log), "train: cannot open metrics file '" + config_.metrics_path + "'");
        }
        std::vector<StepRecord> out;
        while (step_ < config_.steps) {
            out.push_back(step());
            if (log && (out.back().step % config_.log_every == 0 || out.back().skipped)) {
                *log << nlohmann::json(out.back()).dump() << '\n';
            }
        }
        return out;
    }

    /// Writes `<dir>/checkpoint.json` and `<dir>/checkpoint.bin`.
    void save(const std::filesystem::path& dir) const
    {
        std::filesystem::create_directories(dir);
        TensorBundle<Real> bundle;
        for (const auto& p : model_.params) {
            bundle.add("param:" + p.name, p.value);
        }
        for (std::size_t i = 0; i < opt_.m.size(); ++i) {
            bundle.add("adam_m:" + model_.params[i].name, opt_.m[i]);
            bundle.add("adam_v:" + model_.params[i].name, opt_.v[i]);
        }
        nlohmann::json j = {{"format", "hlm-checkpoint-1"},
                            {"config", config_},
                            {"step", step_},
                            {"tokens", tokens_},
                            {"optimizer_step", opt_.step},
                            {"loader", loader_.state()},
                            {"loss_history", std::vector<double>(history_.begin(), history_.end())},
                            {"tensors", bundle.index()}};
        detail::write_file(dir / "checkpoint.bin", bundle.blob());
        detail::write_file(dir / "checkpoint.json", j.dump(2) + "\n");
    }

    /// Rebuilds a trainer from a checkpoint; `sources` must be the same corpus.
    static Trainer load(const std::filesystem::path& dir, std::vector<Source> sources)
    {
        const auto j = nlohmann::json::parse(detail::read_file(dir / "checkpoint.json"));
        require(j.at("format") == "hlm-checkpoint-1", "checkpoint: unknown format");
        Trainer t(j.at("config").get<TrainConfig>(), std::move(sources));
        const auto bundle = TensorBundle<Real>::from(j.at("tensors"), detail::read_file(dir / "checkpoint.bin"));
        const std::size_t n = t.model_.params.size();
        require(bundle.size() == 3 * n, "checkpoint: tensor count mismatch");
        for (std::size_t i = 0; i < n; ++i) {
            auto& p = t.model_.params[i];
            require(bundle.name(i) == "param:" + p.name, "checkpoint: parameter order mismatch at " + p.name);
            auto v = bundle.get(i);
            require(v.shape() == p.value.shape(), "checkpoint: shape mismatch for " + p.name);
            p.value = std::move(v);
            t.opt_.m[i] = bundle.get(n + 2 * i);
            t.opt_.v[i] = bundle.get(n + 2 * i + 1);
        }
        t.opt_.step = j.at("optimizer_step");
        t.step_ = j.at("step");
        t.tokens_ = j.at("tokens");
        t.loader_.restore(j.at("loader").get<LoaderState>());
        const auto hist = j.at("loss_history").get<std::vector<double>>();
        t.history_.assign(hist.begin(), hist.end());
        return t;
    }

private:
    [[noreturn]] void abort_with_checkpoint(const std::string& why) const
    {
        if (!config_.checkpoint_dir.empty()) {
            save(config_.checkpoint_dir);
        }
        throw NumericError("train: non-finite loss at step " + std::to_string(step_) + " (" + why + ")");
    }

    static mup::MuPMultiplierSet transferred(const TrainConfig& c)
    {
        auto m = c.multipliers;
        m.validate();
        m.shapes = model::model_shapes(model::resolve_dims(c.model));
        return m;
    }

    TrainConfig config_;
    DataLoader loader_;
    mup::MuPMultiplierSet mults_;
    model::HybridModel<Real> model_;
    train::OptimizerState<Real> opt_;
    std::int64_t step_ = 0;
    double tokens_ = 0;
    std::deque<double> history_;
    BatchHook hook_;
};

} // namespace hlm::harness
