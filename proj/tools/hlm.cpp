// SPDX-License-Identifier: Apache-2.0
// Command-line front end: training, verification, multiplier sweeps,
// stability scans, the toy model, schedule dumps, throughput and corpus
// packing. Config and state files are JSON.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "hlm/harness/corpus.hpp"
#include "hlm/harness/pretokenize.hpp"
#include "hlm/harness/synthetic.hpp"
#include "hlm/harness/trainer.hpp"
#include "hlm/mup/io.hpp"
#include "hlm/mup/tuner.hpp"
#include "hlm/stability/feedback.hpp"
#include "hlm/train/schedule.hpp"
#include "hlm/train/throughput.hpp"
#include "hlm/train/toy_model.hpp"
#include "hlm/verify/acceptance.hpp"

using namespace hlm;
using nlohmann::json;

namespace {

json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    return json::parse(in);
}

/// Writes to `path`, or stdout when it is empty or "-".
class Output {
public:
    explicit Output(const std::string& path)
    {
        if (!path.empty() && path != "-") {
            file_.open(path);
            if (!file_) {
                throw std::runtime_error("cannot write " + path);
            }
        }
    }
    std::ostream& operator*() { return file_.is_open() ? file_ : std::cout; }

private:
    std::ofstream file_;
};

std::vector<harness::Source> load_sources(const std::string& corpus, std::size_t synthetic_tokens, std::uint64_t seed)
{
    if (!corpus.empty()) {
        return harness::read_corpus(corpus);
    }
    return harness::generate_synthetic({synthetic_tokens, 0.5, seed});
}

harness::TrainConfig load_train_config(const std::string& path, const std::vector<harness::Source>& sources)
{
    harness::TrainConfig c;
    if (!path.empty()) {
        c = read_json(path).get<harness::TrainConfig>();
    } else {
        c = verify::criteria::convergence_config(sources);
    }
    if (c.mixture.entries.empty()) {
        c.mixture = harness::MixtureSpec::uniform(sources);
    }
    return c;
}

template <class Real>
std::vector<harness::StepRecord> train_with(const harness::TrainConfig& c, const std::vector<harness::Source>& src,
                                           const std::string& resume)
{
    auto trainer = resume.empty() ? harness::Trainer<Real>(c, src) : harness::Trainer<Real>::load(resume, src);
    return trainer.run();
}

int cmd_train(const std::string& config, const std::string& corpus, std::size_t synthetic, const std::string& resume,
              std::int64_t steps, const std::string& metrics, const std::string& ckpt)
{
    const auto src = load_sources(corpus, synthetic, 0);
    auto c = load_train_config(config, src);
    if (steps > 0) {
        c.steps = steps;
    }
    if (!metrics.empty()) {
        c.metrics_path = metrics;
    }
    if (!ckpt.empty()) {
        c.checkpoint_dir = ckpt;
    }
    const auto log = c.model.precision == Precision::verification ? train_with<double>(c, src, resume)
                                                                  : train_with<float>(c, src, resume);
    if (!log.empty()) {
        std::printf("steps %zu  loss %.4f -> %.4f  skipped %zu\n", log.size(), log.front().loss, log.back().loss,
                    static_cast<std::size_t>(std::count_if(log.begin(), log.end(), [](const auto& r) { return r.skipped; })));
    }
    return 0;
}

int cmd_verify(const std::vector<int>& only)
{
    const std::set<int> pick(only.begin(), only.end());
    int failed = 0;
    for (const auto& c : verify::acceptance_criteria()) {
        if (!pick.empty() && !pick.count(c.id)) {
            continue;
        }
        const auto r = verify::run_criterion(c);
        std::printf("%s\n", verify::format(r).c_str());
        std::fflush(stdout);
        failed += !r.pass;
    }
    return failed == 0 ? 0 : 1;
}

/// Mean loss over the last quarter of a short run.
template <class Real>
double short_run_loss(harness::TrainConfig c, const std::vector<harness::Source>& src)
{
    harness::Trainer<Real> t(c, src);
    const auto log = t.run();
    const std::size_t from = log.size() - std::max<std::size_t>(1, log.size() / 4);
    double s = 0;
    for (std::size_t k = from; k < log.size(); ++k) {
        s += log[k].loss;
    }
    return s / static_cast<double>(log.size() - from);
}

int cmd_sweep(const std::string& stage, const std::string& config, const std::string& corpus, std::size_t synthetic,
              double p, std::int64_t steps, const std::string& records, const std::string& next)
{
    const auto src = load_sources(corpus, synthetic, 0);
    auto c = load_train_config(config, src);
    c.steps = steps;
    c.metrics_path.clear();
    c.checkpoint_dir.clear();
    const auto current = stage.empty() ? c.multipliers : read_json(stage).get<mup::MuPMultiplierSet>();
    mup::LossOracle oracle = [&](const mup::MuPMultiplierSet& m) {
        auto run = c;
        run.multipliers = m;
        return c.model.precision == Precision::verification ? short_run_loss<double>(run, src)
                                                            : short_run_loss<float>(run, src);
    };
    const auto result = mup::tune_stage(current, p, oracle);
    Output rec(records);
    for (const auto& r : result.records) {
        *rec << json(r).dump() << '\n';
    }
    Output nxt(next);
    *nxt << json(result.next).dump(2) << '\n';
    return 0;
}

int cmd_stability(double span, double kappa, double a_ref, double eta, double alpha, std::int64_t steps, double noise,
                  const std::string& trajectory, const std::string& scan)
{
    const stability::WriteForgetObjective obj{span, kappa, a_ref};
    const auto H = obj.hessian();
    const auto eta_c = stability::critical_eta(H, 1.0, 1e-3, 1e3, 1.01, true);
    std::fprintf(stderr, "critical eta at alpha 1: %s\n", eta_c ? std::to_string(*eta_c).c_str() : "none");
    stability::SimulationSpec spec;
    spec.objective = obj;
    spec.eta = eta > 0 ? eta : eta_c.value_or(0.1);
    spec.alpha = alpha;
    spec.steps = steps;
    spec.noise = noise;
    const auto r = stability::simulate_write_forget(spec);
    {
        Output out(trajectory);
        *out << "step,u,a,objective\n";
        for (std::size_t k = 0; k < r.u.size(); ++k) {
            *out << k << ',' << r.u[k] << ',' << r.a[k] << ',' << r.objective[k] << '\n';
        }
    }
    std::fprintf(stderr, "eta %.6g alpha %.3g: amplitude ratio %.4g%s\n", spec.eta, alpha, r.amplitude_ratio,
                 r.diverged ? " (diverged)" : "");
    if (!scan.empty()) {
        Output out(scan);
        *out << "alpha,eta,radius,abs_l1,abs_l2,abs_l3,abs_l4\n";
        for (double a : {1.0, 0.9, 0.7, 0.5, 0.3, 0.1}) {
            for (double e = 1e-2; e < 1e2; e *= 1.1) {
                const auto f = stability::feedback_eigen(H, e, a);
                *out << a << ',' << e << ',' << f.radius;
                for (const auto& l : f.eigenvalues) {
                    *out << ',' << std::abs(l);
                }
                *out << '\n';
            }
        }
    }
    return 0;
}

int cmd_toy(train::ToyModelSpec s, int seeds)
{
    const auto m = train::toy_stationary_moments(s);
    std::printf("closed form: x_inf %.6g  x2_inf %.6g  x2_simplified %.6g\n", m.x_inf, m.x2_inf, m.x2_simplified);
    std::printf("seed,mean,second_moment,stationary\n");
    for (int k = 0; k < seeds; ++k) {
        s.seed = 1000 + static_cast<std::uint64_t>(k);
        const auto r = train::toy_simulate(s);
        std::printf("%llu,%.8g,%.8g,%d\n", static_cast<unsigned long long>(s.seed), r.mean, r.second_moment, r.stationary);
    }
    return 0;
}

int cmd_schedule(const std::string& spec_path, double until, double every)
{
    const auto s = spec_path.empty() ? train::ScheduleSpec{} : read_json(spec_path).get<train::ScheduleSpec>();
    s.validate();
    std::printf("tokens,eta,lambda,batch,eta_eff,lambda_eff\n");
    const double step = every > 0 ? every : std::max(1.0, until / 1000);
    for (double t = 0; t <= until; t += step) {
        const auto p = train::schedule_at(t, s);
        const auto [e, l] = p.eta > 0 ? train::elr_ewd(p.eta, p.lambda) : std::pair<double, double>{0, 0};
        std::printf("%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", t, p.eta, p.lambda, p.batch, e, l);
    }
    return 0;
}

int cmd_throughput(std::int64_t global, std::int64_t replicas, std::int64_t micro, double t_micro, double t_sync)
{
    const double thr = train::dp_throughput(global, replicas, micro, t_micro, [&](std::int64_t) { return t_sync; });
    std::printf("accumulation steps %lld  throughput %.6g samples per unit time\n",
                static_cast<long long>(train::accumulation_steps(global, replicas, micro)), thr);
    return 0;
}

/// Each input file becomes one source; blank-line separated paragraphs are
/// documents.
int cmd_pack(const std::vector<std::string>& inputs, const std::string& out, std::size_t synthetic, std::uint64_t seed)
{
    std::vector<harness::Source> sources;
    if (inputs.empty()) {
        sources = harness::generate_synthetic({synthetic, 0.5, seed});
    }
    for (const auto& path : inputs) {
        const std::string text = harness::detail::read_file(path);
        harness::Source s{std::filesystem::path(path).stem().string(), {}};
        std::size_t at = 0;
        while (at < text.size()) {
            std::size_t end = text.find("\n\n", at);
            end = end == std::string::npos ? text.size() : end;
            if (end > at) {
                s.documents.push_back(harness::encode_text(std::string_view(text).substr(at, end - at)));
            }
            at = end + 2;
        }
        sources.push_back(std::move(s));
    }
    const auto manifest = harness::write_corpus(out, sources);
    std::cout << json(manifest).dump(2) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"hybrid language model toolkit"};
    app.require_subcommand(1);

    std::string config, corpus, resume, metrics, ckpt;
    std::size_t synthetic = 200000;
    std::int64_t steps = 0;
    auto* train = app.add_subcommand("train", "train a model from a JSON config");
    train->add_option("--config", config, "TrainConfig JSON (default: the small convergence run)");
    train->add_option("--corpus", corpus, "corpus directory written by 'pack' (default: synthetic)");
    train->add_option("--synthetic-tokens", synthetic, "size of the synthetic corpus");
    train->add_option("--resume", resume, "checkpoint directory to resume from");
    train->add_option("--steps", steps, "override the step count");
    train->add_option("--metrics", metrics, "JSONL metrics file");
    train->add_option("--checkpoint-dir", ckpt, "checkpoint directory");

    std::vector<int> only;
    auto* ver = app.add_subcommand("verify", "run the acceptance criteria");
    ver->add_option("criteria", only, "criterion numbers (default: all)");

    std::string stage, records, next;
    double p = 2;
    std::int64_t sweep_steps = 50;
    auto* sweep = app.add_subcommand("sweep", "one multiplier micro-sweep stage");
    sweep->add_option("--stage", stage, "current multiplier set JSON (default: the config's)");
    sweep->add_option("--config", config, "TrainConfig JSON for the loss oracle");
    sweep->add_option("--corpus", corpus, "corpus directory");
    sweep->add_option("--synthetic-tokens", synthetic, "size of the synthetic corpus");
    sweep->add_option("-p,--factor", p, "probe factor")->check(CLI::PositiveNumber);
    sweep->add_option("--steps", sweep_steps, "training steps per oracle call");
    sweep->add_option("--records", records, "JSONL output of sweep records (default stdout)");
    sweep->add_option("--next", next, "next multiplier set JSON (default stdout)");

    double span = 64, kappa = 1, a_ref = 1, eta = 0, alpha = 1, noise = 0;
    std::int64_t stab_steps = 200;
    std::string trajectory, scan;
    auto* stab = app.add_subcommand("stability", "write-forget trajectory and eigenvalue scan");
    stab->add_option("--span", span);
    stab->add_option("--kappa", kappa);
    stab->add_option("--a-ref", a_ref);
    stab->add_option("--eta", eta, "step size (default: the critical one)");
    stab->add_option("--alpha", alpha)->check(CLI::Range(0.0, 1.0));
    stab->add_option("--steps", stab_steps);
    stab->add_option("--noise", noise);
    stab->add_option("--trajectory", trajectory, "trajectory CSV (default stdout)");
    stab->add_option("--scan", scan, "eigenvalue scan CSV");

    train::ToyModelSpec toy_spec;
    int seeds = 20;
    auto* toy = app.add_subcommand("toy", "stochastic toy model: closed form and Monte Carlo");
    toy->add_option("--curvature", toy_spec.h, "loss curvature h");
    toy->add_option("--x-star", toy_spec.x_star);
    toy->add_option("--sigma", toy_spec.sigma);
    toy->add_option("--eta", toy_spec.eta);
    toy->add_option("--lambda", toy_spec.lambda);
    toy->add_option("--steps", toy_spec.steps);
    toy->add_option("--burn-in", toy_spec.burn_in);
    toy->add_option("--seeds", seeds);

    std::string spec;
    double until = 1e6, every = 0;
    auto* sched = app.add_subcommand("schedule", "dump a schedule as CSV");
    sched->add_option("--spec", spec, "ScheduleSpec JSON");
    sched->add_option("--until", until, "last token count");
    sched->add_option("--every", every, "token spacing (default until/1000)");

    std::int64_t global = 1024, replicas = 8, micro = 4;
    double t_micro = 1, t_sync = 0;
    auto* thr = app.add_subcommand("throughput", "data-parallel throughput");
    thr->add_option("--global-batch", global);
    thr->add_option("--replicas", replicas);
    thr->add_option("--micro-batch", micro);
    thr->add_option("--t-micro", t_micro);
    thr->add_option("--t-sync", t_sync);

    std::vector<std::string> inputs;
    std::string out_dir;
    std::uint64_t seed = 0;
    auto* pack = app.add_subcommand("pack", "build a byte-level corpus directory");
    pack->add_option("inputs", inputs, "text files, one source each (default: synthetic)");
    pack->add_option("-o,--out", out_dir, "output directory")->required();
    pack->add_option("--synthetic-tokens", synthetic);
    pack->add_option("--seed", seed);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*train) return cmd_train(config, corpus, synthetic, resume, steps, metrics, ckpt);
        if (*ver) return cmd_verify(only);
        if (*sweep) return cmd_sweep(stage, config, corpus, synthetic, p, sweep_steps, records, next);
        if (*stab) return cmd_stability(span, kappa, a_ref, eta, alpha, stab_steps, noise, trajectory, scan);
        if (*toy) return cmd_toy(toy_spec, seeds);
        if (*sched) return cmd_schedule(spec, until, every);
        if (*thr) return cmd_throughput(global, replicas, micro, t_micro, t_sync);
        if (*pack) return cmd_pack(inputs, out_dir, synthetic, seed);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
