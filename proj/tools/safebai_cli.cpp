#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "safebai/constants.hpp"
#include "safebai/harness.hpp"
#include "safebai/instances.hpp"
#include "safebai/oracle.hpp"

namespace {

using namespace safebai;

struct GenArgs {
    std::string generator = "mab-hard";
    std::string params = "{}";
    double eps = 0.1;
    std::string out;
};

struct RunArgs {
    std::string config;
    std::string algo = "beside";
    std::string instance;
    std::string generator;
    std::string params = "{}";
    double eps = 0.5;
    double delta = 0.1;
    int trials = 1;
    std::uint64_t seed = 0;
    std::string out;
    std::string summary;
    std::string constants = "practical";
    int fw_iters = 200;
    double eta = 0.1;
    unsigned threads = 0;
    std::string sweep_param;
    std::vector<double> sweep_values;
};

ExperimentSpec spec_from_args(const RunArgs& a, const CLI::App& sub) {
    ExperimentSpec s;
    if (!a.config.empty()) {
        s = load_spec(a.config);
    } else {
        s.instance.path = a.instance;
        s.instance.generator = a.generator;
        s.instance.params = nlohmann::json::parse(a.params);
    }
    // Explicit flags override the config file.
    const auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
    if (a.config.empty() || given("--algo")) {
        s.algorithms.clear();
        std::string rest = a.algo;
        for (std::size_t pos; (pos = rest.find(',')) != std::string::npos; rest = rest.substr(pos + 1))
            s.algorithms.push_back(rest.substr(0, pos));
        s.algorithms.push_back(rest);
    }
    if (a.config.empty() || given("--eps")) s.eps = a.eps;
    if (a.config.empty() || given("--delta")) s.delta = a.delta;
    if (a.config.empty() || given("--trials")) s.n_trials = a.trials;
    if (a.config.empty() || given("--seed")) s.base_seed = a.seed;
    if (a.config.empty() || given("--constants")) s.constants_preset = a.constants;
    if (a.config.empty() || given("--fw-iters")) s.options.design.allocation.fw_iters = a.fw_iters;
    if (a.config.empty() || given("--eta")) s.options.design.allocation.eta = a.eta;
    if (a.config.empty() || given("--threads")) s.threads = a.threads;
    if (given("--out")) s.output_path = a.out;
    if (!a.sweep_param.empty()) s.sweep = SweepSpec{a.sweep_param, a.sweep_values};
    s.validate();
    return s;
}

int run_spec(const ExperimentSpec& s, const std::string& summary_path) {
    const auto rows = run_experiment(s);
    if (s.output_path.empty() || s.output_path == "-") write_csv(rows, std::cout);
    else write_csv(rows, s.output_path);
    const auto summary = summarize(rows);
    if (!summary_path.empty()) {
        std::ofstream f(summary_path);
        write_summary(summary, f);
    } else {
        write_summary(summary, s.output_path.empty() || s.output_path == "-" ? std::cerr : std::cout);
    }
    return 0;
}

void add_run_options(CLI::App* sub, RunArgs& a) {
    sub->add_option("--config", a.config, "JSON experiment spec");
    sub->add_option("--algo", a.algo, "algorithm name(s), comma separated: beside, beside-elim, baseline, xy-diff-only, xy-safe-only");
    sub->add_option("--instance", a.instance, "instance JSON file");
    sub->add_option("--generator", a.generator, "instance generator: mab-hard, prop1-i1, prop1-i2, random, bai");
    sub->add_option("--params", a.params, "generator parameters as a JSON object");
    sub->add_option("--eps", a.eps, "target accuracy");
    sub->add_option("--delta", a.delta, "failure probability");
    sub->add_option("--trials", a.trials, "trials per cell");
    sub->add_option("--seed", a.seed, "base seed");
    sub->add_option("--out", a.out, "CSV output path (stdout when omitted)");
    sub->add_option("--summary", a.summary, "summary CSV path");
    sub->add_option("--constants", a.constants, "constants preset: practical or analysis");
    sub->add_option("--fw-iters", a.fw_iters, "Frank-Wolfe iterations per design solve");
    sub->add_option("--eta", a.eta, "uniform mixing weight for sampled designs");
    sub->add_option("--threads", a.threads, "worker threads (0: all cores)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Best-safe-arm identification in linear bandits"};
    app.require_subcommand(1);

    GenArgs g;
    auto* gen = app.add_subcommand("gen-instance", "write an instance JSON");
    gen->add_option("--generator", g.generator, "mab-hard, prop1-i1, prop1-i2, random, bai");
    gen->add_option("--params", g.params, "generator parameters as a JSON object");
    gen->add_option("--eps", g.eps, "eps used by eps-tied prop1 parameters");
    gen->add_option("--out", g.out, "output path (stdout when omitted)");

    RunArgs r;
    auto* run = app.add_subcommand("run", "run one experiment spec");
    add_run_options(run, r);

    RunArgs sw;
    auto* sweep = app.add_subcommand("sweep", "run a spec with a sweep block");
    add_run_options(sweep, sw);
    sweep->add_option("--sweep-param", sw.sweep_param, "eps, delta, or a generator parameter");
    sweep->add_option("--sweep-values", sw.sweep_values, "values of the sweep parameter");

    std::string lb_instance;
    double lb_delta = 0.05;
    int lb_restarts = 5;
    int lb_fw_iters = 400;
    auto* lb = app.add_subcommand("lower-bound", "oracle lower bound for an m = 1 instance");
    lb->add_option("--instance", lb_instance, "instance JSON file")->required();
    lb->add_option("--delta", lb_delta, "failure probability");
    lb->add_option("--restarts", lb_restarts, "Frank-Wolfe restarts");
    lb->add_option("--fw-iters", lb_fw_iters, "Frank-Wolfe iterations per restart");

    std::string preset = "analysis";
    std::string overrides = "{}";
    auto* vc = app.add_subcommand("validate-constants", "check the constants inequalities");
    vc->add_option("--preset", preset, "analysis or practical");
    vc->add_option("--set", overrides, "JSON object of overrides, e.g. {\"c_4\": 0.3}");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            const auto inst = make_instance(g.generator, nlohmann::json::parse(g.params), g.eps);
            const std::string text = instance_to_json(inst).dump(2);
            if (g.out.empty()) std::cout << text << '\n';
            else save_instance(inst, g.out);
            return 0;
        }
        if (*run) {
            if (r.config.empty() && r.instance.empty() && r.generator.empty())
                throw std::invalid_argument("run: give --config, --instance or --generator");
            return run_spec(spec_from_args(r, *run), r.summary);
        }
        if (*sweep) {
            const ExperimentSpec s = spec_from_args(sw, *sweep);
            if (!s.sweep) throw std::invalid_argument("sweep: the spec has no sweep block");
            return run_spec(s, sw.summary);
        }
        if (*lb) {
            const auto inst = load_instance(lb_instance);
            OracleOptions opt;
            opt.restarts = lb_restarts;
            opt.allocation.fw_iters = lb_fw_iters;
            const LowerBound b = oracle_lower_bound(inst, lb_delta, opt);
            const LowerBound p = projection_lower_bound(inst, lb_delta);
            nlohmann::json j;
            j["delta"] = lb_delta;
            j["log_factor"] = b.log_factor;
            j["degenerate"] = b.degenerate;
            if (b.degenerate) {
                j["lower_bound"] = "inf";
            } else {
                j["lower_bound"] = b.bound;
                j["complexity"] = b.complexity;
                j["fw_complexity"] = b.fw_complexity;
                if (b.grid_complexity) j["grid_complexity"] = *b.grid_complexity;
                j["lambda"] = std::vector<double>(b.lambda.weights().data(), b.lambda.weights().data() + b.lambda.size());
                j["projection_bound"] = p.bound;
            }
            std::cout << j.dump(2) << '\n';
            return 0;
        }
        if (*vc) {
            const ConstantsLedger k = constants_from(preset, nlohmann::json::parse(overrides));
            bool ok = true;
            for (const auto& c : k.check()) {
                std::printf("%s  %-58s lhs=%.10g rhs=%.10g\n", c.passed ? "ok  " : "FAIL", c.name.c_str(), c.lhs, c.rhs);
                ok = ok && c.passed;
            }
            std::printf("%s\n", ok ? "all constraints satisfied" : "constraints violated");
            return ok ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
