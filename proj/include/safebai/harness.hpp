#pragma once

// Multi-trial experiment runner: instance construction, seeding, a worker
// pool with ordered collection, CSV output and summaries.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "algorithms.hpp"
#include "constants.hpp"
#include "instances.hpp"

namespace safebai {

inline const std::vector<std::string>& registered_algorithms() {
    static const std::vector<std::string> names{"beside", "beside-elim", "baseline", "xy-diff-only", "xy-safe-only"};
    return names;
}

inline bool is_registered_algorithm(const std::string& name) {
    const auto& r = registered_algorithms();
    return std::find(r.begin(), r.end(), name) != r.end();
}

/// Either a generator name with parameters or a path to an instance file.
struct InstanceSource {
    std::string generator;
    nlohmann::json params = nlohmann::json::object();
    std::string path;
};

struct SweepSpec {
    std::string param;
    std::vector<double> values;
};

struct ExperimentSpec {
    InstanceSource instance;
    std::vector<std::string> algorithms{"beside"};
    double eps = 0.5;
    double delta = 0.1;
    int n_trials = 1;
    std::uint64_t base_seed = 0;
    std::optional<SweepSpec> sweep;
    std::string output_path;
    std::string constants_preset = "practical";
    nlohmann::json constants_overrides = nlohmann::json::object();
    AlgorithmOptions options;
    unsigned threads = 0;  // 0: hardware concurrency

    void validate() const {
        if (n_trials < 1) throw std::invalid_argument("ExperimentSpec: n_trials must be >= 1");
        if (algorithms.empty()) throw std::invalid_argument("ExperimentSpec: no algorithms");
        for (const auto& a : algorithms)
            if (!is_registered_algorithm(a)) throw std::invalid_argument("unknown algorithm: " + a);
        if (instance.generator.empty() == instance.path.empty())
            throw std::invalid_argument("ExperimentSpec: give exactly one of an instance generator or an instance file");
        if (sweep && sweep->values.empty()) throw std::invalid_argument("ExperimentSpec: sweep has no values");
    }
};

struct ExperimentRow {
    std::string sweep_param;
    double sweep_value = 0.0;
    int trial = 0;
    RunRecord record;
    std::vector<PhaseBudget> budgets;
};

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based trial seed; independent of the algorithm so every algorithm
/// sees the same stream for a given (sweep value, trial).
inline std::uint64_t trial_seed(std::uint64_t base_seed, std::uint64_t sweep_idx, std::uint64_t trial) {
    return mix64(mix64(mix64(base_seed) ^ sweep_idx) ^ trial);
}

inline ConstantsLedger constants_from(const std::string& preset, const nlohmann::json& overrides = nlohmann::json::object()) {
    ConstantsLedger k;
    if (preset == "analysis") k = ConstantsLedger::analysis();
    else if (preset == "practical") k = ConstantsLedger::practical();
    else throw std::invalid_argument("unknown constants preset: " + preset);
    const std::map<std::string, double*> fields{
        {"c_1", &k.c_1}, {"c_2", &k.c_2}, {"c_3", &k.c_3}, {"c_4", &k.c_4}, {"c_a", &k.c_a},
        {"c_b", &k.c_b}, {"c_c", &k.c_c}, {"c_d", &k.c_d}, {"c_e", &k.c_e}, {"c_f", &k.c_f},
        {"c_g", &k.c_g}, {"c_0", &k.c_0}, {"kappa_safe", &k.kappa_safe}};
    for (const auto& [key, val] : overrides.items()) {
        const auto it = fields.find(key);
        if (it == fields.end()) throw std::invalid_argument("unknown constant: " + key);
        *it->second = val.get<double>();
    }
    return k;
}

namespace detail {

inline double param_or(const nlohmann::json& p, const char* key, double def) {
    return p.contains(key) ? p.at(key).get<double>() : def;
}

/// alpha for the two-arm instances: fixed, or tied to eps through
/// alpha_eps_factor * eps (I1) / alpha_sqrt_eps_factor * sqrt(eps) (I2).
inline double prop1_alpha(const nlohmann::json& p, double eps) {
    if (p.contains("alpha")) return p.at("alpha").get<double>();
    if (p.contains("alpha_eps_factor")) return p.at("alpha_eps_factor").get<double>() * eps;
    if (p.contains("alpha_sqrt_eps_factor")) return p.at("alpha_sqrt_eps_factor").get<double>() * std::sqrt(eps);
    throw std::invalid_argument("prop1 generator needs alpha, alpha_eps_factor or alpha_sqrt_eps_factor");
}

}  // namespace detail

/// Generators: mab-hard {n_arms, safety_margin, value_gap}, prop1-i1 and
/// prop1-i2 {alpha | alpha_eps_factor | alpha_sqrt_eps_factor}, random
/// {d, n_x, n_z, m, seed}, bai {d, gap} (standard basis, mu = 0, gamma = 1,
/// theta_k = 1 - gap * k).
inline ProblemInstance make_instance(const std::string& generator, const nlohmann::json& p, double eps) {
    using detail::param_or;
    if (generator == "mab-hard")
        return gen_mab_hard_instance(static_cast<int>(param_or(p, "n_arms", 10)), param_or(p, "safety_margin", 0.1),
                                     param_or(p, "value_gap", 0.05));
    if (generator == "prop1-i1") return gen_prop1_instance_unchecked(Prop1Kind::I1, detail::prop1_alpha(p, eps));
    if (generator == "prop1-i2") return gen_prop1_instance_unchecked(Prop1Kind::I2, detail::prop1_alpha(p, eps));
    if (generator == "random")
        return gen_random_instance(static_cast<int>(param_or(p, "d", 5)), static_cast<int>(param_or(p, "n_x", 10)),
                                   static_cast<int>(param_or(p, "n_z", 10)), static_cast<int>(param_or(p, "m", 1)),
                                   static_cast<std::uint64_t>(param_or(p, "seed", 0)));
    if (generator == "bai") {
        const int d = static_cast<int>(param_or(p, "d", 5));
        const double gap = param_or(p, "gap", 0.1);
        if (d < 2) throw std::invalid_argument("bai generator: d must be >= 2");
        Vector theta(d);
        for (int k = 0; k < d; ++k) theta[k] = 1.0 - gap * k;
        return gen_all_safe_instance(Matrix::Identity(d, d), theta);
    }
    throw std::invalid_argument("unknown instance generator: " + generator);
}

/// Instance and eps for one sweep point. The sweep parameter is either eps,
/// delta, or a generator parameter.
struct SweepPoint {
    ProblemInstance instance;
    double eps;
    double delta;
};

inline SweepPoint resolve_sweep_point(const ExperimentSpec& spec, std::optional<double> value) {
    double eps = spec.eps;
    double delta = spec.delta;
    nlohmann::json params = spec.instance.params;
    if (value) {
        const std::string& name = spec.sweep->param;
        if (name == "eps") eps = *value;
        else if (name == "delta") delta = *value;
        else if (!spec.instance.generator.empty()) params[name] = *value;
        else throw std::invalid_argument("sweep over '" + name + "' needs an instance generator");
    }
    ProblemInstance inst = spec.instance.path.empty() ? make_instance(spec.instance.generator, params, eps)
                                                      : load_instance(spec.instance.path);
    return {std::move(inst), eps, delta};
}

inline RunDetail run_algorithm(const std::string& name, Environment& env, double eps, double delta, const ConstantsLedger& k,
                               const AlgorithmOptions& opt) {
    if (name == "beside") return beside(env, eps, delta, k, opt);
    if (name == "beside-elim") return beside_elim(env, eps, delta, opt);
    if (name == "baseline") return baseline(env, eps, delta, opt);
    if (name == "xy-diff-only") return single_design_ablation(env, eps, delta, Ablation::XYDiffOnly, k, opt);
    if (name == "xy-safe-only") return single_design_ablation(env, eps, delta, Ablation::XYSafeOnly, k, opt);
    throw std::invalid_argument("unknown algorithm: " + name);
}

/// Runs every (sweep value, algorithm, trial) cell. Rows come back in that
/// nested order regardless of scheduling; an exception inside a run marks the
/// row failed and keeps the pulls spent so far.
inline std::vector<ExperimentRow> run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    const ConstantsLedger k = constants_from(spec.constants_preset, spec.constants_overrides);
    std::vector<std::optional<double>> values;
    if (spec.sweep)
        for (double v : spec.sweep->values) values.emplace_back(v);
    else
        values.emplace_back(std::nullopt);
    std::vector<SweepPoint> points;
    for (const auto& v : values) points.push_back(resolve_sweep_point(spec, v));

    struct Job {
        std::size_t point;
        std::size_t algo;
        int trial;
    };
    std::vector<Job> jobs;
    for (std::size_t s = 0; s < points.size(); ++s)
        for (std::size_t a = 0; a < spec.algorithms.size(); ++a)
            for (int t = 0; t < spec.n_trials; ++t) jobs.push_back({s, a, t});

    std::vector<ExperimentRow> rows(jobs.size());
    const auto run_job = [&](std::size_t i) {
        const Job& jb = jobs[i];
        const SweepPoint& pt = points[jb.point];
        const std::uint64_t seed = trial_seed(spec.base_seed, jb.point, static_cast<std::uint64_t>(jb.trial));
        ExperimentRow& row = rows[i];
        row.sweep_param = spec.sweep ? spec.sweep->param : "";
        row.sweep_value = values[jb.point].value_or(0.0);
        row.trial = jb.trial;
        const std::string& name = spec.algorithms[jb.algo];
        const auto t0 = std::chrono::steady_clock::now();
        Environment env(pt.instance, seed);
        try {
            RunDetail d = run_algorithm(name, env, pt.eps, pt.delta, k, spec.options);
            row.record = std::move(d.record);
            row.budgets = std::move(d.budgets);
        } catch (const std::exception& e) {
            RunRecord& r = row.record;
            r.algorithm = name;
            r.failed = true;
            r.error = e.what();
            r.total_pulls = env.total_pulls();
            r.pulls_phase_safety = env.safety_pulls();
            r.pulls_phase_optimality = env.optimality_pulls();
            r.eps = pt.eps;
            r.delta = pt.delta;
            r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            row.budgets = env.budgets();
        }
        row.record.seed = seed;
    };

    unsigned n_threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
    n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, jobs.size()));
    if (n_threads <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) run_job(i);
        return rows;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < n_threads; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < jobs.size(); i = next++) run_job(i);
        });
    for (auto& th : pool) th.join();
    return rows;
}

// ---------------------------------------------------------------------------
// Output

inline std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline const char* csv_header() {
    return "algorithm,sweep_param,sweep_value,trial,seed,returned_arm,total_pulls,pulls_safety,pulls_optimality,"
           "is_eps_good,is_eps_safe,wall_ms";
}

/// One CSV line; failed runs leave returned_arm empty. With include_wall
/// false the wall_ms field is written empty, which makes the output a pure
/// function of the spec.
inline std::string csv_row(const ExperimentRow& row, bool include_wall = true) {
    const RunRecord& r = row.record;
    std::ostringstream os;
    os << r.algorithm << ',' << row.sweep_param << ',' << (row.sweep_param.empty() ? "" : format_number(row.sweep_value)) << ','
       << row.trial << ',' << r.seed << ',';
    if (!r.failed) os << r.returned_arm;
    os << ',' << r.total_pulls << ',' << r.pulls_phase_safety << ',' << r.pulls_phase_optimality << ','
       << (!r.failed && r.is_eps_good ? 1 : 0) << ',' << (!r.failed && r.is_eps_safe ? 1 : 0) << ',';
    if (include_wall) os << format_number(std::round(r.wall_ms * 1000.0) / 1000.0);
    return os.str();
}

inline void write_csv(const std::vector<ExperimentRow>& rows, std::ostream& os, bool include_wall = true) {
    os << csv_header() << '\n';
    for (const auto& r : rows) os << csv_row(r, include_wall) << '\n';
}

inline void write_csv(const std::vector<ExperimentRow>& rows, const std::string& path, bool include_wall = true) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    write_csv(rows, f, include_wall);
}

/// FNV-1a over the CSV with wall_ms blanked.
inline std::uint64_t csv_determinism_hash(const std::vector<ExperimentRow>& rows) {
    std::ostringstream os;
    write_csv(rows, os, false);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : os.str()) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

struct SummaryRow {
    std::string algorithm;
    std::string sweep_param;
    double sweep_value = 0.0;
    std::size_t n = 0;
    std::size_t failed = 0;
    double mean_pulls = 0.0;
    double median_pulls = 0.0;
    double std_pulls = 0.0;
    double error_rate = 0.0;  // 1 - fraction eps-good, failures count as errors
    double mean_wall_ms = 0.0;
    std::optional<double> ratio_to_beside;  // mean pulls / mean pulls of beside at the same sweep value
};

/// Per (algorithm, sweep value) statistics in first-appearance order.
inline std::vector<SummaryRow> summarize(const std::vector<ExperimentRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("summarize: no records");
    std::vector<SummaryRow> out;
    std::vector<std::vector<double>> pulls;
    std::vector<std::size_t> good;
    const auto find = [&](const ExperimentRow& r) -> std::size_t {
        for (std::size_t i = 0; i < out.size(); ++i)
            if (out[i].algorithm == r.record.algorithm && out[i].sweep_param == r.sweep_param && out[i].sweep_value == r.sweep_value)
                return i;
        SummaryRow row;
        row.algorithm = r.record.algorithm;
        row.sweep_param = r.sweep_param;
        row.sweep_value = r.sweep_value;
        out.push_back(std::move(row));
        pulls.emplace_back();
        good.push_back(0);
        return out.size() - 1;
    };
    for (const auto& r : rows) {
        const std::size_t i = find(r);
        SummaryRow& s = out[i];
        ++s.n;
        if (r.record.failed) ++s.failed;
        if (!r.record.failed && r.record.is_eps_good) ++good[i];
        pulls[i].push_back(static_cast<double>(r.record.total_pulls));
        s.mean_wall_ms += r.record.wall_ms;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        SummaryRow& s = out[i];
        auto& p = pulls[i];
        const double n = static_cast<double>(s.n);
        double sum = 0.0;
        for (double v : p) sum += v;
        s.mean_pulls = sum / n;
        double ss = 0.0;
        for (double v : p) ss += (v - s.mean_pulls) * (v - s.mean_pulls);
        s.std_pulls = s.n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        std::sort(p.begin(), p.end());
        s.median_pulls = s.n % 2 ? p[s.n / 2] : 0.5 * (p[s.n / 2 - 1] + p[s.n / 2]);
        s.error_rate = 1.0 - static_cast<double>(good[i]) / n;
        s.mean_wall_ms /= n;
    }
    for (auto& s : out)
        for (const auto& b : out)
            if (b.algorithm == "beside" && b.sweep_param == s.sweep_param && b.sweep_value == s.sweep_value && b.mean_pulls > 0.0)
                s.ratio_to_beside = s.mean_pulls / b.mean_pulls;
    return out;
}

inline void write_summary(const std::vector<SummaryRow>& rows, std::ostream& os) {
    os << "algorithm,sweep_param,sweep_value,n,failed,mean_pulls,median_pulls,std_pulls,error_rate,mean_wall_ms,ratio_to_beside\n";
    for (const auto& s : rows) {
        os << s.algorithm << ',' << s.sweep_param << ',' << (s.sweep_param.empty() ? "" : format_number(s.sweep_value)) << ','
           << s.n << ',' << s.failed << ',' << format_number(s.mean_pulls) << ',' << format_number(s.median_pulls) << ','
           << format_number(s.std_pulls) << ',' << format_number(s.error_rate) << ',' << format_number(s.mean_wall_ms) << ',';
        if (s.ratio_to_beside) os << format_number(*s.ratio_to_beside);
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// Config files

/// Reads a spec from JSON. Keys: instance {generator, params} | {file},
/// algorithms, eps, delta, n_trials, base_seed, sweep {param, values},
/// output, constants (preset name or {preset, overrides}), fw_iters, eta,
/// threads.
inline ExperimentSpec spec_from_json(const nlohmann::json& j) {
    ExperimentSpec s;
    if (!j.contains("instance")) throw std::invalid_argument("config: missing 'instance'");
    const auto& ij = j.at("instance");
    if (ij.contains("file")) s.instance.path = ij.at("file").get<std::string>();
    if (ij.contains("generator")) s.instance.generator = ij.at("generator").get<std::string>();
    if (ij.contains("params")) s.instance.params = ij.at("params");
    if (j.contains("algorithms")) s.algorithms = j.at("algorithms").get<std::vector<std::string>>();
    if (j.contains("algorithm")) s.algorithms = {j.at("algorithm").get<std::string>()};
    s.eps = j.value("eps", s.eps);
    s.delta = j.value("delta", s.delta);
    s.n_trials = j.value("n_trials", s.n_trials);
    s.base_seed = j.value("base_seed", s.base_seed);
    s.output_path = j.value("output", s.output_path);
    if (j.contains("sweep")) {
        const auto& sw = j.at("sweep");
        s.sweep = SweepSpec{sw.at("param").get<std::string>(), sw.at("values").get<std::vector<double>>()};
    }
    if (j.contains("constants")) {
        const auto& c = j.at("constants");
        if (c.is_string()) {
            s.constants_preset = c.get<std::string>();
        } else {
            s.constants_preset = c.value("preset", s.constants_preset);
            if (c.contains("overrides")) s.constants_overrides = c.at("overrides");
        }
    }
    s.options.design.allocation.fw_iters = j.value("fw_iters", s.options.design.allocation.fw_iters);
    s.options.design.allocation.eta = j.value("eta", s.options.design.allocation.eta);
    s.threads = j.value("threads", s.threads);
    s.validate();
    return s;
}

inline ExperimentSpec load_spec(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read config " + path);
    return spec_from_json(nlohmann::json::parse(f));
}

}  // namespace safebai
