#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "msde/cli/checks.hpp"
#include "msde/cli/config.hpp"

#ifndef MSDE_VERSION
#define MSDE_VERSION "unknown"
#endif

namespace msde::cli {

enum ExitCode : int { exit_ok = 0, exit_check_failure = 1, exit_config_error = 2, exit_numerical_failure = 3 };

struct CheckOutcome {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct RunResult {
    int exit_code = exit_ok;
    std::vector<CheckOutcome> checks;
    std::vector<std::string> failures;
    /// Artifact file names relative to the output directory.
    std::vector<std::string> outputs;
};

inline std::vector<std::string> subcommands() { return {"frozen", "average", "converge", "price", "verify"}; }

namespace detail {

namespace fs = std::filesystem;
using msde::detail::fmt_double;

class Artifacts {
public:
    Artifacts(const ExperimentConfig& cfg, RunResult& result) : dir_(cfg.out_dir), result_(result) {
        fs::create_directories(dir_);
    }

    /// Writes `text` to `name` in the output directory and records it.
    void write(const std::string& name, const std::string& text) {
        std::ofstream f(dir_ / name, std::ios::binary);
        require(static_cast<bool>(f), "cannot open " + (dir_ / name).string() + " for writing");
        f << text;
        result_.outputs.push_back(name);
    }

    fs::path path(const std::string& name) const { return dir_ / name; }

private:
    fs::path dir_;
    RunResult& result_;
};

inline void add_check(RunResult& r, std::string name, bool passed, std::string detail) {
    r.checks.push_back({std::move(name), passed, std::move(detail)});
}

inline bool is_lsv(const ExperimentConfig& c) {
    const auto names = lsv_names();
    return std::find(names.begin(), names.end(), c.model) != names.end();
}

inline SlowFastSystem configured_system(const ExperimentConfig& c) {
    auto sys = catalog::system_by_name(c.model, c.params);
    sys.horizon = c.T;
    return sys;
}

inline SimulationOptions sim_options(const ExperimentConfig& c) {
    SimulationOptions s;
    s.nu = c.nu;
    s.workers = c.workers;
    return s;
}

inline ErgodicParams ergodic_params(const ExperimentConfig& c) {
    ErgodicParams p;
    p.burn_in = c.burn_in;
    p.horizon = c.horizon;
    p.step = c.ergodic_step;
    p.batches = c.batches;
    return p;
}

inline TabulateParams tabulate_params(const ExperimentConfig& c) {
    TabulateParams t;
    t.ergodic = ergodic_params(c);
    t.seed = StreamFamily(c.seed).derive("tabulate-config").master_seed();
    t.workers = c.workers;
    t.y_init = c.y_init;
    return t;
}

/// Node axes in the system's own coordinates: LSV price nodes become log prices.
inline std::vector<std::vector<double>> system_axes(const ExperimentConfig& c) {
    if (!is_lsv(c)) return c.x_nodes;
    auto axes = c.x_nodes;
    for (auto& a : axes) {
        for (double& s : a) s = std::log(s);
    }
    return axes;
}

inline std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return out + "\"";
}

/// Progress line on stderr.
inline void progress(const std::string& sub, const std::string& msg) { std::cerr << "[" << sub << "] " << msg << '\n'; }

inline void run_frozen(const ExperimentConfig& c, Artifacts& out, RunResult& r) {
    const auto sys = configured_system(c);
    const auto eq = FrozenEquation::of(sys, c.frozen_t, c.frozen_x);
    const std::vector<double> y0 = c.y_init.empty() ? sys.y0 : c.y_init;
    RngStream rng = StreamFamily(c.seed).derive("frozen").stream(0);
    const auto est = estimate_invariant(eq, y0, ergodic_params(c), rng);
    const std::size_t l = est.mean.size();

    std::ostringstream csv;
    csv << "component,mean,mean_se,variance";
    for (double q : est.quantile_levels) csv << ",q" << fmt_double(q);
    csv << ",effective_sample_size,n_samples,burn_in,horizon\n";
    for (std::size_t a = 0; a < l; ++a) {
        csv << a + 1 << ',' << fmt_double(est.mean[a]) << ',' << fmt_double(est.mean_se[a]) << ','
            << fmt_double(est.covariance[a * l + a]);
        for (double q : est.quantiles[a]) csv << ',' << fmt_double(q);
        csv << ',' << fmt_double(est.effective_sample_size) << ',' << est.n_samples << ',' << fmt_double(est.burn_in)
            << ',' << fmt_double(est.horizon) << '\n';
    }
    out.write("frozen.csv", csv.str());

    std::ostringstream decay;
    decay << "lag,autocorrelation\n";
    for (const auto& p : est.decay) decay << fmt_double(p.lag) << ',' << fmt_double(p.autocorrelation) << '\n';
    out.write("frozen_decay.csv", decay.str());

    add_check(r, "stationary", !est.nonstationary,
              est.nonstationary ? "first- and second-half means differ by more than 5 batch SEs" : "");
    add_check(r, "effective-sample-size", est.effective_sample_size > 0.0 && est.effective_sample_size <= est.n_samples,
              "ESS " + fmt_double(est.effective_sample_size) + " of " + std::to_string(est.n_samples));
}

inline AveragedModel tabulate_model(const ExperimentConfig& c) {
    if (is_lsv(c)) {
        const auto setup = catalog::lsv_tanh(c.params);
        return averaged_local_vol(setup.model, setup.measure, c.t_nodes, c.x_nodes[0], tabulate_params(c));
    }
    return tabulate_averaged_model(configured_system(c), c.t_nodes, c.x_nodes, tabulate_params(c));
}

inline void check_nodes(const AveragedModel& m, RunResult& r) {
    std::size_t bad = 0;
    for (std::size_t i = 0; i < m.n_nodes(); ++i) bad += m.node(i).nonstationary ? 1 : 0;
    add_check(r, "stationary-nodes", bad == 0,
              std::to_string(bad) + " of " + std::to_string(m.n_nodes()) + " nodes flagged non-stationary");
}

inline void run_average(const ExperimentConfig& c, Artifacts& out, RunResult& r) {
    progress("average", "tabulating " + c.model);
    const auto model = tabulate_model(c);
    std::ostringstream csv;
    model.write_table(csv);
    out.write("averaged_model.csv", csv.str());
    check_nodes(model, r);
}

/// Gaps non-increasing within one combined SE of neighbouring cells.
inline bool monotone_gaps(const std::vector<MonteCarloEstimate>& cells, double target, std::string& detail) {
    bool ok = true;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const double g = std::abs(cells[i].mean - target);
        detail += (i ? " " : "") + fmt_double(g);
        if (i > 0 && g > std::abs(cells[i - 1].mean - target) + combined_se(cells[i], cells[i - 1])) ok = false;
    }
    return ok;
}

inline void run_converge(const ExperimentConfig& c, Artifacts& out, RunResult& r) {
    const auto sys = configured_system(c);
    progress("converge", "tabulating the averaged model of " + c.model);
    TabulateParams tp = tabulate_params(c);
    const auto model = tabulate_averaged_model(sys, c.t_nodes, system_axes(c), tp);
    check_nodes(model, r);

    std::vector<Functional> fs;
    for (const auto& name : c.functionals) fs.push_back(functionals::by_name(name, c.T));
    ConvergenceOptions co;
    co.step = c.h;
    co.seed = c.seed;
    co.sim = sim_options(c);
    progress("converge", "sweeping " + std::to_string(c.epsilons.size()) + " epsilon cells with " +
                             std::to_string(c.n_paths) + " paths each");
    auto rep = weak_convergence_report(sys, model, c.epsilons, fs, c.n_paths, c.ks_times, co);
    if (c.aux_paths > 0) {
        progress("converge", "auxiliary gaps with " + std::to_string(c.aux_paths) + " paths");
        rep.aux_gaps = auxiliary_gap_sweep(sys, c.epsilons, c.aux_paths, co);
    }

    std::ostringstream csv;
    rep.write_csv(csv, c.timing);
    out.write("converge.csv", csv.str());
    std::ostringstream ks;
    ks << "epsilon,time,ks_stat,critical_1pct\n";
    for (const auto& k : rep.ks) {
        ks << fmt_double(k.epsilon) << ',' << fmt_double(k.time) << ',' << fmt_double(k.statistic) << ','
           << fmt_double(k.critical_1pct) << '\n';
    }
    out.write("converge_ks.csv", ks.str());
    std::ostringstream fm;
    fm << "epsilon,max_second_moment,std_error,time\n";
    for (const auto& m : rep.fast_moments) {
        fm << fmt_double(m.epsilon) << ',' << fmt_double(m.max_second_moment.mean) << ','
           << fmt_double(m.max_second_moment.std_error) << ',' << fmt_double(m.time) << '\n';
    }
    out.write("converge_fast_moment.csv", fm.str());
    if (c.aux_paths > 0) {
        std::ostringstream aux;
        rep.write_aux_csv(aux, c.timing);
        out.write("converge_aux.csv", aux.str());
        bool dec = true;
        std::string detail;
        for (std::size_t i = 0; i < rep.aux_gaps.size(); ++i) {
            detail += (i ? " " : "") + fmt_double(rep.aux_gaps[i].gap.mean);
            if (i > 0 && !(rep.aux_gaps[i].gap.mean < rep.aux_gaps[i - 1].gap.mean)) dec = false;
        }
        add_check(r, "aux-gap-decreasing", dec, detail);
    }
    for (const auto& f : fs) {
        std::vector<MonteCarloEstimate> cells;
        for (double e : c.epsilons) cells.push_back(rep.cell(e, f.name).estimate);
        std::string detail;
        const bool ok = monotone_gaps(cells, rep.limit_cell(f.name).estimate.mean, detail);
        add_check(r, "gap-monotone:" + f.name, ok, "gaps " + detail);
    }
}

inline void run_price(const ExperimentConfig& c, Artifacts& out, RunResult& r) {
    if (!is_lsv(c)) {
        throw ConfigError({"model.name: price needs a local stochastic volatility model (available: " +
                           catalog_list(lsv_names()) + ")"});
    }
    if (!c.option) throw ConfigError({"option: price needs an option section"});
    auto setup = catalog::lsv_tanh(c.params);
    setup.model.horizon = c.T;
    PriceExperimentOptions po;
    po.step = c.h;
    po.seed = c.seed;
    po.sim = sim_options(c);
    po.limit_params = tabulate_params(c);
    po.t_nodes = c.t_nodes;
    po.s_nodes = c.x_nodes[0];
    progress("price", "pricing over " + std::to_string(c.epsilons.size()) + " epsilon cells with " +
                          std::to_string(c.n_paths) + " paths each");
    const auto table = price_convergence_experiment(setup.model, setup.measure, *c.option, c.epsilons, c.n_paths, po);
    std::ostringstream csv;
    table.write_csv(csv, c.timing);
    out.write("price.csv", csv.str());

    std::vector<MonteCarloEstimate> cells;
    for (const auto& row : table.rows) cells.push_back(row.price);
    std::string detail;
    add_check(r, "gap-monotone", monotone_gaps(cells, table.limit.price.mean, detail), "gaps " + detail);
    const auto& last = table.rows.back();
    const double tol = std::max(0.005 * setup.model.s0, 3.0 * last.gap_se);
    add_check(r, "final-gap", last.gap_vs_limit <= tol,
              "gap " + fmt_double(last.gap_vs_limit) + " vs tolerance " + fmt_double(tol));
}

} // namespace detail

inline RunResult run_experiment(const ExperimentConfig& cfg, const std::string& subcommand);

/// 11. `converge` and `price` CSVs byte-identical across worker counts for a fixed seed.
inline checks::CheckResult reproducibility(const ExperimentConfig& base, std::size_t n_paths = 2000) {
    namespace fs = std::filesystem;
    const auto start = std::chrono::steady_clock::now();
    checks::CheckResult res;
    res.id = 11;
    res.name = "reproducibility";
    const fs::path root = fs::path(base.out_dir) / "reproducibility";
    bool ok = true;
    auto read = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(f), {});
    };
    struct Case {
        std::string sub, model, file;
    };
    for (const Case& k : {Case{"converge", "ref-ou", "converge.csv"}, Case{"price", "lsv-tanh", "price.csv"}}) {
        std::vector<std::string> texts;
        for (unsigned w : {1u, 3u}) {
            ExperimentConfig c;
            c.model = k.model;
            c.seed = base.seed;
            c.epsilons = base.epsilons;
            c.T = 1.0;
            c.h = base.h;
            c.n_paths = n_paths;
            c.workers = w;
            c.horizon = 200.0;
            c.functionals = {"cos", "sup-tanh"};
            c.aux_paths = 0;
            if (k.model == "lsv-tanh") {
                c.x_nodes = {{0.5, 1.0, 2.0}};
                c.option = checks::capped_call(c.T);
            } else {
                c.x_nodes = {{-4, -3, -2, -1, 0, 1, 2, 3, 4}};
            }
            c.out_dir = (root / (k.sub + "-w" + std::to_string(w))).string();
            const auto run = run_experiment(c, k.sub);
            if (run.exit_code == exit_config_error || run.exit_code == exit_numerical_failure) {
                ok = false;
                res.detail += k.sub + " failed to run; ";
            }
            texts.push_back(read(fs::path(c.out_dir) / k.file));
        }
        const bool same = !texts[0].empty() && texts[0] == texts[1];
        ok = ok && same;
        res.detail += k.sub + (same ? " identical" : " differs") + " (" + std::to_string(texts[0].size()) +
                      " bytes, workers 1 vs 3); ";
    }
    res.passed = ok;
    res.wall_ms = msde::detail::elapsed_ms(start);
    return res;
}

/// Suite sizes for `verify`: acceptance sizes scaled by `verify.scale`.
inline checks::SuiteOptions suite_options(const ExperimentConfig& c) {
    checks::SuiteOptions o;
    o.seed = c.seed;
    o.workers = c.workers;
    o.step = c.h;
    o.epsilons = c.epsilons;
    auto scale = [&](std::size_t n) { return std::max<std::size_t>(100, static_cast<std::size_t>(n * c.verify_scale)); };
    o.weak_paths = scale(o.weak_paths);
    o.aux_paths = scale(o.aux_paths);
    o.girsanov_paths = scale(o.girsanov_paths);
    o.price_paths = scale(o.price_paths);
    o.oracle_paths = scale(o.oracle_paths);
    return o;
}

namespace detail {

inline void run_verify(const ExperimentConfig& c, Artifacts& out, RunResult& r) {
    const auto o = suite_options(c);
    std::vector<checks::CheckResult> results;
    auto record = [&](checks::CheckResult res) {
        progress("verify", std::string(res.passed ? "PASS " : "FAIL ") + std::to_string(res.id) + " " + res.name);
        results.push_back(std::move(res));
    };
    record(checks::frozen_ergodics(o));
    record(checks::contraction(o));
    record(checks::coefficient_recovery(o));
    record(checks::psd_suite(o));
    const auto start = std::chrono::steady_clock::now();
    const auto rep = checks::weak_convergence_run(o);
    record(checks::weak_convergence(o, rep, msde::detail::elapsed_ms(start)));
    record(checks::auxiliary_gap(o));
    record(checks::fast_moment_bound(rep));
    record(checks::girsanov(o));
    record(checks::price_convergence(o));
    record(checks::mollifier(o));
    record(reproducibility(c));

    std::ostringstream csv;
    csv << "id,name,passed,wall_ms,detail\n";
    for (const auto& res : results) {
        csv << res.id << ',' << res.name << ',' << (res.passed ? 1 : 0) << ','
            << fmt_double(c.timing ? res.wall_ms : 0.0) << ',' << csv_quote(res.detail) << '\n';
        add_check(r, std::to_string(res.id) + ":" + res.name, res.passed, res.detail);
    }
    out.write("verify.csv", csv.str());
}

inline nlohmann::json manifest(const ExperimentConfig& c, const std::string& sub, const RunResult& r, double wall_ms) {
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(c)));
    nlohmann::json j;
    j["subcommand"] = sub;
    j["seed"] = c.seed;
    j["config_hash"] = hash;
    j["versions"] = {{"msde", MSDE_VERSION},
                     {"compiler", __VERSION__},
                     {"yaml_cpp", "system"},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)}};
    j["workers"] = c.workers;
    j["wall_time_ms"] = wall_ms;
    j["exit_code"] = r.exit_code;
    j["checks"] = nlohmann::json::array();
    for (const auto& ch : r.checks) j["checks"].push_back({{"name", ch.name}, {"passed", ch.passed}, {"detail", ch.detail}});
    j["failures"] = r.failures;
    j["outputs"] = r.outputs;
    return j;
}

} // namespace detail

/// Runs one subcommand, writes its CSVs, the effective config and `<subcommand>_manifest.json`
/// into `cfg.out_dir`, and returns the exit status.
inline RunResult run_experiment(const ExperimentConfig& cfg, const std::string& subcommand) {
    const auto start = std::chrono::steady_clock::now();
    RunResult r;
    std::optional<detail::Artifacts> out;
    try {
        validate_overrides(cfg);
        const auto subs = subcommands();
        if (std::find(subs.begin(), subs.end(), subcommand) == subs.end()) {
            throw ConfigError({"unknown subcommand '" + subcommand + "' (available: " + detail::catalog_list(subs) + ")"});
        }
        out.emplace(cfg, r);
        out->write("effective_config.yaml", effective_yaml(cfg));
        if (subcommand == "frozen") detail::run_frozen(cfg, *out, r);
        if (subcommand == "average") detail::run_average(cfg, *out, r);
        if (subcommand == "converge") detail::run_converge(cfg, *out, r);
        if (subcommand == "price") detail::run_price(cfg, *out, r);
        if (subcommand == "verify") detail::run_verify(cfg, *out, r);
        for (const auto& ch : r.checks) {
            if (!ch.passed) r.failures.push_back("check " + ch.name + " failed: " + ch.detail);
        }
        r.exit_code = r.failures.empty() ? exit_ok : exit_check_failure;
    } catch (const ConfigError& e) {
        r.exit_code = exit_config_error;
        r.failures = e.problems();
    } catch (const Error& e) {
        r.exit_code = e.numerical() ? exit_numerical_failure : exit_config_error;
        r.failures.push_back(e.what());
    } catch (const std::exception& e) {
        r.exit_code = exit_numerical_failure;
        r.failures.push_back(e.what());
    }
    if (out) {
        try {
            std::ofstream f(out->path(subcommand + "_manifest.json"));
            f << detail::manifest(cfg, subcommand, r, msde::detail::elapsed_ms(start)).dump(2) << '\n';
        } catch (const std::exception& e) {
            r.failures.push_back(std::string("cannot write manifest: ") + e.what());
        }
    }
    return r;
}

} // namespace msde::cli
