#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "msde/core/error.hpp"
#include "msde/core/rng.hpp"
#include "msde/engine/catalog.hpp"
#include "msde/finance/catalog.hpp"
#include "msde/finance/option.hpp"
#include "msde/lab/functionals.hpp"

namespace msde::cli {

/// All violated fields of a config, reported together.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : Error(ErrorCode::InvalidArgument, join(problems)), problems_(std::move(problems)) {}

    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    static std::string join(const std::vector<std::string>& p) {
        std::string s = "invalid config:";
        for (const auto& e : p) s += "\n  " + e;
        return s;
    }
    std::vector<std::string> problems_;
};

inline constexpr const char* default_out_dir = "msde-out";

struct ExperimentConfig {
    std::string model = "ref-ou";
    catalog::Params params;
    std::vector<double> epsilons{0.2, 0.05, 0.0125};

    double T = 1.0;
    double h = 1e-3;
    double nu = 20.0;

    std::size_t n_paths = 20000;
    std::uint64_t seed = 1;
    unsigned workers = 1;

    /// NaN burn-in / horizon resolve to 10/beta and 200/beta.
    double burn_in = std::numeric_limits<double>::quiet_NaN();
    double horizon = std::numeric_limits<double>::quiet_NaN();
    double ergodic_step = 1e-3;
    std::size_t batches = 64;
    std::vector<double> t_nodes{0.0};
    /// One axis per slow component; for lsv-tanh the single axis holds prices.
    std::vector<std::vector<double>> x_nodes;

    double frozen_t = 0.0;
    std::vector<double> frozen_x;
    std::vector<double> y_init;

    std::vector<std::string> functionals{"cos"};
    std::vector<double> ks_times;
    std::size_t aux_paths = 0;

    std::optional<OptionSpec> option;

    /// Path-count multiplier applied to the acceptance sizes by `verify`.
    double verify_scale = 0.1;

    std::string out_dir = default_out_dir;
    bool timing = false;
};

inline unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

inline std::string env_out_dir() {
    const char* v = std::getenv("MSDE_OUT_DIR");
    return (v && *v) ? v : default_out_dir;
}

/// Finance-catalog names (models that `price` accepts).
inline std::vector<std::string> lsv_names() { return {"lsv-tanh"}; }

namespace detail {

class Reader {
public:
    std::vector<std::string> errors;

    void keys(const YAML::Node& n, const std::string& where, const std::set<std::string>& allowed) {
        if (!n) return;
        if (!n.IsMap()) {
            errors.push_back(where + ": expected a mapping");
            return;
        }
        for (const auto& kv : n) {
            const auto key = kv.first.as<std::string>();
            if (!allowed.count(key)) {
                std::string list;
                for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
                errors.push_back(join(where, key) + ": unknown key (allowed: " + list + ")");
            }
        }
    }

    template <class T>
    void get(const YAML::Node& parent, const std::string& where, const char* key, T& out) {
        if (!parent || !parent.IsMap()) return;
        const YAML::Node n = parent[key];
        // Null leaves `out` untouched, so NaN defaults survive an explicit `~`.
        if (!n || n.IsNull()) return;
        try {
            out = n.as<T>();
        } catch (const YAML::Exception&) {
            errors.push_back(join(where, key) + ": cannot read value '" + scalar_text(n) + "'");
        }
    }

    static std::string join(const std::string& where, const std::string& key) {
        return where.empty() ? key : where + "." + key;
    }

private:
    static std::string scalar_text(const YAML::Node& n) {
        if (n.IsScalar()) return n.Scalar();
        std::stringstream ss;
        ss << YAML::Flow << n;
        return ss.str();
    }
};

inline void check_sorted(const std::vector<double>& v, const std::string& field, std::vector<std::string>& errors) {
    if (v.empty()) errors.push_back(field + ": must not be empty");
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (!(v[i] > v[i - 1])) {
            errors.push_back(field + ": must be strictly increasing");
            return;
        }
    }
}

inline std::string catalog_list(const std::vector<std::string>& names) {
    std::string s;
    for (const auto& n : names) s += (s.empty() ? "" : ", ") + n;
    return s;
}

} // namespace detail

/// Slow dimension and initial slow state of the configured model; empty if it cannot be built.
inline std::optional<std::vector<double>> model_x0(const ExperimentConfig& c) {
    try {
        return catalog::system_by_name(c.model, c.params).x0;
    } catch (const Error&) {
        return std::nullopt;
    }
}

/// Parses YAML text into a fully defaulted config. Every violated field is collected and
/// thrown as one ConfigError.
inline ExperimentConfig validate_config(const std::string& text) {
    ExperimentConfig c;
    c.out_dir = env_out_dir();
    c.workers = default_workers();
    detail::Reader rd;
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError({std::string("config is not well-formed: ") + e.what()});
    }
    if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    if (!root.IsMap()) throw ConfigError({"config: top level must be a mapping"});
    rd.keys(root, "",
            {"model", "epsilons", "grid", "mc", "ergodic", "frozen", "converge", "option", "verify", "output"});

    const YAML::Node model = root["model"];
    rd.keys(model, "model", {"name", "params"});
    rd.get(model, "model", "name", c.model);
    rd.get(model, "model", "params", c.params);
    rd.get(root, "", "epsilons", c.epsilons);

    const YAML::Node grid = root["grid"];
    rd.keys(grid, "grid", {"T", "h", "nu"});
    rd.get(grid, "grid", "T", c.T);
    rd.get(grid, "grid", "h", c.h);
    rd.get(grid, "grid", "nu", c.nu);

    const YAML::Node mc = root["mc"];
    rd.keys(mc, "mc", {"n_paths", "seed", "workers"});
    long long n_paths = static_cast<long long>(c.n_paths);
    rd.get(mc, "mc", "n_paths", n_paths);
    rd.get(mc, "mc", "seed", c.seed);
    long long workers = c.workers;
    rd.get(mc, "mc", "workers", workers);

    const YAML::Node erg = root["ergodic"];
    rd.keys(erg, "ergodic", {"burn_in", "horizon", "step", "batches", "t_nodes", "x_nodes"});
    rd.get(erg, "ergodic", "burn_in", c.burn_in);
    rd.get(erg, "ergodic", "horizon", c.horizon);
    rd.get(erg, "ergodic", "step", c.ergodic_step);
    rd.get(erg, "ergodic", "batches", c.batches);
    rd.get(erg, "ergodic", "t_nodes", c.t_nodes);
    if (erg && erg.IsMap() && erg["x_nodes"] && !erg["x_nodes"].IsNull()) {
        const YAML::Node xn = erg["x_nodes"];
        if (xn.IsSequence() && xn.size() > 0 && xn[0].IsSequence()) {
            rd.get(erg, "ergodic", "x_nodes", c.x_nodes);
        } else {
            std::vector<double> axis;
            rd.get(erg, "ergodic", "x_nodes", axis);
            c.x_nodes = {axis};
        }
    }

    const YAML::Node fr = root["frozen"];
    rd.keys(fr, "frozen", {"t", "x", "y_init"});
    rd.get(fr, "frozen", "t", c.frozen_t);
    rd.get(fr, "frozen", "x", c.frozen_x);
    rd.get(fr, "frozen", "y_init", c.y_init);

    const YAML::Node cv = root["converge"];
    rd.keys(cv, "converge", {"functionals", "ks_times", "aux_paths"});
    rd.get(cv, "converge", "functionals", c.functionals);
    rd.get(cv, "converge", "ks_times", c.ks_times);
    long long aux = 0;
    rd.get(cv, "converge", "aux_paths", aux);

    const YAML::Node op = root["option"];
    rd.keys(op, "option", {"kind", "payoff", "strike", "cap", "maturity", "tau", "delta", "weight"});
    if (op && op.IsMap()) {
        OptionSpec s;
        s.maturity = c.T;
        rd.get(op, "option", "kind", s.kind);
        rd.get(op, "option", "payoff", s.payoff);
        rd.get(op, "option", "strike", s.strike);
        double cap = std::numeric_limits<double>::quiet_NaN();
        rd.get(op, "option", "cap", cap);
        if (!std::isnan(cap)) s.cap = cap;
        rd.get(op, "option", "maturity", s.maturity);
        rd.get(op, "option", "tau", s.tau);
        rd.get(op, "option", "delta", s.delta);
        rd.get(op, "option", "weight", s.weight);
        c.option = s;
    }

    const YAML::Node vf = root["verify"];
    rd.keys(vf, "verify", {"scale"});
    rd.get(vf, "verify", "scale", c.verify_scale);

    const YAML::Node out = root["output"];
    rd.keys(out, "output", {"dir", "timing"});
    rd.get(out, "output", "dir", c.out_dir);
    rd.get(out, "output", "timing", c.timing);

    auto& err = rd.errors;
    // Field invariants.
    {
        auto names = catalog::system_names();
        if (std::find(names.begin(), names.end(), c.model) == names.end()) {
            err.push_back("model.name: unknown model '" + c.model + "' (available: " + detail::catalog_list(names) +
                          ")");
        } else {
            try {
                (void)catalog::system_by_name(c.model, c.params);
            } catch (const Error& e) {
                err.push_back(std::string("model.params: ") + e.what());
            }
        }
    }
    if (c.epsilons.empty()) err.push_back("epsilons: must not be empty");
    for (std::size_t i = 0; i < c.epsilons.size(); ++i) {
        const double e = c.epsilons[i];
        if (!(e > 0.0 && e < 1.0)) {
            err.push_back("epsilons[" + std::to_string(i) + "]: " + std::to_string(e) + " is outside (0, 1)");
        } else if (i > 0 && !(e < c.epsilons[i - 1])) {
            err.push_back("epsilons: must be strictly decreasing");
        }
    }
    if (!(c.T > 0.0)) err.push_back("grid.T: must be positive");
    if (!(c.h > 0.0 && c.h <= c.T)) err.push_back("grid.h: must lie in (0, T]");
    if (!(c.nu > 0.0)) err.push_back("grid.nu: must be positive");
    if (n_paths < 100) err.push_back("mc.n_paths: must be at least 100, got " + std::to_string(n_paths));
    c.n_paths = static_cast<std::size_t>(std::max(n_paths, 0LL));
    if (workers < 0) err.push_back("mc.workers: must be non-negative (0 means machine parallelism)");
    c.workers = workers <= 0 ? default_workers() : static_cast<unsigned>(workers);
    if (!std::isnan(c.burn_in) && !(c.burn_in >= 0.0)) err.push_back("ergodic.burn_in: must be non-negative");
    if (!std::isnan(c.horizon) && !(c.horizon > 0.0)) err.push_back("ergodic.horizon: must be positive");
    if (!(c.ergodic_step > 0.0)) err.push_back("ergodic.step: must be positive");
    if (c.batches < 2) err.push_back("ergodic.batches: must be at least 2");
    detail::check_sorted(c.t_nodes, "ergodic.t_nodes", err);
    if (aux < 0) err.push_back("converge.aux_paths: must be non-negative");
    c.aux_paths = static_cast<std::size_t>(std::max(aux, 0LL));
    if (c.aux_paths > 0 && c.aux_paths < 100) err.push_back("converge.aux_paths: must be 0 or at least 100");
    for (const auto& f : c.functionals) {
        auto names = functionals::names();
        if (std::find(names.begin(), names.end(), f) == names.end()) {
            err.push_back("converge.functionals: unknown functional '" + f +
                          "' (available: " + detail::catalog_list(names) + ")");
        }
    }
    if (c.functionals.empty()) err.push_back("converge.functionals: must not be empty");
    for (double t : c.ks_times) {
        if (!(t >= 0.0 && t <= c.T)) err.push_back("converge.ks_times: times must lie in [0, T]");
    }
    if (!(c.verify_scale > 0.0 && c.verify_scale <= 1.0)) err.push_back("verify.scale: must lie in (0, 1]");
    if (c.out_dir.empty()) err.push_back("output.dir: must not be empty");

    const auto x0 = model_x0(c);
    const auto lsv_list = lsv_names();
    const bool lsv = std::find(lsv_list.begin(), lsv_list.end(), c.model) != lsv_list.end();
    if (x0) {
        const std::size_t d = x0->size();
        if (c.x_nodes.empty()) {
            // One axis of nine nodes around the initial slow state (prices for LSV models).
            for (std::size_t i = 0; i < d; ++i) {
                std::vector<double> axis;
                for (int k = -4; k <= 4; ++k) {
                    axis.push_back(lsv ? std::exp((*x0)[i]) * std::exp(0.25 * k) : (*x0)[i] + k);
                }
                c.x_nodes.push_back(axis);
            }
        }
        if (c.x_nodes.size() != d) {
            err.push_back("ergodic.x_nodes: need one axis per slow component (" + std::to_string(d) + ")");
        }
        for (std::size_t i = 0; i < c.x_nodes.size(); ++i) {
            detail::check_sorted(c.x_nodes[i], "ergodic.x_nodes[" + std::to_string(i) + "]", err);
            if (lsv) {
                for (double s : c.x_nodes[i]) {
                    if (!(s > 0.0)) err.push_back("ergodic.x_nodes: price nodes must be positive for " + c.model);
                }
            }
        }
        if (c.frozen_x.empty()) c.frozen_x = *x0;
        if (c.frozen_x.size() != d) {
            err.push_back("frozen.x: need " + std::to_string(d) + " slow components");
        }
    }
    if (c.option) {
        if (c.option->maturity != c.T) err.push_back("option.maturity: must equal grid.T");
        try {
            c.option->validate();
        } catch (const Error& e) {
            err.push_back(std::string("option: ") + e.what());
        }
    }
    if (!err.empty()) throw ConfigError(err);
    return c;
}

/// Re-checks the fields that command-line overrides can touch.
inline void validate_overrides(const ExperimentConfig& c) {
    std::vector<std::string> err;
    if (c.n_paths < 100) err.push_back("--paths: must be at least 100");
    if (c.workers == 0) err.push_back("--workers: must be positive");
    if (c.out_dir.empty()) err.push_back("--out: must not be empty");
    if (!err.empty()) throw ConfigError(err);
}

/// Canonical YAML of the effective config. Its FNV-1a hash identifies the run.
inline std::string effective_yaml(const ExperimentConfig& c) {
    YAML::Emitter e;
    e.SetDoublePrecision(17);
    auto nan_or = [&](double v) {
        if (std::isnan(v)) {
            e << YAML::Null;
        } else {
            e << v;
        }
    };
    e << YAML::BeginMap;
    e << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "name" << YAML::Value << c.model;
    e << YAML::Key << "params" << YAML::Value << YAML::BeginMap;
    for (const auto& [k, v] : c.params) e << YAML::Key << k << YAML::Value << v;
    e << YAML::EndMap << YAML::EndMap;
    e << YAML::Key << "epsilons" << YAML::Value << YAML::Flow << c.epsilons;
    e << YAML::Key << "grid" << YAML::Value << YAML::BeginMap << YAML::Key << "T" << YAML::Value << c.T << YAML::Key
      << "h" << YAML::Value << c.h << YAML::Key << "nu" << YAML::Value << c.nu << YAML::EndMap;
    e << YAML::Key << "mc" << YAML::Value << YAML::BeginMap << YAML::Key << "n_paths" << YAML::Value << c.n_paths
      << YAML::Key << "seed" << YAML::Value << c.seed << YAML::Key << "workers" << YAML::Value << c.workers
      << YAML::EndMap;
    e << YAML::Key << "ergodic" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "burn_in" << YAML::Value;
    nan_or(c.burn_in);
    e << YAML::Key << "horizon" << YAML::Value;
    nan_or(c.horizon);
    e << YAML::Key << "step" << YAML::Value << c.ergodic_step;
    e << YAML::Key << "batches" << YAML::Value << c.batches;
    e << YAML::Key << "t_nodes" << YAML::Value << YAML::Flow << c.t_nodes;
    e << YAML::Key << "x_nodes" << YAML::Value << YAML::BeginSeq;
    for (const auto& axis : c.x_nodes) e << YAML::Flow << axis;
    e << YAML::EndSeq << YAML::EndMap;
    e << YAML::Key << "frozen" << YAML::Value << YAML::BeginMap << YAML::Key << "t" << YAML::Value << c.frozen_t
      << YAML::Key << "x" << YAML::Value << YAML::Flow << c.frozen_x << YAML::Key << "y_init" << YAML::Value
      << YAML::Flow << c.y_init << YAML::EndMap;
    e << YAML::Key << "converge" << YAML::Value << YAML::BeginMap << YAML::Key << "functionals" << YAML::Value
      << YAML::Flow << c.functionals << YAML::Key << "ks_times" << YAML::Value << YAML::Flow << c.ks_times
      << YAML::Key << "aux_paths" << YAML::Value << c.aux_paths << YAML::EndMap;
    if (c.option) {
        const auto& o = *c.option;
        e << YAML::Key << "option" << YAML::Value << YAML::BeginMap;
        e << YAML::Key << "kind" << YAML::Value << o.kind << YAML::Key << "payoff" << YAML::Value << o.payoff;
        e << YAML::Key << "strike" << YAML::Value << o.strike << YAML::Key << "cap" << YAML::Value << *o.cap;
        e << YAML::Key << "maturity" << YAML::Value << o.maturity << YAML::Key << "tau" << YAML::Value << o.tau;
        e << YAML::Key << "delta" << YAML::Value;
        nan_or(o.delta);
        e << YAML::Key << "weight" << YAML::Value << o.weight << YAML::EndMap;
    }
    e << YAML::Key << "verify" << YAML::Value << YAML::BeginMap << YAML::Key << "scale" << YAML::Value
      << c.verify_scale << YAML::EndMap;
    e << YAML::Key << "output" << YAML::Value << YAML::BeginMap << YAML::Key << "dir" << YAML::Value << c.out_dir
      << YAML::Key << "timing" << YAML::Value << c.timing << YAML::EndMap;
    e << YAML::EndMap;
    return std::string(e.c_str()) + "\n";
}

inline std::uint64_t config_hash(const ExperimentConfig& c) { return msde::detail::fnv1a(effective_yaml(c)); }

} // namespace msde::cli
