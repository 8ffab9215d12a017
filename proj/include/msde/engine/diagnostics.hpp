#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "msde/core/path_bundle.hpp"
#include "msde/core/rng.hpp"
#include "msde/core/statistics.hpp"
#include "msde/engine/coefficient.hpp"

namespace msde {

struct DiagnosticCheck {
    std::string name;
    double statistic = 0.0;
    std::optional<double> threshold;
    bool passed = true;
    std::size_t n_samples = 0;
};

struct DiagnosticsReport {
    std::vector<DiagnosticCheck> checks;

    bool passed() const noexcept {
        for (const auto& c : checks) {
            if (!c.passed) return false;
        }
        return true;
    }

    const DiagnosticCheck& find(const std::string& name) const {
        for (const auto& c : checks) {
            if (c.name == name) return c;
        }
        throw Error(ErrorCode::InvalidArgument, "no diagnostic named " + name);
    }

    bool has(const std::string& name) const noexcept {
        for (const auto& c : checks) {
            if (c.name == name) return true;
        }
        return false;
    }
};

/// Slow components of a bundle: labels X, X1, X2, ...
inline std::vector<std::size_t> slow_components(const PathBundle& bundle) {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < bundle.dim(); ++c) {
        const auto& s = bundle.labels()[c];
        if (s == "X" || (s.size() > 1 && s[0] == 'X' && std::isdigit(static_cast<unsigned char>(s[1])))) {
            out.push_back(c);
        }
    }
    return out;
}

/// Empirical moment bounds on the slow paths:
///  - "sup_moment": E sup_t |X_t|^p,
///  - "increment_moment@<lag>": E |X_{t+lag} - X_t|^p on dyadic lags h, 2h, 4h, ... <= T/8,
///  - "increment_slope": slope of log increment moment vs log lag, flagged below 0.8 p/2.
/// If every increment vanishes the slope is undefined and "increments_vanish" is reported instead.
inline DiagnosticsReport check_moment_bounds(const PathBundle& bundle, double p,
                                             std::vector<std::size_t> components = {}) {
    require(p >= 2.0, "moment order p must be at least 2");
    if (components.empty()) components = slow_components(bundle);
    require(!components.empty(), "bundle has no slow components");
    const auto& grid = bundle.grid();
    const std::size_t n_paths = bundle.n_paths();
    require(n_paths >= 2 && grid.n_steps() >= 1, "moment checks need at least 2 paths and one step");

    auto norm_p = [&](std::size_t path, std::size_t node_a, std::size_t node_b) {
        double s = 0.0;
        for (std::size_t c : components) {
            double v = bundle.at(path, node_a, c) - (node_b == SIZE_MAX ? 0.0 : bundle.at(path, node_b, c));
            s += v * v;
        }
        return std::pow(std::sqrt(s), p);
    };

    DiagnosticsReport report;
    std::vector<double> sup(n_paths);
    for (std::size_t path = 0; path < n_paths; ++path) {
        double m = 0.0;
        for (std::size_t k = 0; k < grid.n_nodes(); ++k) m = std::max(m, norm_p(path, k, SIZE_MAX));
        sup[path] = m;
    }
    auto sup_est = mc_estimate(sup);
    report.checks.push_back({"sup_moment", sup_est.mean, std::nullopt, std::isfinite(sup_est.mean), n_paths});

    std::vector<double> log_lag, log_moment;
    bool degenerate = false;
    double max_moment = 0.0;
    for (std::size_t lag = 1; lag == 1 || lag * 8 <= grid.n_steps(); lag *= 2) {
        if (lag > grid.n_steps()) break;
        double acc = 0.0;
        std::size_t count = 0;
        for (std::size_t path = 0; path < n_paths; ++path) {
            for (std::size_t k = 0; k + lag < grid.n_nodes(); ++k) {
                acc += norm_p(path, k + lag, k);
                ++count;
            }
        }
        double moment = acc / static_cast<double>(count);
        double lag_time = static_cast<double>(lag) * grid.step();
        report.checks.push_back({"increment_moment@" + std::to_string(lag_time), moment, std::nullopt, true, count});
        max_moment = std::max(max_moment, moment);
        if (moment <= 0.0) {
            degenerate = true;
        } else {
            log_lag.push_back(std::log(lag_time));
            log_moment.push_back(std::log(moment));
        }
    }
    if (degenerate || log_lag.size() < 2) {
        report.checks.push_back({"increments_vanish", max_moment, 0.0, max_moment == 0.0 || log_lag.size() < 2, n_paths});
    } else {
        double slope = ols_slope(log_lag, log_moment);
        double threshold = 0.8 * p / 2.0;
        report.checks.push_back({"increment_slope", slope, threshold, slope >= threshold, n_paths});
    }
    return report;
}

/// Witness of a dissipativity failure.
struct DissipativityWitness {
    double t;
    std::vector<double> x, y1, y2;
    double ratio;
};

class DissipativityViolated : public Error {
public:
    explicit DissipativityViolated(DissipativityWitness w)
        : Error(ErrorCode::DissipativityViolated,
                "<B(y2)-B(y1), y2-y1> + |C(y2)-C(y1)|^2 = " + std::to_string(w.ratio) + " |y2-y1|^2 at t=" +
                    std::to_string(w.t)),
          witness_(std::move(w)) {}
    const DissipativityWitness& witness() const noexcept { return witness_; }

private:
    DissipativityWitness witness_;
};

/// Sample point for the dissipativity scan.
struct DissipativitySample {
    double t;
    std::vector<double> x, y1, y2;
};

using DissipativitySampler = std::function<DissipativitySample(RngStream&)>;

/// Uniform sampler on [0, T] x [-x_range, x_range]^d x [-y_range, y_range]^l (two y's).
inline DissipativitySampler box_sampler(std::size_t d, std::size_t l, double T, double x_range, double y_range) {
    return [=](RngStream& rng) {
        DissipativitySample s;
        s.t = rng.uniform(0.0, T);
        s.x.resize(d);
        s.y1.resize(l);
        s.y2.resize(l);
        for (auto& v : s.x) v = rng.uniform(-x_range, x_range);
        for (auto& v : s.y1) v = rng.uniform(-y_range, y_range);
        for (auto& v : s.y2) v = rng.uniform(-y_range, y_range);
        return s;
    };
}

/// beta_hat = -max over trials of (<B2 - B1, y2 - y1> + |C2 - C1|_F^2) / |y2 - y1|^2.
/// Throws DissipativityViolated if any trial ratio is positive.
inline double check_dissipativity(const CoefficientField& B, const CoefficientField& C,
                                  const DissipativitySampler& sampler, std::size_t n_trials, RngStream& rng) {
    require(n_trials >= 1, "dissipativity scan needs at least one trial");
    const std::size_t l = B.rows();
    require(C.rows() == l && C.cols() == l, "C must be l x l for a B with l rows");
    std::vector<double> B1(l), B2(l), C1(l * l), C2(l * l);
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t trial = 0; trial < n_trials; ++trial) {
        DissipativitySample s = sampler(rng);
        double dist2 = 0.0;
        for (std::size_t j = 0; j < l; ++j) dist2 += (s.y2[j] - s.y1[j]) * (s.y2[j] - s.y1[j]);
        if (dist2 == 0.0) continue;
        B.eval(s.t, s.x, s.y1, B1);
        B.eval(s.t, s.x, s.y2, B2);
        C.eval(s.t, s.x, s.y1, C1);
        C.eval(s.t, s.x, s.y2, C2);
        double lhs = 0.0;
        for (std::size_t j = 0; j < l; ++j) lhs += (B2[j] - B1[j]) * (s.y2[j] - s.y1[j]);
        for (std::size_t k = 0; k < l * l; ++k) lhs += (C2[k] - C1[k]) * (C2[k] - C1[k]);
        double ratio = lhs / dist2;
        if (ratio > 0.0) throw DissipativityViolated({s.t, s.x, s.y1, s.y2, ratio});
        worst = std::max(worst, ratio);
    }
    require(std::isfinite(worst), "every sampled pair had y1 == y2");
    return -worst;
}

/// max over grid nodes of E|Y_t|^2 for the fast components of a slow-fast bundle.
inline MonteCarloEstimate max_fast_second_moment(const PathBundle& bundle) {
    std::vector<std::size_t> fast;
    for (std::size_t c = 0; c < bundle.dim(); ++c) {
        const auto& s = bundle.labels()[c];
        if (s == "Y" || (s.size() > 1 && s[0] == 'Y' && std::isdigit(static_cast<unsigned char>(s[1])))) fast.push_back(c);
    }
    require(!fast.empty(), "bundle has no fast components");
    MonteCarloEstimate best{-1.0, 0.0, 0};
    std::vector<double> v(bundle.n_paths());
    for (std::size_t k = 0; k < bundle.grid().n_nodes(); ++k) {
        for (std::size_t p = 0; p < bundle.n_paths(); ++p) {
            double s = 0.0;
            for (std::size_t c : fast) s += bundle.at(p, k, c) * bundle.at(p, k, c);
            v[p] = s;
        }
        auto e = mc_estimate(v);
        if (e.mean > best.mean) best = e;
    }
    return best;
}

/// Spot-checks the declared sublinearity constant |f| <= M (1 + |x| + |y|) on random points.
inline DiagnosticCheck check_sublinearity(const CoefficientField& f, double T, double range, std::size_t n_trials,
                                          RngStream& rng) {
    const double M = f.constants().sublinear;
    std::vector<double> x(f.slow_dim()), y(f.fast_dim()), out(f.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < n_trials; ++i) {
        double t = rng.uniform(0.0, T);
        double nx = 0.0, ny = 0.0, no = 0.0;
        for (auto& v : x) { v = rng.uniform(-range, range); nx += v * v; }
        for (auto& v : y) { v = rng.uniform(-range, range); ny += v * v; }
        f.eval(t, x, y, out);
        for (double v : out) no += v * v;
        worst = std::max(worst, std::sqrt(no) / (1.0 + std::sqrt(nx) + std::sqrt(ny)));
    }
    bool ok = std::isnan(M) || worst <= M * (1.0 + 1e-12);
    return {"sublinearity:" + f.name(), worst, std::isnan(M) ? std::nullopt : std::optional<double>(M), ok, n_trials};
}

} // namespace msde
