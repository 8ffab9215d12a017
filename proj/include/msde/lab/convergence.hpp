#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "msde/core/rng.hpp"
#include "msde/core/statistics.hpp"
#include "msde/engine/simulate.hpp"
#include "msde/engine/system.hpp"
#include "msde/ergodic/averaged_model.hpp"
#include "msde/lab/averaged_sim.hpp"
#include "msde/lab/functionals.hpp"

namespace msde {

struct ConvergenceOptions {
    double step = 1e-3;
    std::uint64_t seed = 1;
    SimulationOptions sim;
    /// Also record max_t E|Y_t|^2 per epsilon cell.
    bool track_fast_moment = true;
};

struct ConvergenceCell {
    double epsilon = 0.0; ///< 0 marks the averaged limit
    std::string functional;
    MonteCarloEstimate estimate;
    double ks_stat = 0.0;
    double ks_time = 0.0;
    double wall_ms = 0.0;
};

struct KsCell {
    double epsilon = 0.0;
    double time = 0.0;
    double statistic = 0.0;
    double critical_1pct = 0.0;
};

struct FastMomentCell {
    double epsilon = 0.0;
    MonteCarloEstimate max_second_moment; ///< at the maximizing node
    double time = 0.0;
};

struct AuxGapCell {
    double epsilon = 0.0;
    MonteCarloEstimate gap;
    double wall_ms = 0.0;
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

} // namespace detail

/// Weak-convergence sweep: per-epsilon functional estimates of X^eps against the averaged limit.
struct ConvergenceReport {
    std::vector<double> epsilons;
    std::vector<ConvergenceCell> cells;
    std::vector<ConvergenceCell> limit;
    std::vector<KsCell> ks;
    std::vector<FastMomentCell> fast_moments;
    std::vector<AuxGapCell> aux_gaps;

    const ConvergenceCell& cell(double eps, const std::string& functional) const {
        for (const auto& c : cells) {
            if (c.epsilon == eps && c.functional == functional) return c;
        }
        throw Error(ErrorCode::InvalidArgument, "no convergence cell for " + functional);
    }

    const ConvergenceCell& limit_cell(const std::string& functional) const {
        for (const auto& c : limit) {
            if (c.functional == functional) return c;
        }
        throw Error(ErrorCode::InvalidArgument, "no limit cell for " + functional);
    }

    /// |E phi(X^eps) - E phi(Xbar)| with the SE of the difference.
    MonteCarloEstimate gap(double eps, const std::string& functional) const {
        const auto& a = cell(eps, functional);
        const auto& b = limit_cell(functional);
        return {std::abs(a.estimate.mean - b.estimate.mean), combined_se(a.estimate, b.estimate),
                a.estimate.n_samples};
    }

    static constexpr const char* csv_header = "epsilon,functional,estimate,std_error,n_paths,ks_stat,ks_time,wall_ms";

    /// wall_ms is written as 0 unless `timing` is set, so that reruns compare byte for byte.
    void write_csv(std::ostream& os, bool timing = false) const {
        using detail::fmt_double;
        os << csv_header << '\n';
        auto row = [&](const ConvergenceCell& c, bool is_limit) {
            os << fmt_double(c.epsilon) << ',' << c.functional << ',' << fmt_double(c.estimate.mean) << ','
               << fmt_double(c.estimate.std_error) << ',' << c.estimate.n_samples << ','
               << (is_limit ? std::string() : fmt_double(c.ks_stat)) << ',' << fmt_double(c.ks_time) << ','
               << fmt_double(timing ? c.wall_ms : 0.0) << '\n';
        };
        for (const auto& c : cells) row(c, false);
        for (const auto& c : limit) row(c, true);
    }

    static constexpr const char* aux_csv_header = "epsilon,gap,std_error,n_paths,wall_ms";

    void write_aux_csv(std::ostream& os, bool timing = false) const {
        using detail::fmt_double;
        os << aux_csv_header << '\n';
        for (const auto& a : aux_gaps) {
            os << fmt_double(a.epsilon) << ',' << fmt_double(a.gap.mean) << ',' << fmt_double(a.gap.std_error) << ','
               << a.gap.n_samples << ',' << fmt_double(timing ? a.wall_ms : 0.0) << '\n';
        }
    }
};

namespace detail {

/// Per-path functional values and marginals at the KS times.
struct CellSamples {
    std::size_t n_paths = 0;
    std::vector<double> values;    ///< n_paths x n_functionals
    std::vector<double> marginals; ///< n_paths x n_times
    std::vector<double> fast_sq;   ///< n_nodes, mean of |Y_t|^2
    std::vector<double> fast_sq_se;
    double wall_ms = 0.0;
};

/// Accumulates sum over paths of |Y_t|^2 and |Y_t|^4 per node in blocks of 64 paths,
/// reduced in block order so the result does not depend on scheduling.
class FastMomentAccumulator {
public:
    FastMomentAccumulator(std::size_t n_paths, std::size_t n_nodes)
        : n_nodes_(n_nodes), n_blocks_((n_paths + block - 1) / block), sums_(n_blocks_ * n_nodes * 2, 0.0),
          locks_(n_blocks_), n_paths_(n_paths) {}

    void add(const PathRecord& r) {
        const std::size_t b = r.path_index / block;
        std::lock_guard lock(locks_[b]);
        double* s = sums_.data() + b * n_nodes_ * 2;
        for (std::size_t k = 0; k < n_nodes_; ++k) {
            double y2 = 0.0;
            for (std::size_t j = 0; j < r.l; ++j) {
                double y = r.at(k, r.d + j);
                y2 += y * y;
            }
            s[2 * k] += y2;
            s[2 * k + 1] += y2 * y2;
        }
    }

    void finish(std::vector<double>& mean, std::vector<double>& se) const {
        mean.assign(n_nodes_, 0.0);
        se.assign(n_nodes_, 0.0);
        std::vector<double> sq(n_nodes_, 0.0);
        for (std::size_t b = 0; b < n_blocks_; ++b) {
            const double* s = sums_.data() + b * n_nodes_ * 2;
            for (std::size_t k = 0; k < n_nodes_; ++k) {
                mean[k] += s[2 * k];
                sq[k] += s[2 * k + 1];
            }
        }
        const double n = static_cast<double>(n_paths_);
        for (std::size_t k = 0; k < n_nodes_; ++k) {
            mean[k] /= n;
            double var = std::max(0.0, sq[k] / n - mean[k] * mean[k]) * n / std::max(1.0, n - 1.0);
            se[k] = std::sqrt(var / n);
        }
    }

    static constexpr std::size_t block = 64;

private:
    std::size_t n_nodes_, n_blocks_;
    std::vector<double> sums_;
    std::vector<std::mutex> locks_;
    std::size_t n_paths_;
};

inline std::vector<std::size_t> ks_nodes(const TimeGrid& grid, const std::vector<double>& times) {
    std::vector<std::size_t> out;
    for (double t : times) out.push_back(grid.nearest_node(t));
    return out;
}

template <class ForEach>
CellSamples collect_cell(ForEach&& for_each, const TimeGrid& grid, std::size_t n_paths,
                         const std::vector<Functional>& functionals, const std::vector<double>& times,
                         bool fast_moment) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t nf = functionals.size();
    const auto nodes = ks_nodes(grid, times);
    CellSamples s;
    s.n_paths = n_paths;
    s.values.assign(n_paths * nf, 0.0);
    s.marginals.assign(n_paths * nodes.size(), 0.0);
    std::optional<FastMomentAccumulator> acc;
    if (fast_moment) acc.emplace(n_paths, grid.n_nodes());
    for_each([&](const PathRecord& r) {
        std::vector<double> x0(r.n_nodes());
        for (std::size_t k = 0; k < x0.size(); ++k) x0[k] = r.at(k, 0);
        for (std::size_t f = 0; f < nf; ++f) s.values[r.path_index * nf + f] = functionals[f](grid, x0);
        for (std::size_t i = 0; i < nodes.size(); ++i) s.marginals[r.path_index * nodes.size() + i] = x0[nodes[i]];
        if (acc) acc->add(r);
    });
    if (acc) acc->finish(s.fast_sq, s.fast_sq_se);
    s.wall_ms = elapsed_ms(start);
    return s;
}

inline std::vector<double> column(const std::vector<double>& rows, std::size_t n_cols, std::size_t c) {
    std::vector<double> out(rows.size() / n_cols);
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = rows[p * n_cols + c];
    return out;
}

} // namespace detail

/// E phi(X^eps) for each eps and functional, the averaged-limit counterpart, and two-sample KS
/// statistics of X^eps_t against Xbar_t at each functional's time and at `ks_times`.
///
/// Each epsilon cell and the limit run on independent stream families derived from the seed.
/// All functionals of one cell are evaluated on the same paths.
inline ConvergenceReport weak_convergence_report(const SlowFastSystem& system, const AveragedModel& model,
                                                 const std::vector<double>& epsilons,
                                                 const std::vector<Functional>& functionals, std::size_t n_paths,
                                                 std::vector<double> ks_times, const ConvergenceOptions& opt = {}) {
    system.validate();
    require(!epsilons.empty(), "epsilon list is empty");
    require(!functionals.empty(), "functional list is empty");
    require(n_paths >= 2, "need at least 2 paths");
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
        require(epsilons[i] > 0.0 && epsilons[i] < 1.0, "epsilon values must lie in (0, 1)");
        require(i == 0 || epsilons[i] < epsilons[i - 1], "epsilon list must be strictly decreasing");
    }
    const TimeGrid grid = TimeGrid::with_step(0.0, system.horizon, opt.step);
    for (const auto& f : functionals) {
        if (std::find(ks_times.begin(), ks_times.end(), f.time) == ks_times.end()) ks_times.push_back(f.time);
    }
    std::sort(ks_times.begin(), ks_times.end());
    auto time_index = [&](double t) {
        return static_cast<std::size_t>(std::find(ks_times.begin(), ks_times.end(), t) - ks_times.begin());
    };

    const StreamFamily root(opt.seed);
    AveragedSimOptions avg_opt;
    avg_opt.overflow_guard = opt.sim.overflow_guard;
    avg_opt.workers = opt.sim.workers;
    const StreamFamily limit_streams = root.derive("converge-limit");
    auto limit = detail::collect_cell(
        [&](auto&& obs) {
            for_each_averaged_path(model, system.x0, grid, limit_streams, n_paths,
                                   [&](const PathRecord& r, std::size_t) { obs(r); }, avg_opt);
        },
        grid, n_paths, functionals, ks_times, false);

    ConvergenceReport report;
    report.epsilons = epsilons;
    const std::size_t nf = functionals.size();
    const std::size_t nt = ks_times.size();
    std::vector<std::vector<double>> limit_marginals;
    for (std::size_t i = 0; i < nt; ++i) limit_marginals.push_back(detail::column(limit.marginals, nt, i));
    for (std::size_t f = 0; f < nf; ++f) {
        ConvergenceCell c;
        c.epsilon = 0.0;
        c.functional = functionals[f].name;
        c.estimate = mc_estimate(detail::column(limit.values, nf, f));
        c.ks_time = functionals[f].time;
        c.wall_ms = limit.wall_ms;
        report.limit.push_back(c);
    }

    for (std::size_t e = 0; e < epsilons.size(); ++e) {
        const double eps = epsilons[e];
        const StreamFamily streams = root.derive("converge", e);
        auto cell = detail::collect_cell(
            [&](auto&& obs) { for_each_slow_fast_path(system, eps, grid, streams, n_paths, obs, opt.sim); }, grid,
            n_paths, functionals, ks_times, opt.track_fast_moment);
        std::vector<double> ks(nt);
        for (std::size_t i = 0; i < nt; ++i) {
            ks[i] = ks_statistic(detail::column(cell.marginals, nt, i), limit_marginals[i]);
            report.ks.push_back({eps, ks_times[i], ks[i], ks_critical_1pct(n_paths, n_paths)});
        }
        for (std::size_t f = 0; f < nf; ++f) {
            ConvergenceCell c;
            c.epsilon = eps;
            c.functional = functionals[f].name;
            c.estimate = mc_estimate(detail::column(cell.values, nf, f));
            c.ks_time = functionals[f].time;
            c.ks_stat = ks[time_index(c.ks_time)];
            c.wall_ms = cell.wall_ms;
            report.cells.push_back(c);
        }
        if (opt.track_fast_moment) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < cell.fast_sq.size(); ++k) {
                if (cell.fast_sq[k] > cell.fast_sq[best]) best = k;
            }
            report.fast_moments.push_back({eps, {cell.fast_sq[best], cell.fast_sq_se[best], n_paths}, grid.time(best)});
        }
    }
    return report;
}

/// E sup_{t <= T} |X^eps_t - Xhat^eps_t|^2 over the grid nodes, using the noise-coupled pair.
inline MonteCarloEstimate auxiliary_gap(const SlowFastSystem& system, double eps, const TimeGrid& grid,
                                        const StreamFamily& streams, std::size_t n_paths,
                                        const SimulationOptions& opt = {}) {
    const std::size_t d = system.slow_dim();
    const std::size_t l = system.fast_dim();
    std::vector<double> sup(n_paths, 0.0);
    for_each_auxiliary_path(
        system, eps, grid, streams, n_paths,
        [&](const PathRecord& r) {
            double m = 0.0;
            for (std::size_t k = 0; k < r.n_nodes(); ++k) {
                double s = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    double diff = r.at(k, i) - r.at(k, d + l + i);
                    s += diff * diff;
                }
                m = std::max(m, s);
            }
            sup[r.path_index] = m;
        },
        opt);
    return mc_estimate(sup);
}

/// Auxiliary gaps over an epsilon sweep, one independent stream family per epsilon.
inline std::vector<AuxGapCell> auxiliary_gap_sweep(const SlowFastSystem& system, const std::vector<double>& epsilons,
                                                   std::size_t n_paths, const ConvergenceOptions& opt = {}) {
    const TimeGrid grid = TimeGrid::with_step(0.0, system.horizon, opt.step);
    const StreamFamily root(opt.seed);
    std::vector<AuxGapCell> out;
    for (std::size_t e = 0; e < epsilons.size(); ++e) {
        const auto start = std::chrono::steady_clock::now();
        auto gap = auxiliary_gap(system, epsilons[e], grid, root.derive("aux-gap", e), n_paths, opt.sim);
        out.push_back({epsilons[e], gap, detail::elapsed_ms(start)});
    }
    return out;
}

} // namespace msde
