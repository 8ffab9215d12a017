#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "msde/core/parallel.hpp"
#include "msde/core/rng.hpp"
#include "msde/core/statistics.hpp"
#include "msde/engine/simulate.hpp"
#include "msde/finance/local_vol.hpp"
#include "msde/finance/lsv.hpp"
#include "msde/finance/option.hpp"
#include "msde/lab/convergence.hpp"

namespace msde {

namespace detail {

inline std::vector<Payoff> make_payoffs(const std::vector<OptionSpec>& specs, const TimeGrid& grid) {
    require(!specs.empty(), "no options to price");
    std::vector<Payoff> out;
    for (const auto& s : specs) out.emplace_back(s, grid);
    return out;
}

inline std::vector<MonteCarloEstimate> reduce_prices(const std::vector<double>& values, std::size_t n_specs) {
    std::vector<MonteCarloEstimate> out;
    for (std::size_t j = 0; j < n_specs; ++j) out.push_back(mc_estimate(column(values, n_specs, j)));
    return out;
}

} // namespace detail

/// Discounted prices E*[exp(-I_T) Psi(S)] of several options on the same risk-neutral
/// slow-fast paths. `rn` is the output of risk_neutralize; I_T is the trapezoid integral of
/// r(t, X_t, Y_t) over the grid nodes.
inline std::vector<MonteCarloEstimate> price_many(const SlowFastSystem& rn, const MeasureChange& mc,
                                                  const std::vector<OptionSpec>& specs, double eps,
                                                  const TimeGrid& grid, const StreamFamily& streams,
                                                  std::size_t n_paths, const SimulationOptions& opt = {}) {
    require(rn.slow_dim() == 1 && rn.fast_dim() == 1, "pricing needs a one-factor log-price system");
    const auto payoffs = detail::make_payoffs(specs, grid);
    const std::size_t ns = specs.size();
    const double h = grid.step();
    std::vector<double> values(n_paths * ns);
    for_each_slow_fast_path(
        rn, eps, grid, streams, n_paths,
        [&](const PathRecord& r) {
            const std::size_t n = r.n_nodes();
            std::vector<double> s(n);
            double integral = 0.0, prev = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double x = r.at(k, 0);
                s[k] = std::exp(x);
                const double rate = mc.r.scalar(grid.time(k), x, r.at(k, 1));
                if (k > 0) integral += 0.5 * h * (prev + rate);
                prev = rate;
            }
            const double disc = std::exp(-integral);
            for (std::size_t j = 0; j < ns; ++j) values[r.path_index * ns + j] = disc * payoffs[j](s);
        },
        opt);
    return detail::reduce_prices(values, ns);
}

inline MonteCarloEstimate price(const SlowFastSystem& rn, const MeasureChange& mc, const OptionSpec& spec, double eps,
                                const TimeGrid& grid, const StreamFamily& streams, std::size_t n_paths,
                                const SimulationOptions& opt = {}) {
    return price_many(rn, mc, {spec}, eps, grid, streams, n_paths, opt).front();
}

/// Prices under the averaged local-volatility model, simulated by Euler steps on log S
/// (one normal per step from stream p for path p).
inline std::vector<MonteCarloEstimate> price_many(const LocalVolModel& model, const std::vector<OptionSpec>& specs,
                                                  const TimeGrid& grid, const StreamFamily& streams,
                                                  std::size_t n_paths, unsigned workers = 1,
                                                  double overflow_guard = 1e8) {
    const auto payoffs = detail::make_payoffs(specs, grid);
    const std::size_t ns = specs.size();
    const double h = grid.step();
    const double sqrt_h = std::sqrt(h);
    std::vector<double> values(n_paths * ns);
    parallel_for(n_paths, workers, [&](unsigned, std::size_t p) {
        RngStream rng = streams.stream(p);
        const std::size_t n = grid.n_nodes();
        std::vector<double> s(n);
        double x = std::log(model.s0());
        s[0] = model.s0();
        double rate = 0.0, vol = 0.0;
        model.eval(grid.time(0), s[0], rate, vol);
        double integral = 0.0;
        for (std::size_t k = 0; k + 1 < n; ++k) {
            const double prev = rate;
            x += (rate - 0.5 * vol * vol) * h + vol * sqrt_h * rng.normal();
            if (!(std::abs(x) <= overflow_guard)) throw NumericalBlowup(p, grid.time(k + 1), x);
            s[k + 1] = std::exp(x);
            model.eval(grid.time(k + 1), s[k + 1], rate, vol);
            integral += 0.5 * h * (prev + rate);
        }
        const double disc = std::exp(-integral);
        for (std::size_t j = 0; j < ns; ++j) values[p * ns + j] = disc * payoffs[j](s);
    });
    return detail::reduce_prices(values, ns);
}

inline MonteCarloEstimate price(const LocalVolModel& model, const OptionSpec& spec, const TimeGrid& grid,
                                const StreamFamily& streams, std::size_t n_paths, unsigned workers = 1) {
    return price_many(model, {spec}, grid, streams, n_paths, workers).front();
}

struct PriceRow {
    double epsilon = 0.0; ///< 0 marks the averaged limit
    MonteCarloEstimate price;
    double gap_vs_limit = 0.0;
    double gap_se = 0.0;
    double wall_ms = 0.0;
};

struct PriceTable {
    std::vector<PriceRow> rows;
    PriceRow limit;

    static constexpr const char* csv_header = "epsilon,price,std_error,n_paths,gap_vs_limit,wall_ms";

    /// wall_ms is written as 0 unless `timing` is set.
    void write_csv(std::ostream& os, bool timing = false) const {
        using detail::fmt_double;
        os << csv_header << '\n';
        auto row = [&](const PriceRow& r) {
            os << fmt_double(r.epsilon) << ',' << fmt_double(r.price.mean) << ',' << fmt_double(r.price.std_error)
               << ',' << r.price.n_samples << ',' << fmt_double(r.gap_vs_limit) << ','
               << fmt_double(timing ? r.wall_ms : 0.0) << '\n';
        };
        for (const auto& r : rows) row(r);
        row(limit);
    }
};

struct PriceExperimentOptions {
    double step = 1e-3;
    std::uint64_t seed = 1;
    SimulationOptions sim;
    /// Ergodic settings and node grids for the averaged local-vol limit.
    TabulateParams limit_params;
    std::vector<double> t_nodes{0.0};
    std::vector<double> s_nodes;
    /// Use this limit model instead of tabulating one.
    std::optional<AveragedModel> limit_model;
};

/// P^eps for each eps under the risk-neutral slow-fast system and Pbar under the averaged
/// local-vol limit, with |P^eps - Pbar| per row. Every cell has its own stream family.
inline PriceTable price_convergence_experiment(const LSVModel& lsv, const MeasureChange& mc, const OptionSpec& spec,
                                               const std::vector<double>& epsilons, std::size_t n_paths,
                                               const PriceExperimentOptions& opt = {}) {
    spec.validate();
    require(!epsilons.empty(), "epsilon list is empty");
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
        require(epsilons[i] > 0.0 && epsilons[i] < 1.0, "epsilon values must lie in (0, 1)");
        require(i == 0 || epsilons[i] < epsilons[i - 1], "epsilon list must be strictly decreasing");
    }
    const TimeGrid grid = TimeGrid::with_step(0.0, spec.maturity, opt.step);
    const SlowFastSystem rn = risk_neutralize(lsv, mc);
    const StreamFamily root(opt.seed);

    AveragedModel table;
    if (opt.limit_model) {
        table = *opt.limit_model;
    } else {
        TabulateParams lp = opt.limit_params;
        lp.seed = root.derive("price-limit-table").master_seed();
        lp.workers = opt.sim.workers;
        std::vector<double> s_nodes = opt.s_nodes.empty() ? std::vector<double>{lsv.s0} : opt.s_nodes;
        table = averaged_local_vol(lsv, mc, opt.t_nodes, s_nodes, lp);
    }
    const LocalVolModel limit_model(table, lsv.s0);

    PriceTable out;
    auto start = std::chrono::steady_clock::now();
    out.limit.epsilon = 0.0;
    out.limit.price = price(limit_model, spec, grid, root.derive("price-limit"), n_paths, opt.sim.workers);
    out.limit.wall_ms = detail::elapsed_ms(start);
    for (std::size_t e = 0; e < epsilons.size(); ++e) {
        start = std::chrono::steady_clock::now();
        PriceRow row;
        row.epsilon = epsilons[e];
        row.price = price(rn, mc, spec, epsilons[e], grid, root.derive("price", e), n_paths, opt.sim);
        row.gap_vs_limit = std::abs(row.price.mean - out.limit.price.mean);
        row.gap_se = combined_se(row.price, out.limit.price);
        row.wall_ms = detail::elapsed_ms(start);
        out.rows.push_back(row);
    }
    return out;
}

} // namespace msde
