#pragma once

#include <cmath>
#include <vector>

#include "msde/core/path_bundle.hpp"
#include "msde/core/rng.hpp"
#include "msde/core/statistics.hpp"
#include "msde/engine/simulate.hpp"
#include "msde/finance/lsv.hpp"

namespace msde {

/// log dQ/dP = sum_k theta_k dW_k + gamma_k dZ_k - (theta_k^2 + gamma_k^2) h / 2, with theta and
/// gamma read at the left node of each grid step. The record must carry per-step increments
/// of an objective-measure log-price path (components X, Y).
inline double girsanov_log_weight(const PathRecord& r, const LSVModel& m, const MeasureChange& mc) {
    require(r.grid != nullptr, "path record has no grid");
    const std::size_t n = r.grid->n_steps();
    require(r.d == 1 && r.l == 1 && r.dW.size() == n && r.dZ.size() == n,
            "Girsanov weights need stored increments of a one-factor path");
    const double h = r.grid->step();
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = r.grid->time(k);
        const double x = r.at(k, 0);
        const double y = r.at(k, 1);
        const double th = mc.theta(m, t, x, y);
        const double g = mc.gamma.scalar(t, x, y);
        acc += th * r.dW[k] + g * r.dZ[k] - 0.5 * (th * th + g * g) * h;
    }
    return acc;
}

/// Monte Carlo mean of dQ/dP over objective paths of the log system at scale eps; should be 1.
inline MonteCarloEstimate girsanov_weight(const LSVModel& m, const MeasureChange& mc, double eps, const TimeGrid& grid,
                                          const StreamFamily& streams, std::size_t n_paths,
                                          SimulationOptions opt = {}) {
    const SlowFastSystem sys = to_log_system(m);
    opt.store_increments = true;
    std::vector<double> w(n_paths);
    for_each_slow_fast_path(sys, eps, grid, streams, n_paths,
                            [&](const PathRecord& r) { w[r.path_index] = std::exp(girsanov_log_weight(r, m, mc)); },
                            opt);
    return mc_estimate(w);
}

} // namespace msde
