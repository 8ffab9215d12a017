#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "msde/core/error.hpp"
#include "msde/core/time_grid.hpp"

namespace msde {

using WeightFunction = std::function<double(double theta)>;

/// Window average eta^delta(theta) = (1/w) int_{theta - w}^{theta} a(xi) eta(xi) d xi with
/// w = min(delta, theta + T), evaluated at every grid node.
///
/// The path is given on the nodes of `grid` ([0, T] shifted to theta = t - T in [-T, 0]) and
/// the integral is the exact integral of the piecewise-linear interpolant of a * eta. Near
/// theta = -T the window is truncated and the average is over the shorter window; at
/// theta = -T itself the value is a(-T) eta(-T).
inline std::vector<double> window_average(const TimeGrid& grid, std::span<const double> path, const WeightFunction& a,
                                          double delta) {
    require(delta > 0.0, "mollification width delta must be positive");
    const std::size_t n = grid.n_nodes();
    require(path.size() == n, "path does not match the grid");
    const double T = grid.horizon();
    const double h = grid.step();
    std::vector<double> g(n), prefix(n, 0.0), out(n);
    for (std::size_t k = 0; k < n; ++k) g[k] = a(grid.time(k) - grid.t_end()) * path[k];
    for (std::size_t k = 1; k < n; ++k) prefix[k] = prefix[k - 1] + 0.5 * h * (g[k - 1] + g[k]);
    // int_{-T}^{u} of the interpolant, u given as an offset from -T.
    auto integral_to = [&](double u) {
        if (u <= 0.0) return 0.0;
        if (u >= T) return prefix[n - 1];
        auto j = std::min(static_cast<std::size_t>(u / h), n - 2);
        double s = u - static_cast<double>(j) * h;
        return prefix[j] + s * g[j] + 0.5 * s * s * (g[j + 1] - g[j]) / h;
    };
    out[0] = g[0];
    for (std::size_t k = 1; k < n; ++k) {
        const double u = static_cast<double>(k) * h;
        const double lo = std::max(u - delta, 0.0);
        out[k] = (prefix[k] - integral_to(lo)) / (u - lo);
    }
    return out;
}

/// Lookback functional Psi^delta(eta(0), sup_theta eta^delta(theta)) on discrete paths.
struct MollifiedLookback {
    std::function<double(double terminal, double running_sup)> psi0;
    WeightFunction a;
    double delta = 0.0;

    double window_sup(const TimeGrid& grid, std::span<const double> path) const {
        auto avg = window_average(grid, path, a, delta);
        return *std::max_element(avg.begin(), avg.end());
    }

    double operator()(const TimeGrid& grid, std::span<const double> path) const {
        return psi0(path.back(), window_sup(grid, path));
    }
};

inline MollifiedLookback mollify_lookback(std::function<double(double, double)> psi0, WeightFunction a, double delta) {
    require(delta > 0.0, "mollification width delta must be positive");
    require(psi0 && a, "lookback needs a payoff and a weight function");
    return {std::move(psi0), std::move(a), delta};
}

namespace weights {

inline WeightFunction one() {
    return [](double) { return 1.0; };
}

/// a(theta) = 1 + theta / T: 0 at -T, 1 at the terminal time.
inline WeightFunction ramp(double T) {
    return [T](double theta) { return 1.0 + theta / T; };
}

inline WeightFunction by_name(const std::string& name, double T) {
    if (name == "one") return one();
    if (name == "ramp") return ramp(T);
    throw Error(ErrorCode::InvalidArgument, "unknown weight function '" + name + "' (available: one, ramp)");
}

} // namespace weights

} // namespace msde
