#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "msde/core/error.hpp"
#include "msde/core/time_grid.hpp"

namespace msde {

/// A bounded path functional phi(x_.) of the first slow component.
///
/// `time` is the marginal the functional looks at (the horizon for terminal and path
/// functionals); it selects the time at which two-sample KS statistics are reported.
struct Functional {
    std::string name;
    double bound = 1.0;
    double time = 1.0;
    /// path: n_nodes values of the first slow component on `grid`.
    std::function<double(const TimeGrid& grid, std::span<const double> path)> fn;

    /// Evaluates phi and enforces |phi| <= bound.
    double operator()(const TimeGrid& grid, std::span<const double> path) const {
        double v = fn(grid, path);
        if (!(std::abs(v) <= bound * (1.0 + 1e-12))) {
            throw Error(ErrorCode::UnboundedPayoff,
                        "functional " + name + " returned " + std::to_string(v) + ", above its bound " +
                            std::to_string(bound));
        }
        return v;
    }
};

namespace functionals {

inline Functional cos_terminal(double T) {
    return {"cos", 1.0, T, [](const TimeGrid&, std::span<const double> p) { return std::cos(p.back()); }};
}

inline Functional tanh_terminal(double T) {
    return {"tanh", 1.0, T, [](const TimeGrid&, std::span<const double> p) { return std::tanh(p.back()); }};
}

inline Functional capped_square(double T, double cap = 4.0) {
    return {"capped-square", cap, T,
            [cap](const TimeGrid&, std::span<const double> p) { return std::min(p.back() * p.back(), cap); }};
}

/// cos(x_{T/2}) at the grid node nearest T/2.
inline Functional cos_half(double T) {
    return {"cos-half", 1.0, 0.5 * T, [T](const TimeGrid& g, std::span<const double> p) {
                return std::cos(p[g.nearest_node(g.t0() + 0.5 * T)]);
            }};
}

inline Functional sup_tanh(double T) {
    return {"sup-tanh", 1.0, T, [](const TimeGrid&, std::span<const double> p) {
                return std::tanh(*std::max_element(p.begin(), p.end()));
            }};
}

inline std::vector<std::string> names() { return {"cos", "tanh", "capped-square", "cos-half", "sup-tanh"}; }

inline Functional by_name(const std::string& name, double T) {
    if (name == "cos") return cos_terminal(T);
    if (name == "tanh") return tanh_terminal(T);
    if (name == "capped-square") return capped_square(T);
    if (name == "cos-half") return cos_half(T);
    if (name == "sup-tanh") return sup_tanh(T);
    std::string list;
    for (const auto& n : names()) list += (list.empty() ? "" : ", ") + n;
    throw Error(ErrorCode::InvalidArgument, "unknown functional '" + name + "' (available: " + list + ")");
}

} // namespace functionals

} // namespace msde
