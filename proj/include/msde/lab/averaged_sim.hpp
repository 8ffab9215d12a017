#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "msde/core/parallel.hpp"
#include "msde/core/path_bundle.hpp"
#include "msde/core/rng.hpp"
#include "msde/core/time_grid.hpp"
#include "msde/engine/simulate.hpp"
#include "msde/ergodic/averaged_model.hpp"

namespace msde {

struct AveragedSimOptions {
    double overflow_guard = 1e8;
    unsigned workers = 1;
};

/// Streams Euler-Maruyama paths of dX = b_bar(t, X) dt + sigma_bar(t, X) dW to `observer`.
///
/// The record holds the d slow components at every grid node; `extrapolations` in the
/// callback counts the steps at which the state left the model's node hull.
template <class Observer>
void for_each_averaged_path(const AveragedModel& model, std::span<const double> x0, const TimeGrid& grid,
                            const StreamFamily& streams, std::size_t n_paths, Observer&& observer,
                            const AveragedSimOptions& opt = {}) {
    const std::size_t d = model.dim();
    require(d > 0, "averaged model is empty");
    require(x0.size() == d, "x0 has the wrong dimension");
    const double h = grid.step();
    const double sqrt_h = std::sqrt(h);
    const std::size_t n_nodes = grid.n_nodes();
    parallel_for(n_paths, opt.workers, [&](unsigned, std::size_t p) {
        RngStream rng = streams.stream(p);
        std::vector<double> states(n_nodes * d), x(x0.begin(), x0.end()), b(d), s(d * d), dW(d);
        std::copy(x.begin(), x.end(), states.begin());
        std::size_t extrapolations = 0;
        for (std::size_t k = 0; k < grid.n_steps(); ++k) {
            const double t = grid.time(k);
            if (model.eval(t, x, b, s)) ++extrapolations;
            rng.normals(dW, sqrt_h);
            for (std::size_t i = 0; i < d; ++i) {
                double dx = b[i] * h;
                for (std::size_t j = 0; j < d; ++j) dx += s[i * d + j] * dW[j];
                x[i] += dx;
            }
            detail::guard_state(x, opt.overflow_guard, p, grid.time(k + 1));
            std::copy(x.begin(), x.end(), states.begin() + static_cast<std::ptrdiff_t>((k + 1) * d));
        }
        PathRecord rec;
        rec.path_index = p;
        rec.grid = &grid;
        rec.dim = d;
        rec.states = states;
        rec.d = d;
        rec.l = 0;
        observer(rec, extrapolations);
    });
}

/// Paths of the averaged equation with components labelled Xbar or Xbar1..Xbard.
/// Per-path extrapolation counts go to `extrapolations` when it is non-null.
inline PathBundle simulate_averaged(const AveragedModel& model, std::span<const double> x0, const TimeGrid& grid,
                                   const StreamFamily& streams, std::size_t n_paths,
                                   const AveragedSimOptions& opt = {},
                                   std::vector<std::size_t>* extrapolations = nullptr) {
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < model.dim(); ++i) {
        labels.push_back(model.dim() == 1 ? "Xbar" : "Xbar" + std::to_string(i + 1));
    }
    PathBundle bundle(grid, n_paths, labels);
    if (extrapolations) extrapolations->assign(n_paths, 0);
    for_each_averaged_path(
        model, x0, grid, streams, n_paths,
        [&](const PathRecord& r, std::size_t extra) {
            bundle.store(r);
            if (extrapolations) (*extrapolations)[r.path_index] = extra;
        },
        opt);
    return bundle;
}

} // namespace msde
