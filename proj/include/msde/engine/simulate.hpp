#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "msde/core/increments.hpp"
#include "msde/core/parallel.hpp"
#include "msde/core/path_bundle.hpp"
#include "msde/core/rng.hpp"
#include "msde/core/time_grid.hpp"
#include "msde/engine/system.hpp"

namespace msde {

struct SimulationOptions {
    /// Fast micro-substeps per unit of epsilon: the fast step never exceeds eps / nu.
    double nu = 20.0;
    /// Explicit substeps per grid step; 0 picks the smallest count satisfying the nu rule.
    std::size_t fast_substeps = 0;
    double overflow_guard = 1e8;
    /// Keep per-grid-step sums of dW and dZ in each PathRecord.
    bool store_increments = false;
    unsigned workers = 1;
    /// Window length for the auxiliary process; 0 uses khasminskii_delta(eps).
    double window = 0.0;
};

/// Delta(eps) = eps * (ln 1/eps)^(1/4).
inline double khasminskii_delta(double eps) {
    if (!(eps > 0.0 && eps < 1.0)) {
        throw Error(ErrorCode::DegenerateEpsilon, "window length needs eps in (0, 1), got " + std::to_string(eps));
    }
    return eps * std::pow(std::log(1.0 / eps), 0.25);
}

/// Number of integration substeps per grid step of length h.
inline std::size_t resolve_substeps(double h, double eps, const SimulationOptions& opt) {
    require(opt.nu >= 1.0, "nu must be at least 1");
    const double max_fast = eps / opt.nu;
    if (opt.fast_substeps > 0) {
        if (h / static_cast<double>(opt.fast_substeps) > max_fast * (1.0 + 1e-12)) {
            throw Error(ErrorCode::StepTooCoarse,
                        std::to_string(opt.fast_substeps) + " substeps of a " + std::to_string(h) +
                            " grid step exceed the fast step limit eps/nu = " + std::to_string(max_fast));
        }
        return opt.fast_substeps;
    }
    if (h <= max_fast * (1.0 + 1e-12)) return 1;
    return static_cast<std::size_t>(std::ceil(h / max_fast * (1.0 - 1e-12)));
}

namespace detail {

/// Euler-Maruyama increments of the coupled system with coefficients read at (t, xc, yc).
class SlowFastKernel {
public:
    SlowFastKernel(const SlowFastSystem& sys, double eps)
        : sys_(sys), d_(sys.slow_dim()), l_(sys.fast_dim()), inv_eps_(1.0 / eps), inv_sqrt_eps_(1.0 / std::sqrt(eps)),
          pert_(sys.D ? std::pow(eps, -sys.eta) : 0.0), b_(d_), sigma_(d_ * d_), B_(l_), C_(l_ * l_), D_(l_, 0.0) {}

    void increment(double t, std::span<const double> xc, std::span<const double> yc, std::span<const double> dW,
                   std::span<const double> dWt, double hs, std::span<double> dx, std::span<double> dy) {
        sys_.b.eval(t, xc, yc, b_);
        sys_.sigma.eval(t, xc, yc, sigma_);
        sys_.B.eval(t, xc, yc, B_);
        sys_.C.eval(t, xc, yc, C_);
        if (sys_.D) sys_.D->eval(t, xc, yc, D_);
        if (d_ == 1 && l_ == 1) {
            dx[0] = b_[0] * hs + sigma_[0] * dW[0];
            dy[0] = (B_[0] * inv_eps_ + D_[0] * pert_) * hs + inv_sqrt_eps_ * C_[0] * dWt[0];
            return;
        }
        for (std::size_t i = 0; i < d_; ++i) {
            double acc = b_[i] * hs;
            for (std::size_t k = 0; k < d_; ++k) acc += sigma_[i * d_ + k] * dW[k];
            dx[i] = acc;
        }
        for (std::size_t j = 0; j < l_; ++j) {
            double noise = 0.0;
            for (std::size_t k = 0; k < l_; ++k) noise += C_[j * l_ + k] * dWt[k];
            dy[j] = (B_[j] * inv_eps_ + D_[j] * pert_) * hs + inv_sqrt_eps_ * noise;
        }
    }

private:
    const SlowFastSystem& sys_;
    std::size_t d_, l_;
    double inv_eps_, inv_sqrt_eps_, pert_;
    std::vector<double> b_, sigma_, B_, C_, D_;
};

inline void guard_state(std::span<const double> state, double guard, std::size_t path, double t) {
    for (double v : state) {
        if (!(std::abs(v) <= guard)) throw NumericalBlowup(path, t, v);
    }
}

/// Shared driver for the true system and the (true, auxiliary) coupled pair.
template <class Observer>
void run_slow_fast(const SlowFastSystem& sys, double eps, const TimeGrid& grid, const StreamFamily& streams,
                   std::size_t n_paths, Observer&& observer, const SimulationOptions& opt, bool auxiliary) {
    sys.validate();
    require(eps > 0.0 && eps <= 1.0, "eps must lie in (0, 1], got " + std::to_string(eps));
    const std::size_t d = sys.slow_dim();
    const std::size_t l = sys.fast_dim();
    const std::size_t m = grid.n_steps() == 0 ? 1 : resolve_substeps(grid.step(), eps, opt);
    const double hs = grid.step() / static_cast<double>(m);
    const double sqrt_hs = std::sqrt(hs);
    double window = 0.0;
    if (auxiliary) window = opt.window > 0.0 ? opt.window : khasminskii_delta(eps);
    const std::size_t dim = auxiliary ? 2 * (d + l) : d + l;
    const std::size_t n_nodes = grid.n_nodes();
    const unsigned workers = resolve_workers(opt.workers);

    struct Workspace {
        SlowFastKernel kernel;
        std::vector<double> states, inc_w, inc_z;
        std::vector<double> x, y, xh, yh, xk, dW, dZ, dWt, dx, dy, dxh, dyh;
    };
    std::vector<Workspace> ws;
    ws.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        ws.push_back(Workspace{SlowFastKernel(sys, eps),
                               std::vector<double>(n_nodes * dim),
                               std::vector<double>(opt.store_increments ? grid.n_steps() * d : 0),
                               std::vector<double>(opt.store_increments ? grid.n_steps() * l : 0),
                               std::vector<double>(d), std::vector<double>(l), std::vector<double>(d),
                               std::vector<double>(l), std::vector<double>(d), std::vector<double>(d),
                               std::vector<double>(l), std::vector<double>(l), std::vector<double>(d),
                               std::vector<double>(l), std::vector<double>(d), std::vector<double>(l)});
    }

    parallel_for(n_paths, workers, [&](unsigned w, std::size_t p) {
        Workspace& s = ws[w];
        RngStream stream = streams.stream(p);
        std::copy(sys.x0.begin(), sys.x0.end(), s.x.begin());
        std::copy(sys.y0.begin(), sys.y0.end(), s.y.begin());
        std::copy(sys.x0.begin(), sys.x0.end(), s.xh.begin());
        std::copy(sys.y0.begin(), sys.y0.end(), s.yh.begin());
        std::copy(sys.x0.begin(), sys.x0.end(), s.xk.begin());
        std::fill(s.inc_w.begin(), s.inc_w.end(), 0.0);
        std::fill(s.inc_z.begin(), s.inc_z.end(), 0.0);

        auto record = [&](std::size_t node) {
            double* out = s.states.data() + node * dim;
            std::copy(s.x.begin(), s.x.end(), out);
            std::copy(s.y.begin(), s.y.end(), out + d);
            if (auxiliary) {
                std::copy(s.xh.begin(), s.xh.end(), out + d + l);
                std::copy(s.yh.begin(), s.yh.end(), out + 2 * d + l);
            }
        };
        record(0);

        std::size_t fine = 0;
        std::size_t window_index = 0;
        double t_window = grid.t0();
        const double snap = 1e-9 * hs;
        for (std::size_t k = 0; k < grid.n_steps(); ++k) {
            for (std::size_t sub = 0; sub < m; ++sub, ++fine) {
                const double t = grid.t0() + static_cast<double>(fine) * hs;
                if (auxiliary) {
                    // Windows start at the first integration node at or after K * Delta.
                    bool new_window = false;
                    while (t - grid.t0() >= static_cast<double>(window_index + 1) * window - snap) {
                        ++window_index;
                        new_window = true;
                    }
                    if (new_window) {
                        t_window = t;
                        std::copy(s.x.begin(), s.x.end(), s.xk.begin());
                        std::copy(s.y.begin(), s.y.end(), s.yh.begin());
                    }
                }
                draw_step(sys.correlation, sqrt_hs, stream, s.dW, s.dZ, s.dWt);
                s.kernel.increment(t, s.x, s.y, s.dW, s.dWt, hs, s.dx, s.dy);
                if (auxiliary) {
                    s.kernel.increment(t_window, s.xk, s.yh, s.dW, s.dWt, hs, s.dxh, s.dyh);
                    for (std::size_t i = 0; i < d; ++i) s.xh[i] += s.dxh[i];
                    for (std::size_t j = 0; j < l; ++j) s.yh[j] += s.dyh[j];
                }
                for (std::size_t i = 0; i < d; ++i) s.x[i] += s.dx[i];
                for (std::size_t j = 0; j < l; ++j) s.y[j] += s.dy[j];
                if (opt.store_increments) {
                    for (std::size_t i = 0; i < d; ++i) s.inc_w[k * d + i] += s.dW[i];
                    for (std::size_t j = 0; j < l; ++j) s.inc_z[k * l + j] += s.dZ[j];
                }
                const double t_next = t + hs;
                guard_state(s.x, opt.overflow_guard, p, t_next);
                guard_state(s.y, opt.overflow_guard, p, t_next);
                if (auxiliary) {
                    guard_state(s.xh, opt.overflow_guard, p, t_next);
                    guard_state(s.yh, opt.overflow_guard, p, t_next);
                }
            }
            record(k + 1);
        }

        PathRecord rec;
        rec.path_index = p;
        rec.grid = &grid;
        rec.dim = dim;
        rec.states = s.states;
        rec.d = d;
        rec.l = l;
        rec.dW = s.inc_w;
        rec.dZ = s.inc_z;
        observer(rec);
    });
}

} // namespace detail

/// Streams every simulated path of (X^eps, Y^eps) to `observer`.
///
/// Path p uses stream p of `streams`, so results do not depend on the worker count. The
/// observer runs concurrently for distinct paths and must only write path-indexed slots.
template <class Observer>
void for_each_slow_fast_path(const SlowFastSystem& sys, double eps, const TimeGrid& grid,
                             const StreamFamily& streams, std::size_t n_paths, Observer&& observer,
                             const SimulationOptions& opt = {}) {
    detail::run_slow_fast(sys, eps, grid, streams, n_paths, std::forward<Observer>(observer), opt, false);
}

/// Streams (X, Y, Xhat, Yhat) where the hatted pair is the window-frozen auxiliary process
/// driven by the same increments as the true path.
template <class Observer>
void for_each_auxiliary_path(const SlowFastSystem& sys, double eps, const TimeGrid& grid,
                             const StreamFamily& streams, std::size_t n_paths, Observer&& observer,
                             const SimulationOptions& opt = {}) {
    detail::run_slow_fast(sys, eps, grid, streams, n_paths, std::forward<Observer>(observer), opt, true);
}

inline PathBundle simulate_slow_fast(const SlowFastSystem& sys, double eps, const TimeGrid& grid,
                                     const StreamFamily& streams, std::size_t n_paths,
                                     const SimulationOptions& opt = {}) {
    PathBundle bundle(grid, n_paths, sys.labels());
    for_each_slow_fast_path(sys, eps, grid, streams, n_paths, [&](const PathRecord& r) { bundle.store(r); }, opt);
    return bundle;
}

inline PathBundle simulate_auxiliary(const SlowFastSystem& sys, double eps, const TimeGrid& grid,
                                     const StreamFamily& streams, std::size_t n_paths,
                                     const SimulationOptions& opt = {}) {
    PathBundle bundle(grid, n_paths, sys.labels(true));
    for_each_auxiliary_path(sys, eps, grid, streams, n_paths, [&](const PathRecord& r) { bundle.store(r); }, opt);
    return bundle;
}

} // namespace msde
