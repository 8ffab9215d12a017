#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "msde/core/error.hpp"

namespace msde {

/// Uniform grid t0 < t0 + h < ... < t_end.
class TimeGrid {
public:
    TimeGrid(double t0, double t_end, std::size_t n_steps)
        : t0_(t0), t_end_(t_end), n_steps_(n_steps),
          h_(n_steps == 0 ? 0.0 : (t_end - t0) / static_cast<double>(n_steps)) {
        require(std::isfinite(t0) && std::isfinite(t_end), "time grid bounds must be finite");
        if (n_steps == 0) {
            require(t_end == t0, "a grid without steps must have t_end == t0");
        } else {
            require(t_end > t0, "time grid needs t_end > t0");
        }
    }

    /// Grid with step h; (t_end - t0)/h must be an integer to 1e-9 relative.
    static TimeGrid with_step(double t0, double t_end, double h) {
        require(h > 0.0 && std::isfinite(h), "time step must be positive");
        double ratio = (t_end - t0) / h;
        double n = std::round(ratio);
        require(n >= 1.0 && std::abs(ratio - n) <= 1e-9 * std::max(1.0, n),
                "step " + std::to_string(h) + " does not divide [" + std::to_string(t0) + ", " +
                    std::to_string(t_end) + "]");
        return TimeGrid(t0, t_end, static_cast<std::size_t>(n));
    }

    double t0() const noexcept { return t0_; }
    double t_end() const noexcept { return t_end_; }
    double step() const noexcept { return h_; }
    std::size_t n_steps() const noexcept { return n_steps_; }
    std::size_t n_nodes() const noexcept { return n_steps_ + 1; }
    double horizon() const noexcept { return t_end_ - t0_; }

    double time(std::size_t k) const noexcept {
        return k == n_steps_ ? t_end_ : t0_ + static_cast<double>(k) * h_;
    }

    /// Index of the node closest to t (clamped to the grid).
    std::size_t nearest_node(double t) const noexcept {
        if (n_steps_ == 0 || t <= t0_) return 0;
        if (t >= t_end_) return n_steps_;
        return static_cast<std::size_t>(std::lround((t - t0_) / h_));
    }

    bool operator==(const TimeGrid&) const = default;

private:
    double t0_;
    double t_end_;
    std::size_t n_steps_;
    double h_;
};

} // namespace msde
