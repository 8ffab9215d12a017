#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "msde/core/error.hpp"
#include "msde/core/time_grid.hpp"

namespace msde {

/// One simulated path as seen by an observer: states at every grid node, and (optionally)
/// the driving increments aggregated per grid step.
struct PathRecord {
    std::size_t path_index = 0;
    const TimeGrid* grid = nullptr;
    std::size_t dim = 0;
    std::span<const double> states; ///< n_nodes x dim
    std::size_t d = 0;
    std::size_t l = 0;
    std::span<const double> dW; ///< n_steps x d, empty unless requested
    std::span<const double> dZ; ///< n_steps x l, empty unless requested

    double at(std::size_t node, std::size_t component) const noexcept { return states[node * dim + component]; }
    std::span<const double> node(std::size_t k) const noexcept { return states.subspan(k * dim, dim); }
    std::size_t n_nodes() const noexcept { return states.size() / dim; }
};

/// Trajectories on a shared grid, laid out (path, node, component).
class PathBundle {
public:
    PathBundle(TimeGrid grid, std::size_t n_paths, std::vector<std::string> labels)
        : grid_(grid), n_paths_(n_paths), labels_(std::move(labels)),
          values_(n_paths * grid_.n_nodes() * labels_.size(), 0.0) {
        require(!labels_.empty(), "a path bundle needs at least one component");
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t n_paths() const noexcept { return n_paths_; }
    std::size_t dim() const noexcept { return labels_.size(); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }

    /// Index of the component with this label; throws if absent.
    std::size_t component(const std::string& label) const {
        for (std::size_t c = 0; c < labels_.size(); ++c) {
            if (labels_[c] == label) return c;
        }
        throw Error(ErrorCode::InvalidArgument, "no component labelled " + label);
    }

    double& at(std::size_t path, std::size_t node, std::size_t c) noexcept {
        return values_[(path * grid_.n_nodes() + node) * dim() + c];
    }
    double at(std::size_t path, std::size_t node, std::size_t c) const noexcept {
        return values_[(path * grid_.n_nodes() + node) * dim() + c];
    }

    std::span<double> path(std::size_t p) noexcept {
        return std::span(values_).subspan(p * grid_.n_nodes() * dim(), grid_.n_nodes() * dim());
    }
    std::span<const double> path(std::size_t p) const noexcept {
        return std::span(values_).subspan(p * grid_.n_nodes() * dim(), grid_.n_nodes() * dim());
    }

    /// Single component of one path, copied out.
    std::vector<double> series(std::size_t p, std::size_t c) const {
        std::vector<double> out(grid_.n_nodes());
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = at(p, k, c);
        return out;
    }

    std::vector<double> terminal(std::size_t c) const {
        std::vector<double> out(n_paths_);
        for (std::size_t p = 0; p < n_paths_; ++p) out[p] = at(p, grid_.n_steps(), c);
        return out;
    }

    bool all_finite() const noexcept {
        for (double v : values_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    std::span<const double> raw() const noexcept { return values_; }

    void store(const PathRecord& rec) {
        auto dst = path(rec.path_index);
        std::copy(rec.states.begin(), rec.states.end(), dst.begin());
    }

private:
    TimeGrid grid_;
    std::size_t n_paths_;
    std::vector<std::string> labels_;
    std::vector<double> values_;
};

} // namespace msde
