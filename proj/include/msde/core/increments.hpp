#pragma once

#include <cmath>
#include <vector>

#include "msde/core/correlation.hpp"
#include "msde/core/rng.hpp"
#include "msde/core/time_grid.hpp"

namespace msde {

/// Correlated Brownian increments over a grid, row-major (step, component).
struct Increments {
    std::size_t n_steps = 0;
    std::size_t d = 0;
    std::size_t l = 0;
    std::vector<double> dW;      ///< n_steps x d
    std::vector<double> dW_fast; ///< n_steps x l, the W~ increments
    std::vector<double> dZ;      ///< n_steps x l, the independent part
};

/// Draws one step: d slow normals first, then l independent normals, each scaled by sqrt(h).
/// Every simulator in the library consumes a stream in exactly this order.
inline void draw_step(const CorrelationSpec& spec, double sqrt_h, RngStream& stream, std::span<double> dW,
                      std::span<double> dZ, std::span<double> dW_fast) {
    stream.normals(dW, sqrt_h);
    stream.normals(dZ, sqrt_h);
    spec.mix(dW, dZ, dW_fast);
}

inline Increments sample_increments(const CorrelationSpec& spec, const TimeGrid& grid, RngStream& stream) {
    Increments inc;
    inc.n_steps = grid.n_steps();
    inc.d = spec.slow_dim();
    inc.l = spec.fast_dim();
    inc.dW.resize(inc.n_steps * inc.d);
    inc.dZ.resize(inc.n_steps * inc.l);
    inc.dW_fast.resize(inc.n_steps * inc.l);
    const double sqrt_h = std::sqrt(grid.step());
    for (std::size_t k = 0; k < inc.n_steps; ++k) {
        draw_step(spec, sqrt_h, stream, std::span(inc.dW).subspan(k * inc.d, inc.d),
                  std::span(inc.dZ).subspan(k * inc.l, inc.l), std::span(inc.dW_fast).subspan(k * inc.l, inc.l));
    }
    return inc;
}

} // namespace msde
