#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "msde/core/error.hpp"

namespace msde {

/// Correlation between the slow driver W (dimension d) and the fast driver W~ (dimension l).
///
/// W~^j = sum_i rho_ij W^i + w_j Z^j with w_j = sqrt(1 - sum_i rho_ij^2) and Z independent of W.
/// Columns must have squared norm <= 1 and be mutually orthogonal, which makes W~ a standard
/// l-dimensional Brownian motion.
class CorrelationSpec {
public:
    static constexpr double tolerance = 1e-12;

    CorrelationSpec() = default;

    std::size_t slow_dim() const noexcept { return d_; }
    std::size_t fast_dim() const noexcept { return l_; }

    /// rho_ij, row-major d x l.
    double rho(std::size_t i, std::size_t j) const noexcept { return rho_[i * l_ + j]; }
    std::span<const double> rho() const noexcept { return rho_; }

    /// sqrt(1 - sum_i rho_ij^2), always in [0, 1].
    double residual_weight(std::size_t j) const noexcept { return residual_[j]; }
    std::span<const double> residual_weights() const noexcept { return residual_; }

    bool is_zero() const noexcept { return zero_; }

    /// dWt = rho^T dW + diag(w) dZ.
    void mix(std::span<const double> dW, std::span<const double> dZ, std::span<double> dWt) const noexcept {
        for (std::size_t j = 0; j < l_; ++j) {
            double acc = residual_[j] * dZ[j];
            if (!zero_) {
                for (std::size_t i = 0; i < d_; ++i) acc += rho_[i * l_ + j] * dW[i];
            }
            dWt[j] = acc;
        }
    }

    friend CorrelationSpec build_correlation(std::size_t d, std::size_t l, std::vector<double> rho);

private:
    std::size_t d_ = 0;
    std::size_t l_ = 0;
    std::vector<double> rho_;
    std::vector<double> residual_;
    bool zero_ = true;
};

/// Validates a row-major d x l correlation matrix.
inline CorrelationSpec build_correlation(std::size_t d, std::size_t l, std::vector<double> rho) {
    require(d > 0 && l > 0, "correlation needs positive dimensions");
    require(rho.size() == d * l, "correlation matrix has " + std::to_string(rho.size()) +
                                     " entries, expected " + std::to_string(d * l));
    for (double r : rho) {
        require(std::isfinite(r) && r > -1.0 && r < 1.0,
                "correlation entries must lie in (-1, 1), got " + std::to_string(r));
    }
    CorrelationSpec spec;
    spec.d_ = d;
    spec.l_ = l;
    spec.residual_.resize(l);
    for (std::size_t j = 0; j < l; ++j) {
        double norm2 = 0.0;
        for (std::size_t i = 0; i < d; ++i) norm2 += rho[i * l + j] * rho[i * l + j];
        if (norm2 > 1.0 + CorrelationSpec::tolerance) {
            throw Error(ErrorCode::ColumnNormViolation,
                        "column " + std::to_string(j) + " has squared norm " + std::to_string(norm2));
        }
        spec.residual_[j] = std::sqrt(std::max(0.0, 1.0 - norm2));
        for (std::size_t k = j + 1; k < l; ++k) {
            double cross = 0.0;
            for (std::size_t i = 0; i < d; ++i) cross += rho[i * l + j] * rho[i * l + k];
            if (std::abs(cross) > CorrelationSpec::tolerance) {
                throw Error(ErrorCode::OrthogonalityViolation,
                            "columns " + std::to_string(j) + " and " + std::to_string(k) +
                                " have inner product " + std::to_string(cross));
            }
        }
    }
    spec.zero_ = true;
    for (double r : rho) spec.zero_ = spec.zero_ && r == 0.0;
    spec.rho_ = std::move(rho);
    return spec;
}

/// Uncorrelated drivers.
inline CorrelationSpec independent_correlation(std::size_t d, std::size_t l) {
    return build_correlation(d, l, std::vector<double>(d * l, 0.0));
}

} // namespace msde
