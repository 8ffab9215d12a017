#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msde/core/error.hpp"

namespace msde {

inline constexpr double psd_tolerance = 1e-10;

/// Symmetric PSD root S of 2a, i.e. S = S^T >= 0 and S S = 2a. `a` is d x d row-major.
///
/// Asymmetry above `tol * (1 + |a|_max)` raises NotSymmetric; eigenvalues of a below -tol raise
/// NotPSD; eigenvalues in [-tol, 0) are clamped to zero.
inline std::vector<double> psd_sqrt(std::span<const double> a, std::size_t d, double tol = psd_tolerance) {
    require(d > 0 && a.size() == d * d, "psd_sqrt needs a square matrix");
    Eigen::MatrixXd m(d, d);
    double scale = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            m(i, j) = a[i * d + j];
            require(std::isfinite(m(i, j)), "psd_sqrt input is not finite", ErrorCode::NonFiniteSample);
            scale = std::max(scale, std::abs(m(i, j)));
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) {
            double gap = std::abs(m(i, j) - m(j, i));
            if (gap > tol * (1.0 + scale)) {
                throw Error(ErrorCode::NotSymmetric, "matrix asymmetry " + std::to_string(gap) + " at (" +
                                                         std::to_string(i) + "," + std::to_string(j) + ")");
            }
        }
    }
    Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    require(eig.info() == Eigen::Success, "eigen decomposition failed", ErrorCode::NotPSD);
    Eigen::VectorXd lambda = eig.eigenvalues();
    for (Eigen::Index k = 0; k < lambda.size(); ++k) {
        if (lambda(k) < -tol) {
            throw Error(ErrorCode::NotPSD, "eigenvalue " + std::to_string(lambda(k)) + " below -" + std::to_string(tol));
        }
        lambda(k) = std::sqrt(2.0 * std::max(0.0, lambda(k)));
    }
    const Eigen::MatrixXd& V = eig.eigenvectors();
    Eigen::MatrixXd root = V * lambda.asDiagonal() * V.transpose();
    std::vector<double> out(d * d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = 0.5 * (root(i, j) + root(j, i));
    }
    return out;
}

} // namespace msde
