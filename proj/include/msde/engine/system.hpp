#pragma once

#include <optional>
#include <string>
#include <vector>

#include "msde/core/correlation.hpp"
#include "msde/engine/coefficient.hpp"

namespace msde {

/// dX = b dt + sigma dW
/// dY = (eps^-1 B + eps^-eta D) dt + eps^-1/2 C dW~
///
/// with W~ built from W through `correlation`. D is optional.
struct SlowFastSystem {
    std::string name;
    CoefficientField b;     ///< d x 1
    CoefficientField sigma; ///< d x d
    CoefficientField B;     ///< l x 1
    CoefficientField C;     ///< l x l
    std::optional<CoefficientField> D; ///< l x 1
    double eta = 0.0;
    CorrelationSpec correlation;
    std::vector<double> x0;
    std::vector<double> y0;
    double horizon = 1.0;

    std::size_t slow_dim() const noexcept { return x0.size(); }
    std::size_t fast_dim() const noexcept { return y0.size(); }

    /// Throws InvalidArgument describing the first inconsistency found.
    void validate() const {
        const std::size_t d = slow_dim();
        const std::size_t l = fast_dim();
        require(d > 0 && l > 0, "system " + name + " needs non-empty x0 and y0");
        auto check = [&](const CoefficientField& f, const char* role, std::size_t rows, std::size_t cols) {
            require(static_cast<bool>(f), std::string("system ") + name + " is missing " + role);
            require(f.rows() == rows && f.cols() == cols,
                    std::string(role) + " (" + f.name() + ") has shape " + std::to_string(f.rows()) + "x" +
                        std::to_string(f.cols()) + ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
            require(f.slow_dim() == d && f.fast_dim() == l,
                    std::string(role) + " (" + f.name() + ") is declared for different state dimensions");
        };
        check(b, "b", d, 1);
        check(sigma, "sigma", d, d);
        check(B, "B", l, 1);
        check(C, "C", l, l);
        if (D) {
            check(*D, "D", l, 1);
            require(eta >= 0.0 && eta < 1.0, "perturbation exponent eta must lie in [0, 1)");
        }
        require(correlation.slow_dim() == d && correlation.fast_dim() == l,
                "correlation spec dimensions do not match the system");
        require(horizon > 0.0, "horizon must be positive");
        for (double v : x0) require(std::isfinite(v), "x0 must be finite");
        for (double v : y0) require(std::isfinite(v), "y0 must be finite");
    }

    /// Component labels used in path bundles: X or X1..Xd, then Y or Y1..Yl.
    std::vector<std::string> labels(bool auxiliary = false) const {
        auto names = [](const std::string& stem, std::size_t n) {
            std::vector<std::string> out;
            if (n == 1) {
                out.push_back(stem);
            } else {
                for (std::size_t i = 1; i <= n; ++i) out.push_back(stem + std::to_string(i));
            }
            return out;
        };
        std::vector<std::string> out = names("X", slow_dim());
        for (auto& s : names("Y", fast_dim())) out.push_back(s);
        if (auxiliary) {
            for (auto& s : names("Xhat", slow_dim())) out.push_back(s);
            for (auto& s : names("Yhat", fast_dim())) out.push_back(s);
        }
        return out;
    }
};

} // namespace msde
