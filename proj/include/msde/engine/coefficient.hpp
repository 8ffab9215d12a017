#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msde/core/error.hpp"

namespace msde {

/// Declared regularity constants. They are metadata: samplers spot-check them,
/// nothing enforces them symbolically.
struct RegularityConstants {
    double lipschitz = std::numeric_limits<double>::quiet_NaN();   ///< L
    double holder_time = std::numeric_limits<double>::quiet_NaN(); ///< gamma_time
    double sublinear = std::numeric_limits<double>::quiet_NaN();   ///< M in |f| <= M(1 + |x| + |y|)
    std::optional<double> dissipativity;                           ///< beta, fast drift only
};

/// f(t, x, y) -> out, where out is rows x cols (row-major).
using FieldFunction =
    std::function<void(double t, std::span<const double> x, std::span<const double> y, std::span<double> out)>;

/// A named coefficient of a slow-fast system. Must be a pure function of its arguments:
/// simulators call it concurrently from several workers.
class CoefficientField {
public:
    CoefficientField() = default;

    CoefficientField(std::string name, std::size_t d, std::size_t l, std::size_t rows, std::size_t cols,
                     FieldFunction fn, RegularityConstants constants = {})
        : name_(std::move(name)), d_(d), l_(l), rows_(rows), cols_(cols), fn_(std::move(fn)),
          constants_(constants) {
        require(rows_ > 0 && cols_ > 0, "coefficient " + name_ + " must have a non-empty output");
        require(static_cast<bool>(fn_), "coefficient " + name_ + " has no function");
    }

    const std::string& name() const noexcept { return name_; }
    std::size_t slow_dim() const noexcept { return d_; }
    std::size_t fast_dim() const noexcept { return l_; }
    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return rows_ * cols_; }
    const RegularityConstants& constants() const noexcept { return constants_; }
    RegularityConstants& constants() noexcept { return constants_; }
    explicit operator bool() const noexcept { return static_cast<bool>(fn_); }

    void eval(double t, std::span<const double> x, std::span<const double> y, std::span<double> out) const {
        fn_(t, x, y, out);
    }

    std::vector<double> operator()(double t, std::span<const double> x, std::span<const double> y) const {
        std::vector<double> out(size());
        fn_(t, x, y, out);
        return out;
    }

    /// Convenience for 1x1 fields of a (d=1, l=1) system.
    double scalar(double t, double x, double y) const {
        double out = 0.0;
        fn_(t, std::span(&x, 1), std::span(&y, 1), std::span(&out, 1));
        return out;
    }

private:
    std::string name_;
    std::size_t d_ = 0;
    std::size_t l_ = 0;
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    FieldFunction fn_;
    RegularityConstants constants_;
};

inline CoefficientField zero_field(std::string name, std::size_t d, std::size_t l, std::size_t rows,
                                   std::size_t cols) {
    RegularityConstants k;
    k.lipschitz = 0.0;
    k.sublinear = 0.0;
    return CoefficientField(
        std::move(name), d, l, rows, cols,
        [](double, std::span<const double>, std::span<const double>, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
        },
        k);
}

inline CoefficientField constant_field(std::string name, std::size_t d, std::size_t l, std::size_t rows,
                                       std::size_t cols, std::vector<double> value) {
    require(value.size() == rows * cols, "constant field " + name + " has the wrong number of entries");
    RegularityConstants k;
    k.lipschitz = 0.0;
    double norm = 0.0;
    for (double v : value) norm += v * v;
    k.sublinear = std::sqrt(norm);
    return CoefficientField(
        std::move(name), d, l, rows, cols,
        [value = std::move(value)](double, std::span<const double>, std::span<const double>, std::span<double> out) {
            std::copy(value.begin(), value.end(), out.begin());
        },
        k);
}

/// Wraps a scalar function g(t, x, y) as a 1x1 field of a (d=1, l=1) system.
template <class F>
CoefficientField scalar_field(std::string name, F g, RegularityConstants constants = {}) {
    return CoefficientField(
        std::move(name), 1, 1, 1, 1,
        [g = std::move(g)](double t, std::span<const double> x, std::span<const double> y, std::span<double> out) {
            out[0] = g(t, x[0], y[0]);
        },
        constants);
}

} // namespace msde
