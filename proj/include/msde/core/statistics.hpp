#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "msde/core/error.hpp"

namespace msde {

struct MonteCarloEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n_samples = 0;

    /// Half-width of the symmetric k-sigma interval.
    double band(double k = 3.0) const noexcept { return k * std_error; }
};

/// SE of the difference of two independent estimates.
inline double combined_se(const MonteCarloEstimate& a, const MonteCarloEstimate& b) noexcept {
    return std::hypot(a.std_error, b.std_error);
}

inline MonteCarloEstimate mc_estimate(std::span<const double> samples) {
    const std::size_t n = samples.size();
    if (n < 2) {
        throw Error(ErrorCode::InsufficientSamples, "need at least 2 samples, got " + std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(samples[i])) {
            throw Error(ErrorCode::NonFiniteSample, "sample " + std::to_string(i) + " is not finite");
        }
    }
    auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
    if (*lo == *hi) return {*lo, 0.0, n};

    double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : samples) ss += (v - mean) * (v - mean);
    double sd = std::sqrt(ss / static_cast<double>(n - 1));
    return {mean, sd / std::sqrt(static_cast<double>(n)), n};
}

/// Two-sample Kolmogorov-Smirnov statistic sup_x |F_a(x) - F_b(x)|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    require(!a.empty() && !b.empty(), "KS statistic needs non-empty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

/// Asymptotic 1% critical value of the two-sample KS statistic.
inline double ks_critical_1pct(std::size_t n, std::size_t m) {
    return 1.63 * std::sqrt((static_cast<double>(n) + static_cast<double>(m)) /
                            (static_cast<double>(n) * static_cast<double>(m)));
}

/// Least-squares slope of y against x.
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size() && x.size() >= 2, "regression needs two or more points");
    const double n = static_cast<double>(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    require(sxx > 0.0, "regression abscissae are all equal");
    return sxy / sxx;
}

/// Empirical quantile with linear interpolation between order statistics (sorted input).
inline double sorted_quantile(std::span<const double> sorted, double q) {
    require(!sorted.empty(), "quantile of an empty sample");
    double pos = q * static_cast<double>(sorted.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = std::min(lo + 1, sorted.size() - 1);
    double w = pos - static_cast<double>(lo);
    return (1.0 - w) * sorted[lo] + w * sorted[hi];
}

} // namespace msde
