#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "msde/core/correlation.hpp"
#include "msde/core/rng.hpp"
#include "msde/engine/coefficient.hpp"
#include "msde/engine/diagnostics.hpp"
#include "msde/engine/system.hpp"

namespace msde {

/// Declared bounds of an LSV model (metadata, spot-checked by validate_lsv).
struct LSVBounds {
    double M = std::numeric_limits<double>::quiet_NaN();  ///< |H| <= M, |C| <= M
    double M1 = std::numeric_limits<double>::quiet_NaN(); ///< F >= M1 > 0
    double M2 = std::numeric_limits<double>::quiet_NaN(); ///< F <= M2
    double L = std::numeric_limits<double>::quiet_NaN();
    double gamma_time = std::numeric_limits<double>::quiet_NaN();
    double beta = std::numeric_limits<double>::quiet_NaN();
};

/// dS = H S dt + F S dW, dY = eps^-1 B dt + eps^-1/2 C dW~, corr(W, W~) = rho.
///
/// One price and one fast factor. All fields are 1x1 on (d = 1, l = 1) and take the
/// log-price x = log s as their slow argument.
struct LSVModel {
    std::string name;
    CoefficientField H;
    CoefficientField F;
    CoefficientField B;
    CoefficientField C;
    double rho = 0.0;
    double s0 = 1.0;
    double y0 = 0.0;
    double horizon = 1.0;
    LSVBounds bounds;

    void check_shapes() const {
        for (const CoefficientField* f : {&H, &F, &B, &C}) {
            require(static_cast<bool>(*f), "LSV model " + name + " is missing a coefficient");
            require(f->rows() == 1 && f->cols() == 1 && f->slow_dim() == 1 && f->fast_dim() == 1,
                    "LSV coefficient " + f->name() + " must be scalar on one slow and one fast variable");
        }
        require(rho > -1.0 && rho < 1.0, "rho must lie in (-1, 1)");
        require(s0 > 0.0, "s0 must be positive");
        require(horizon > 0.0, "horizon must be positive");
    }
};

/// Short rate r(t, x, y) and market price of volatility risk gamma(t, x, y).
struct MeasureChange {
    CoefficientField r;
    CoefficientField gamma;
    double r_bound = std::numeric_limits<double>::quiet_NaN();

    /// theta = (H - r) / F.
    double theta(const LSVModel& m, double t, double x, double y) const {
        return (m.H.scalar(t, x, y) - r.scalar(t, x, y)) / m.F.scalar(t, x, y);
    }

    /// Lambda = rho theta + sqrt(1 - rho^2) gamma.
    double lambda(const LSVModel& m, double t, double x, double y) const {
        return m.rho * theta(m, t, x, y) + std::sqrt(1.0 - m.rho * m.rho) * gamma.scalar(t, x, y);
    }
};

inline MeasureChange constant_measure_change(double r, double gamma) {
    RegularityConstants k;
    k.lipschitz = 0.0;
    k.holder_time = 1.0;
    MeasureChange mc;
    k.sublinear = std::abs(r);
    mc.r = scalar_field("r", [r](double, double, double) { return r; }, k);
    k.sublinear = std::abs(gamma);
    mc.gamma = scalar_field("gamma", [gamma](double, double, double) { return gamma; }, k);
    mc.r_bound = std::abs(r);
    return mc;
}

struct LSVValidation {
    double F_min = 0.0;
    double F_max = 0.0;
    double beta_hat = 0.0;
};

/// Samples (t, x, y) on [0, T] x [-x_range, x_range] x [-y_range, y_range] and checks
/// M1 <= F <= M2 with M1 > 0, then scans dissipativity of (B, C).
/// Throws DegenerateVolatility if F drops below M1 and DissipativityViolated on a bad pair.
inline LSVValidation validate_lsv(const LSVModel& m, RngStream& rng, std::size_t n_samples = 4096,
                                  double x_range = 5.0, double y_range = 10.0) {
    m.check_shapes();
    require(m.bounds.M1 > 0.0, "LSV model needs a declared lower volatility bound M1 > 0",
            ErrorCode::DegenerateVolatility);
    LSVValidation v{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), 0.0};
    for (std::size_t i = 0; i < n_samples; ++i) {
        double t = rng.uniform(0.0, m.horizon);
        double x = rng.uniform(-x_range, x_range);
        double y = rng.uniform(-y_range, y_range);
        double f = m.F.scalar(t, x, y);
        v.F_min = std::min(v.F_min, f);
        v.F_max = std::max(v.F_max, f);
        if (!(f >= m.bounds.M1)) {
            throw Error(ErrorCode::DegenerateVolatility, "F = " + std::to_string(f) + " below M1 = " +
                                                             std::to_string(m.bounds.M1) + " at (t=" +
                                                             std::to_string(t) + ", x=" + std::to_string(x) +
                                                             ", y=" + std::to_string(y) + ")");
        }
    }
    if (!std::isnan(m.bounds.M2)) {
        require(v.F_max <= m.bounds.M2 * (1.0 + 1e-12), "F exceeds the declared upper bound M2");
    }
    v.beta_hat = check_dissipativity(m.B, m.C, box_sampler(1, 1, m.horizon, x_range, y_range), n_samples, rng);
    return v;
}

/// Log-price system under the objective measure: b = H - F^2/2, sigma = F, x0 = log s0.
inline SlowFastSystem to_log_system(const LSVModel& m) {
    m.check_shapes();
    SlowFastSystem s;
    s.name = m.name + "/log";
    RegularityConstants kb;
    const auto& kf = m.F.constants();
    const auto& kh = m.H.constants();
    kb.lipschitz = kh.lipschitz + 2.0 * m.bounds.M2 * kf.lipschitz;
    kb.holder_time = std::min(kh.holder_time, kf.holder_time);
    kb.sublinear = m.bounds.M + 0.5 * m.bounds.M2 * m.bounds.M2;
    s.b = scalar_field("H-F^2/2", [H = m.H, F = m.F](double t, double x, double y) {
        double f = F.scalar(t, x, y);
        return H.scalar(t, x, y) - 0.5 * f * f;
    }, kb);
    s.sigma = m.F;
    s.B = m.B;
    s.C = m.C;
    s.correlation = build_correlation(1, 1, {m.rho});
    s.x0 = {std::log(m.s0)};
    s.y0 = {m.y0};
    s.horizon = m.horizon;
    return s;
}

/// Log-price system under Q^gamma, simulated directly with the Q-Brownian drivers:
/// b = r - F^2/2, sigma = F, fast drift eps^-1 B + eps^-1/2 D with D = -C Lambda.
/// Throws DegenerateVolatility if F drops below M1 on the validation sampler.
inline SlowFastSystem risk_neutralize(const LSVModel& m, const MeasureChange& mc, std::uint64_t validation_seed = 0) {
    m.check_shapes();
    require(static_cast<bool>(mc.r) && static_cast<bool>(mc.gamma), "measure change needs r and gamma");
    RngStream rng(validation_seed, 0x5eed);
    require(m.bounds.M1 > 0.0, "risk-neutral pricing needs a declared M1 > 0", ErrorCode::DegenerateVolatility);
    for (std::size_t i = 0; i < 2048; ++i) {
        double t = rng.uniform(0.0, m.horizon), x = rng.uniform(-5.0, 5.0), y = rng.uniform(-10.0, 10.0);
        double f = m.F.scalar(t, x, y);
        if (!(f >= m.bounds.M1)) {
            throw Error(ErrorCode::DegenerateVolatility,
                        "F = " + std::to_string(f) + " below M1 = " + std::to_string(m.bounds.M1));
        }
    }
    SlowFastSystem s;
    s.name = m.name + "/risk-neutral";
    RegularityConstants kb;
    kb.sublinear = mc.r_bound + 0.5 * m.bounds.M2 * m.bounds.M2;
    s.b = scalar_field("r-F^2/2", [r = mc.r, F = m.F](double t, double x, double y) {
        double f = F.scalar(t, x, y);
        return r.scalar(t, x, y) - 0.5 * f * f;
    }, kb);
    s.sigma = m.F;
    s.B = m.B;
    s.C = m.C;
    s.D = scalar_field("-C*Lambda", [m, mc](double t, double x, double y) {
        return -m.C.scalar(t, x, y) * mc.lambda(m, t, x, y);
    });
    s.eta = 0.5;
    s.correlation = build_correlation(1, 1, {m.rho});
    s.x0 = {std::log(m.s0)};
    s.y0 = {m.y0};
    s.horizon = m.horizon;
    return s;
}

} // namespace msde
