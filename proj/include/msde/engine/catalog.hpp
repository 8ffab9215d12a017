#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>

#include "msde/engine/system.hpp"

namespace msde::catalog {

using Params = std::map<std::string, double>;

inline double param(const Params& p, const std::string& key, double fallback) {
    auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

inline void reject_unknown(const Params& p, const std::set<std::string>& allowed, const std::string& family) {
    for (const auto& [key, value] : p) {
        if (!allowed.count(key)) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
            throw Error(ErrorCode::InvalidArgument,
                        "unknown parameter '" + key + "' for " + family + " (allowed: " + list + ")");
        }
    }
}

/// Fast pair B = -kappa (y - mean), C = c. Dissipative with beta = kappa.
struct FastPair {
    CoefficientField B;
    CoefficientField C;
};

inline FastPair ou_linear(double kappa, double c, double mean = 0.0) {
    RegularityConstants kb;
    kb.lipschitz = kappa;
    kb.holder_time = 1.0;
    kb.sublinear = kappa * (1.0 + std::abs(mean));
    kb.dissipativity = kappa;
    RegularityConstants kc;
    kc.lipschitz = 0.0;
    kc.holder_time = 1.0;
    kc.sublinear = std::abs(c);
    return {scalar_field("ou-drift", [kappa, mean](double, double, double y) { return -kappa * (y - mean); }, kb),
            scalar_field("ou-diffusion", [c](double, double, double) { return c; }, kc)};
}

/// b = sin(y) - x, sigma = sqrt(2 + cos 2y), B = -2y, C = 1, rho = 0.3, x0 = 1, y0 = 0, T = 1.
inline SlowFastSystem ref_ou(const Params& p = {}) {
    reject_unknown(p, {"rho", "x0", "y0", "T"}, "ref-ou");
    RegularityConstants kb;
    kb.lipschitz = 1.0;
    kb.holder_time = 1.0;
    kb.sublinear = 1.0;
    RegularityConstants ks;
    ks.lipschitz = 1.0;
    ks.holder_time = 1.0;
    ks.sublinear = std::sqrt(3.0);
    SlowFastSystem s;
    s.name = "ref-ou";
    s.b = scalar_field("sin(y)-x", [](double, double x, double y) { return std::sin(y) - x; }, kb);
    s.sigma = scalar_field("sqrt(2+cos2y)", [](double, double, double y) { return std::sqrt(2.0 + std::cos(2.0 * y)); }, ks);
    auto fast = ou_linear(2.0, 1.0);
    s.B = fast.B;
    s.C = fast.C;
    s.correlation = build_correlation(1, 1, {param(p, "rho", 0.3)});
    s.x0 = {param(p, "x0", 1.0)};
    s.y0 = {param(p, "y0", 0.0)};
    s.horizon = param(p, "T", 1.0);
    return s;
}

/// Slow Brownian-free system b = sigma = 0 with an OU fast pair; for frozen-equation work.
inline SlowFastSystem ou_linear_system(const Params& p = {}) {
    reject_unknown(p, {"kappa", "c", "mean", "x0", "y0", "T"}, "ou-linear");
    SlowFastSystem s;
    s.name = "ou-linear";
    s.b = zero_field("zero", 1, 1, 1, 1);
    s.sigma = zero_field("zero", 1, 1, 1, 1);
    auto fast = ou_linear(param(p, "kappa", 2.0), param(p, "c", 1.0), param(p, "mean", 0.0));
    s.B = fast.B;
    s.C = fast.C;
    s.correlation = independent_correlation(1, 1);
    s.x0 = {param(p, "x0", 0.0)};
    s.y0 = {param(p, "y0", 0.0)};
    s.horizon = param(p, "T", 1.0);
    return s;
}

inline SlowFastSystem zero_system(std::size_t d = 1, std::size_t l = 1, const Params& p = {}) {
    reject_unknown(p, {"x0", "y0", "T"}, "zero");
    SlowFastSystem s;
    s.name = "zero";
    s.b = zero_field("zero", d, l, d, 1);
    s.sigma = zero_field("zero", d, l, d, d);
    s.B = zero_field("zero", d, l, l, 1);
    s.C = zero_field("zero", d, l, l, l);
    s.correlation = independent_correlation(d, l);
    s.x0.assign(d, param(p, "x0", 0.5));
    s.y0.assign(l, param(p, "y0", -0.25));
    s.horizon = param(p, "T", 1.0);
    return s;
}

/// Constant slow coefficients b = mu, sigma = s next to an OU fast pair; averaging is the identity.
inline SlowFastSystem constant_system(const Params& p = {}) {
    reject_unknown(p, {"mu", "s", "rho", "x0", "y0", "T"}, "constant");
    SlowFastSystem s;
    s.name = "constant";
    s.b = constant_field("mu", 1, 1, 1, 1, {param(p, "mu", 0.1)});
    s.sigma = constant_field("s", 1, 1, 1, 1, {param(p, "s", 0.5)});
    auto fast = ou_linear(2.0, 1.0);
    s.B = fast.B;
    s.C = fast.C;
    s.correlation = build_correlation(1, 1, {param(p, "rho", 0.3)});
    s.x0 = {param(p, "x0", 0.0)};
    s.y0 = {param(p, "y0", 0.0)};
    s.horizon = param(p, "T", 1.0);
    return s;
}

} // namespace msde::catalog
