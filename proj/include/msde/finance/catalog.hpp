#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "msde/engine/catalog.hpp"
#include "msde/finance/lsv.hpp"

namespace msde::catalog {

struct LSVSetup {
    LSVModel model;
    MeasureChange measure;
};

/// H = 0.05, r = 0.02, F = 0.25 + 0.05 tanh y, B = -2y, C = 1, rho = 0.3, gamma = 0.1, s0 = 1.
/// Bounds: M1 = 0.2, M2 = 0.3, beta = 2.
inline LSVSetup lsv_tanh(const Params& p = {}) {
    reject_unknown(p, {"H", "r", "F0", "F1", "kappa", "c", "rho", "gamma", "s0", "y0", "T"}, "lsv-tanh");
    const double H = param(p, "H", 0.05);
    const double r = param(p, "r", 0.02);
    const double F0 = param(p, "F0", 0.25);
    const double F1 = param(p, "F1", 0.05);
    const double kappa = param(p, "kappa", 2.0);
    const double c = param(p, "c", 1.0);
    require(F0 - std::abs(F1) > 0.0, "lsv-tanh needs F0 > |F1| so that F stays positive",
            ErrorCode::DegenerateVolatility);

    LSVSetup s;
    LSVModel& m = s.model;
    m.name = "lsv-tanh";
    RegularityConstants kh;
    kh.lipschitz = 0.0;
    kh.holder_time = 1.0;
    kh.sublinear = std::abs(H);
    m.H = scalar_field("H", [H](double, double, double) { return H; }, kh);
    RegularityConstants kf;
    kf.lipschitz = std::abs(F1);
    kf.holder_time = 1.0;
    kf.sublinear = F0 + std::abs(F1);
    m.F = scalar_field("F0+F1*tanh(y)", [F0, F1](double, double, double y) { return F0 + F1 * std::tanh(y); }, kf);
    auto fast = ou_linear(kappa, c);
    m.B = fast.B;
    m.C = fast.C;
    m.rho = param(p, "rho", 0.3);
    m.s0 = param(p, "s0", 1.0);
    m.y0 = param(p, "y0", 0.0);
    m.horizon = param(p, "T", 1.0);
    m.bounds.M = std::max(std::abs(H), std::abs(c));
    m.bounds.M1 = F0 - std::abs(F1);
    m.bounds.M2 = F0 + std::abs(F1);
    m.bounds.L = std::max({kappa, std::abs(F1)});
    m.bounds.gamma_time = 1.0;
    m.bounds.beta = kappa;
    s.measure = constant_measure_change(r, param(p, "gamma", 0.1));
    return s;
}

/// Names accepted by system_by_name.
inline std::vector<std::string> system_names() { return {"ref-ou", "ou-linear", "zero", "constant", "lsv-tanh"}; }

/// Slow-fast system from the catalog. For lsv-tanh this is the risk-neutral log-price system.
inline SlowFastSystem system_by_name(const std::string& name, const Params& p = {}) {
    if (name == "ref-ou") return ref_ou(p);
    if (name == "ou-linear") return ou_linear_system(p);
    if (name == "zero") return zero_system(1, 1, p);
    if (name == "constant") return constant_system(p);
    if (name == "lsv-tanh") {
        auto s = lsv_tanh(p);
        return risk_neutralize(s.model, s.measure);
    }
    std::string list;
    for (const auto& n : system_names()) list += (list.empty() ? "" : ", ") + n;
    throw Error(ErrorCode::InvalidArgument, "unknown model '" + name + "' (available: " + list + ")");
}

} // namespace msde::catalog
