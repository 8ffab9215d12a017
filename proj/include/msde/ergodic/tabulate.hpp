#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msde/core/parallel.hpp"
#include "msde/core/rng.hpp"
#include "msde/engine/system.hpp"
#include "msde/ergodic/averaged_model.hpp"
#include "msde/ergodic/frozen.hpp"
#include "msde/ergodic/psd_sqrt.hpp"

namespace msde {

struct TabulateParams {
    ErgodicParams ergodic;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    /// Initial fast state of every frozen trajectory; empty uses the system's y0.
    std::vector<double> y_init;
};

/// b_bar and a_bar at one (t, x) from a single frozen trajectory, plus the PSD root.
inline AveragedNode estimate_averaged_node(const SlowFastSystem& sys, double t, std::span<const double> x,
                                           std::span<const double> y_init, const ErgodicParams& params,
                                           RngStream& rng) {
    const std::size_t d = sys.slow_dim();
    FrozenEquation eq = FrozenEquation::of(sys, t, std::vector<double>(x.begin(), x.end()));
    detail::require_ergodic_horizon(eq, params);
    const std::vector<double> xv(x.begin(), x.end());
    std::vector<double> s(d * d);
    Integrand f = [&, s](std::span<const double> y, std::span<double> out) mutable {
        sys.b.eval(t, xv, y, out.first(d));
        sys.sigma.eval(t, xv, y, s);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < d; ++k) acc += s[i * d + k] * s[j * d + k];
                out[d + i * d + j] = 0.5 * acc;
            }
        }
    };
    TimeAverage avg = ergodic_average(eq, y_init, params, rng, f, d + d * d);
    AveragedNode node;
    node.bbar.assign(avg.mean.begin(), avg.mean.begin() + static_cast<std::ptrdiff_t>(d));
    node.se_bbar.assign(avg.std_error.begin(), avg.std_error.begin() + static_cast<std::ptrdiff_t>(d));
    std::vector<double> abar(avg.mean.begin() + static_cast<std::ptrdiff_t>(d), avg.mean.end());
    node.se_abar.assign(avg.std_error.begin() + static_cast<std::ptrdiff_t>(d), avg.std_error.end());
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) {
            double m = 0.5 * (abar[i * d + j] + abar[j * d + i]);
            abar[i * d + j] = abar[j * d + i] = m;
            double e = 0.5 * (node.se_abar[i * d + j] + node.se_abar[j * d + i]);
            node.se_abar[i * d + j] = node.se_abar[j * d + i] = e;
        }
    }
    node.sigmabar = psd_sqrt(abar, d);
    node.nonstationary = avg.nonstationary;
    return node;
}

/// Averaged model on the grid t_nodes x x_nodes[0] x ... x x_nodes[d-1]. Node i uses stream i of
/// a family derived from `params.seed`, so the table does not depend on the worker count.
inline AveragedModel tabulate_averaged_model(const SlowFastSystem& sys, std::vector<double> t_nodes,
                                             std::vector<std::vector<double>> x_nodes, const TabulateParams& params) {
    sys.validate();
    require(x_nodes.size() == sys.slow_dim(), "need one node axis per slow dimension");
    auto check_axis = [](const std::vector<double>& a, const char* what) {
        require(!a.empty(), std::string(what) + " node grid is empty");
        require(std::is_sorted(a.begin(), a.end()), std::string(what) + " node grid is not sorted");
    };
    check_axis(t_nodes, "t");
    for (const auto& a : x_nodes) check_axis(a, "x");
    const std::vector<double> y_init = params.y_init.empty() ? sys.y0 : params.y_init;
    require(y_init.size() == sys.fast_dim(), "initial fast state has the wrong dimension");

    std::size_t count = t_nodes.size();
    for (const auto& a : x_nodes) count *= a.size();
    std::vector<std::vector<double>> coords(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t r = i;
        std::vector<double> c(1 + x_nodes.size());
        for (std::size_t k = c.size(); k-- > 0;) {
            const auto& a = k == 0 ? t_nodes : x_nodes[k - 1];
            c[k] = a[r % a.size()];
            r /= a.size();
        }
        coords[i] = std::move(c);
    }

    const StreamFamily streams = StreamFamily(params.seed).derive("tabulate");
    std::vector<AveragedNode> nodes(count);
    parallel_for(count, params.workers, [&](unsigned, std::size_t i) {
        RngStream rng = streams.stream(i);
        const auto& c = coords[i];
        try {
            nodes[i] = estimate_averaged_node(sys, c[0], std::span(c).subspan(1), y_init, params.ergodic, rng);
        } catch (const Error& e) {
            std::string where = "t=" + std::to_string(c[0]);
            for (std::size_t k = 1; k < c.size(); ++k) where += ", x" + std::to_string(k) + "=" + std::to_string(c[k]);
            throw Error(e.code(), "averaged node (" + where + "): " + e.what());
        }
    }, 1);

    AveragedModel model = AveragedModel::tabulated(std::move(t_nodes), std::move(x_nodes), std::move(nodes));
    model.metadata()["system"] = sys.name;
    model.metadata()["seed"] = std::to_string(params.seed);
    return model;
}

} // namespace msde
