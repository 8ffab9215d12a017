#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "msde/core/parallel.hpp"
#include "msde/core/rng.hpp"
#include "msde/ergodic/averaged_model.hpp"
#include "msde/ergodic/frozen.hpp"
#include "msde/ergodic/psd_sqrt.hpp"
#include "msde/ergodic/tabulate.hpp"
#include "msde/finance/lsv.hpp"

namespace msde {

/// Rbar(t, s) = int r dmu^{t, log s} and Fbar(t, s) = sqrt(int F^2 dmu^{t, log s}) on the
/// (t, s) nodes. The returned model is in price coordinates: its slow axis holds s, `bbar`
/// holds Rbar and `sigmabar` holds Fbar.
inline AveragedModel averaged_local_vol(const LSVModel& lsv, const MeasureChange& mc, std::vector<double> t_nodes,
                                        std::vector<double> s_nodes, const TabulateParams& params) {
    lsv.check_shapes();
    require(!t_nodes.empty() && !s_nodes.empty(), "node grids must be non-empty");
    require(std::is_sorted(t_nodes.begin(), t_nodes.end()) && std::is_sorted(s_nodes.begin(), s_nodes.end()),
            "node grids must be sorted");
    for (double s : s_nodes) require(s > 0.0, "price nodes must be positive");
    const std::vector<double> y_init = params.y_init.empty() ? std::vector<double>{lsv.y0} : params.y_init;
    const std::size_t count = t_nodes.size() * s_nodes.size();
    const StreamFamily streams = StreamFamily(params.seed).derive("local-vol");
    std::vector<AveragedNode> nodes(count);
    parallel_for(count, params.workers, [&](unsigned, std::size_t i) {
        const double t = t_nodes[i / s_nodes.size()];
        const double s = s_nodes[i % s_nodes.size()];
        const double x = std::log(s);
        try {
            FrozenEquation eq{lsv.B, lsv.C, t, {x}};
            detail::require_ergodic_horizon(eq, params.ergodic);
            RngStream rng = streams.stream(i);
            Integrand f = [&](std::span<const double> y, std::span<double> out) {
                out[0] = mc.r.scalar(t, x, y[0]);
                double v = lsv.F.scalar(t, x, y[0]);
                out[1] = 0.5 * v * v;
            };
            TimeAverage avg = ergodic_average(eq, y_init, params.ergodic, rng, f, 2);
            AveragedNode node;
            node.bbar = {avg.mean[0]};
            node.se_bbar = {avg.std_error[0]};
            node.sigmabar = psd_sqrt(std::span(&avg.mean[1], 1), 1);
            node.se_abar = {avg.std_error[1]};
            node.nonstationary = avg.nonstationary;
            nodes[i] = std::move(node);
        } catch (const Error& e) {
            throw Error(e.code(), "local-vol node (t=" + std::to_string(t) + ", s=" + std::to_string(s) + "): " + e.what());
        }
    }, 1);
    AveragedModel model = AveragedModel::tabulated(std::move(t_nodes), {std::move(s_nodes)}, std::move(nodes));
    model.metadata()["coordinates"] = "price";
    model.metadata()["bbar"] = "Rbar";
    model.metadata()["sigmabar"] = "Fbar";
    model.metadata()["system"] = lsv.name;
    return model;
}

/// dS = Rbar(t, S) S dt + Fbar(t, S) S dW from a price-coordinate averaged model.
class LocalVolModel {
public:
    LocalVolModel() = default;
    LocalVolModel(AveragedModel table, double s0) : table_(std::move(table)), s0_(s0) {
        require(table_.dim() == 1, "local-vol model needs a one-dimensional table");
        require(s0 > 0.0, "s0 must be positive");
    }

    const AveragedModel& table() const noexcept { return table_; }
    double s0() const noexcept { return s0_; }

    /// Writes (Rbar, Fbar) at (t, s); returns true outside the node hull.
    bool eval(double t, double s, double& rate, double& vol) const {
        return table_.eval(t, std::span(&s, 1), std::span(&rate, 1), std::span(&vol, 1));
    }

    /// The same dynamics in log coordinates: b = Rbar - Fbar^2/2, sigma = Fbar at s = e^x.
    AveragedModel log_model() const {
        AveragedModel table = table_;
        auto b = [table](double t, std::span<const double> x, std::span<double> out) {
            double s = std::exp(x[0]), r = 0.0, f = 0.0;
            table.eval(t, std::span(&s, 1), std::span(&r, 1), std::span(&f, 1));
            out[0] = r - 0.5 * f * f;
        };
        auto sig = [table](double t, std::span<const double> x, std::span<double> out) {
            double s = std::exp(x[0]), r = 0.0;
            table.eval(t, std::span(&s, 1), std::span(&r, 1), out);
        };
        return AveragedModel::closed_form(1, b, sig, "local-vol/log");
    }

private:
    AveragedModel table_;
    double s0_ = 1.0;
};

} // namespace msde
