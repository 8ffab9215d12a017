#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "msde/core/rng.hpp"
#include "msde/core/statistics.hpp"
#include "msde/engine/catalog.hpp"
#include "msde/engine/simulate.hpp"
#include "msde/ergodic/frozen.hpp"
#include "msde/ergodic/psd_sqrt.hpp"
#include "msde/ergodic/tabulate.hpp"
#include "msde/finance/catalog.hpp"
#include "msde/finance/girsanov.hpp"
#include "msde/finance/lookback.hpp"
#include "msde/finance/pricing.hpp"
#include "msde/lab/convergence.hpp"

/// Property and oracle checks shared by `verify` and the acceptance binary.
namespace msde::checks {

struct CheckResult {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;
    double wall_ms = 0.0;
};

/// Sizes of the check suite. The defaults are the acceptance sizes.
struct SuiteOptions {
    std::uint64_t seed = 1;
    unsigned workers = 1;
    double step = 1e-3;
    std::vector<double> epsilons{0.2, 0.05, 0.0125};

    double frozen_timing_horizon = 100.0;
    double frozen_timing_budget_s = 10.0;
    double frozen_accuracy_horizon = 5e4;
    std::size_t contraction_paths = 200;
    double recovery_horizon = 2e4;
    std::size_t psd_matrices = 1000;
    /// Ergodic horizon per node when tabulating averaged limits.
    double limit_horizon = 1e4;
    std::size_t weak_paths = 200000;
    std::size_t aux_paths = 50000;
    double girsanov_eps = 0.05;
    std::size_t girsanov_paths = 100000;
    std::size_t price_paths = 200000;
    std::size_t oracle_paths = 10000000;
};

namespace detail {

inline std::string format(const char* fmt, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    return buf;
}

template <class F>
CheckResult timed(int id, std::string name, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    CheckResult r;
    r.id = id;
    r.name = std::move(name);
    body(r);
    r.wall_ms = msde::detail::elapsed_ms(start);
    return r;
}

/// True when each gap exceeds the previous one by no more than `slack[i]`.
inline bool non_increasing(const std::vector<double>& gaps, const std::vector<double>& slack) {
    for (std::size_t i = 1; i < gaps.size(); ++i) {
        if (gaps[i] > gaps[i - 1] + slack[i]) return false;
    }
    return true;
}

} // namespace detail

/// E cos(Xbar_T) for dXbar = -Xbar dt + sigma_bar dW, Xbar_0 = x0: Gaussian with mean x0 e^-T and
/// variance abar (1 - e^-2T), with abar = 1 + e^-1/2 from E cos(2Y) = e^-2v at v = 1/4.
inline double ref_ou_cos_oracle(double x0 = 1.0, double T = 1.0) {
    const double abar = 1.0 + 0.5 * std::exp(-0.5);
    const double m = x0 * std::exp(-T);
    const double v = abar * (1.0 - std::exp(-2.0 * T));
    return std::exp(-0.5 * v) * std::cos(m);
}

/// 1. Frozen OU time averages: mean and variance against N(0, c^2 / 2 kappa).
inline CheckResult frozen_ergodics(const SuiteOptions& o) {
    return detail::timed(1, "frozen-equation ergodics", [&](CheckResult& r) {
        const auto sys = catalog::ou_linear_system({{"kappa", 2.0}, {"c", 1.0}});
        const auto eq = FrozenEquation::of(sys, 0.0, std::vector<double>{0.0});
        const StreamFamily streams = StreamFamily(o.seed).derive("check-frozen");
        const std::vector<double> y0{0.0};

        ErgodicParams timing;
        timing.step = o.step;
        timing.horizon = o.frozen_timing_horizon;
        RngStream rt = streams.stream(0);
        const auto start = std::chrono::steady_clock::now();
        (void)estimate_invariant(eq, y0, timing, rt);
        const double seconds = msde::detail::elapsed_ms(start) / 1000.0;

        ErgodicParams acc;
        acc.step = o.step;
        acc.horizon = o.frozen_accuracy_horizon;
        RngStream ra = streams.stream(1);
        const auto est = estimate_invariant(eq, y0, acc, ra);
        const double var = est.covariance[0];
        const bool mean_ok = std::abs(est.mean[0]) <= 3.0 * est.mean_se[0];
        const bool var_ok = std::abs(var - 0.25) <= 0.02 * 0.25;
        const bool time_ok = seconds < o.frozen_timing_budget_s;
        r.passed = mean_ok && var_ok && time_ok && !est.nonstationary;
        r.detail = detail::format("mean=%.5f (3SE=%.5f) var=%.5f (target 0.25, rel err %.3f%%) horizon=%g; "
                                  "timing run at horizon %g took %.2f s",
                                  est.mean[0], 3.0 * est.mean_se[0], var, 100.0 * std::abs(var / 0.25 - 1.0),
                                  acc.horizon, timing.horizon, seconds);
    });
}

/// 2. Coupled OU distance against exp(-2 beta s)|y1 - y2|^2.
inline CheckResult contraction(const SuiteOptions& o) {
    return detail::timed(2, "contraction", [&](CheckResult& r) {
        const auto sys = catalog::ou_linear_system({{"kappa", 2.0}, {"c", 1.0}});
        const auto eq = FrozenEquation::of(sys, 0.0, std::vector<double>{0.0});
        const std::vector<double> y1{1.0}, y2{0.0};
        const auto rep = verify_contraction(eq, y1, y2, {0.25, 0.5, 1.0}, o.contraction_paths, o.step,
                                            StreamFamily(o.seed).derive("check-contraction"), 0.01, o.workers);
        bool ok = !rep.any_violation();
        for (const auto& row : rep.rows) {
            const double rel = std::abs(row.squared_distance.mean / row.bound - 1.0);
            ok = ok && rel <= 0.01;
            r.detail += detail::format("s=%g: %.6f vs %.6f (%.3f%%) ", row.s, row.squared_distance.mean, row.bound,
                                       100.0 * rel);
        }
        r.passed = ok;
    });
}

/// 3. REF-OU averaged coefficients at (0, 1).
inline CheckResult coefficient_recovery(const SuiteOptions& o) {
    return detail::timed(3, "averaged-coefficient recovery", [&](CheckResult& r) {
        const auto sys = catalog::ref_ou();
        const std::vector<double> x{1.0}, y0{0.0};
        const auto eq = FrozenEquation::of(sys, 0.0, x);
        ErgodicParams p;
        p.step = o.step;
        p.horizon = o.recovery_horizon;
        const StreamFamily streams = StreamFamily(o.seed).derive("check-recovery");
        RngStream rb = streams.stream(0), ra = streams.stream(1);
        const auto b = estimate_averaged_drift(sys.b, eq, y0, p, rb);
        const auto a = estimate_averaged_diffusion(sys.sigma, eq, y0, p, ra);
        const double sig = psd_sqrt(a.value, 1)[0];
        const double a_ref = 1.303265, s_ref = 1.61448;
        const bool b_ok = std::abs(b.value[0] + 1.0) <= 3.0 * b.std_error[0];
        const bool a_ok = std::abs(a.value[0] / a_ref - 1.0) <= 0.01;
        const bool s_ok = std::abs(sig / s_ref - 1.0) <= 0.005;
        r.passed = b_ok && a_ok && s_ok;
        r.detail = detail::format("bbar=%.5f (3SE=%.5f) abar=%.5f (%.3f%%) sigmabar=%.5f (%.3f%%)", b.value[0],
                                  3.0 * b.std_error[0], a.value[0], 100.0 * std::abs(a.value[0] / a_ref - 1.0), sig,
                                  100.0 * std::abs(sig / s_ref - 1.0));
    });
}

/// 4. psd_sqrt round trip on random PSD matrices plus the 2x2 hand case.
inline CheckResult psd_suite(const SuiteOptions& o) {
    return detail::timed(4, "psd_sqrt property suite", [&](CheckResult& r) {
        RngStream rng = StreamFamily(o.seed).derive("check-psd").stream(0);
        double worst = 0.0;
        for (std::size_t m = 0; m < o.psd_matrices; ++m) {
            const std::size_t d = 1 + m % 5;
            const std::size_t rank = 1 + (m / 5) % d;
            std::vector<double> g(d * rank), a(d * d, 0.0);
            rng.normals(g);
            for (std::size_t i = 0; i < d; ++i) {
                for (std::size_t j = 0; j < d; ++j) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < rank; ++k) acc += g[i * rank + k] * g[j * rank + k];
                    a[i * d + j] = 0.5 * acc;
                }
            }
            // Exact symmetry: the product above is symmetric only up to rounding order.
            for (std::size_t i = 0; i < d; ++i) {
                for (std::size_t j = 0; j < i; ++j) a[i * d + j] = a[j * d + i];
            }
            const auto s = psd_sqrt(a, d);
            double err = 0.0, norm = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                for (std::size_t j = 0; j < d; ++j) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < d; ++k) acc += s[i * d + k] * s[k * d + j];
                    err += (acc - 2.0 * a[i * d + j]) * (acc - 2.0 * a[i * d + j]);
                    norm += 4.0 * a[i * d + j] * a[i * d + j];
                }
            }
            worst = std::max(worst, std::sqrt(err) / (1.0 + std::sqrt(norm)));
        }
        const std::vector<double> hand{1.25, 0.75, 0.75, 1.25};
        const std::vector<double> expect{1.5, 0.5, 0.5, 1.5};
        const auto s = psd_sqrt(hand, 2);
        double hand_err = 0.0;
        for (std::size_t i = 0; i < 4; ++i) hand_err = std::max(hand_err, std::abs(s[i] - expect[i]));
        r.passed = worst <= 1e-10 && hand_err <= 1e-12;
        r.detail = detail::format("%zu matrices, worst relative residual %.3g; 2x2 case max error %.3g",
                                  o.psd_matrices, worst, hand_err);
    });
}

/// REF-OU averaged model tabulated on x in {-4, ..., 4} at t = 0.
inline AveragedModel ref_ou_limit_model(const SuiteOptions& o) {
    const auto sys = catalog::ref_ou();
    TabulateParams tp;
    tp.ergodic.step = o.step;
    tp.ergodic.horizon = o.limit_horizon;
    tp.seed = StreamFamily(o.seed).derive("check-ref-ou-limit").master_seed();
    tp.workers = o.workers;
    std::vector<double> xs;
    for (int i = -4; i <= 4; ++i) xs.push_back(i);
    return tabulate_averaged_model(sys, {0.0}, {xs}, tp);
}

/// The REF-OU weak-convergence sweep behind criteria 5 and 7.
inline ConvergenceReport weak_convergence_run(const SuiteOptions& o) {
    const auto sys = catalog::ref_ou();
    ConvergenceOptions co;
    co.step = o.step;
    co.seed = o.seed;
    co.sim.workers = o.workers;
    return weak_convergence_report(sys, ref_ou_limit_model(o), o.epsilons, {functionals::cos_terminal(sys.horizon)},
                                   o.weak_paths, {}, co);
}

/// 5. Gaps |E cos X^eps_T - E cos Xbar_T| against the Gaussian oracle.
inline CheckResult weak_convergence(const SuiteOptions& o, const ConvergenceReport& rep, double wall_ms = 0.0) {
    CheckResult r;
    r.id = 5;
    r.name = "weak convergence";
    r.wall_ms = wall_ms;
    const double target = ref_ou_cos_oracle();
    std::vector<double> gaps, slack;
    for (std::size_t i = 0; i < o.epsilons.size(); ++i) {
        const auto& c = rep.cell(o.epsilons[i], "cos").estimate;
        gaps.push_back(std::abs(c.mean - target));
        slack.push_back(i == 0 ? 0.0 : combined_se(c, rep.cell(o.epsilons[i - 1], "cos").estimate));
        r.detail += detail::format("eps=%g gap=%.5f (SE %.5f); ", o.epsilons[i], gaps.back(), c.std_error);
    }
    const auto& last = rep.cell(o.epsilons.back(), "cos").estimate;
    const auto& lim = rep.limit_cell("cos").estimate;
    const bool mono = detail::non_increasing(gaps, slack);
    const bool final_ok = gaps.back() <= std::max(0.01, 3.0 * last.std_error);
    const bool limit_ok = std::abs(lim.mean - target) <= 3.0 * lim.std_error;
    r.passed = mono && final_ok && limit_ok;
    r.detail += detail::format("target %.5f, limit MC %.5f (3SE %.5f)%s%s", target, lim.mean, 3.0 * lim.std_error,
                               mono ? "" : ", gaps not monotone", final_ok ? "" : ", final gap too large");
    return r;
}

/// 6. E sup |X^eps - Xhat^eps|^2 strictly decreasing in eps.
inline CheckResult auxiliary_gap(const SuiteOptions& o) {
    return detail::timed(6, "auxiliary gap", [&](CheckResult& r) {
        ConvergenceOptions co;
        co.step = o.step;
        co.seed = o.seed;
        co.sim.workers = o.workers;
        const auto cells = auxiliary_gap_sweep(catalog::ref_ou(), o.epsilons, o.aux_paths, co);
        bool ok = true;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            ok = ok && (i == 0 || cells[i].gap.mean < cells[i - 1].gap.mean);
            r.detail += detail::format("eps=%g gap=%.3e (SE %.1e); ", cells[i].epsilon, cells[i].gap.mean,
                                       cells[i].gap.std_error);
        }
        r.passed = ok;
    });
}

/// 7. max_t E|Y^eps_t|^2 stable across the sweep and below 1 + |y0|^2.
inline CheckResult fast_moment_bound(const ConvergenceReport& rep) {
    CheckResult r;
    r.id = 7;
    r.name = "uniform fast L2 bound";
    const double y0 = catalog::ref_ou().y0[0];
    double lo = INFINITY, hi = 0.0;
    for (const auto& c : rep.fast_moments) {
        lo = std::min(lo, c.max_second_moment.mean);
        hi = std::max(hi, c.max_second_moment.mean);
        r.detail += detail::format("eps=%g max E|Y|^2=%.4f at t=%.3f; ", c.epsilon, c.max_second_moment.mean, c.time);
    }
    const double spread = hi / lo - 1.0;
    r.passed = !rep.fast_moments.empty() && spread < 0.1 && hi < 1.0 + y0 * y0;
    r.detail += detail::format("spread %.2f%%, bound %.2f", 100.0 * spread, 1.0 + y0 * y0);
    return r;
}

/// 8. E[dQ/dP] = 1 and the discounted price is a Q-martingale.
inline CheckResult girsanov(const SuiteOptions& o) {
    return detail::timed(8, "Girsanov sanity", [&](CheckResult& r) {
        const auto setup = catalog::lsv_tanh();
        const auto& m = setup.model;
        const TimeGrid grid = TimeGrid::with_step(0.0, m.horizon, o.step);
        const StreamFamily root(o.seed);
        SimulationOptions sim;
        sim.workers = o.workers;
        const auto w =
            girsanov_weight(m, setup.measure, o.girsanov_eps, grid, root.derive("check-girsanov"), o.girsanov_paths, sim);
        OptionSpec asset;
        asset.kind = "custom";
        asset.payoff = "asset";
        asset.cap = 10.0 * m.s0;
        asset.maturity = m.horizon;
        const auto rn = risk_neutralize(m, setup.measure);
        const auto p = price(rn, setup.measure, asset, o.girsanov_eps, grid, root.derive("check-martingale"),
                             o.girsanov_paths, sim);
        const bool w_ok = std::abs(w.mean - 1.0) <= 3.0 * w.std_error;
        const bool p_ok = std::abs(p.mean - m.s0) <= 3.0 * p.std_error;
        r.passed = w_ok && p_ok;
        r.detail = detail::format("E[dQ/dP]=%.5f (3SE %.5f); E[e^-rT S_T]=%.5f vs s0=%g (3SE %.5f); eps=%g", w.mean,
                                  3.0 * w.std_error, p.mean, m.s0, 3.0 * p.std_error, o.girsanov_eps);
    });
}

/// Capped call used by criterion 9.
inline OptionSpec capped_call(double T = 1.0) {
    OptionSpec s;
    s.kind = "european";
    s.payoff = "call";
    s.strike = 1.0;
    s.cap = 2.0;
    s.maturity = T;
    return s;
}

/// Discounted capped call under constant-coefficient lognormal dynamics, sampled exactly.
inline MonteCarloEstimate lognormal_capped_call(double s0, double rate, double vol, double T, double K, double cap,
                                                std::size_t n, const StreamFamily& streams, unsigned workers) {
    constexpr std::size_t chunk = 1u << 16;
    const std::size_t n_chunks = (n + chunk - 1) / chunk;
    std::vector<double> values(n);
    const double drift = (rate - 0.5 * vol * vol) * T;
    const double sd = vol * std::sqrt(T);
    const double disc = std::exp(-rate * T);
    parallel_for(n_chunks, workers, [&](unsigned, std::size_t c) {
        RngStream rng = streams.stream(c);
        for (std::size_t i = c * chunk; i < std::min(n, (c + 1) * chunk); ++i) {
            const double s = s0 * std::exp(drift + sd * rng.normal());
            values[i] = disc * std::min(std::max(s - K, 0.0), cap);
        }
    }, 1);
    return mc_estimate(values);
}

/// 9. Capped-call prices under lsv-tanh against the averaged local-vol limit.
inline CheckResult price_convergence(const SuiteOptions& o) {
    return detail::timed(9, "price convergence", [&](CheckResult& r) {
        const auto setup = catalog::lsv_tanh();
        const auto& m = setup.model;
        const auto spec = capped_call(m.horizon);
        PriceExperimentOptions po;
        po.step = o.step;
        po.seed = o.seed;
        po.sim.workers = o.workers;
        po.limit_params.ergodic.step = o.step;
        po.limit_params.ergodic.horizon = o.limit_horizon;
        po.s_nodes = {m.s0};
        const auto table = price_convergence_experiment(m, setup.measure, spec, o.epsilons, o.price_paths, po);

        std::vector<double> gaps, slack;
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            gaps.push_back(table.rows[i].gap_vs_limit);
            slack.push_back(i == 0 ? 0.0 : combined_se(table.rows[i].price, table.rows[i - 1].price));
            r.detail += detail::format("eps=%g P=%.5f gap=%.5f (SE %.5f); ", table.rows[i].epsilon,
                                       table.rows[i].price.mean, gaps.back(), table.rows[i].gap_se);
        }
        const bool mono = detail::non_increasing(gaps, slack);
        const bool final_ok = gaps.back() <= std::max(0.005 * m.s0, 3.0 * table.rows.back().gap_se);

        // Oracle: exact lognormal sampling with the tabulated Rbar, Fbar (F does not depend on x).
        TabulateParams lp = po.limit_params;
        lp.seed = StreamFamily(o.seed).derive("price-limit-table").master_seed();
        lp.workers = o.workers;
        const auto lv = averaged_local_vol(m, setup.measure, {0.0}, {m.s0}, lp);
        const double rbar = lv.node(0).bbar[0], fbar = lv.node(0).sigmabar[0];
        const auto oracle = lognormal_capped_call(m.s0, rbar, fbar, m.horizon, 1.0, 2.0, o.oracle_paths,
                                                  StreamFamily(o.seed).derive("check-price-oracle"), o.workers);
        const bool oracle_ok =
            std::abs(table.limit.price.mean - oracle.mean) <= 3.0 * combined_se(table.limit.price, oracle);
        r.passed = mono && final_ok && oracle_ok;
        r.detail += detail::format("limit %.5f (SE %.5f), oracle %.5f (SE %.1e, n=%zu, Rbar=%.4f Fbar=%.5f)%s%s%s",
                                   table.limit.price.mean, table.limit.price.std_error, oracle.mean, oracle.std_error,
                                   o.oracle_paths, rbar, fbar, mono ? "" : ", gaps not monotone",
                                   final_ok ? "" : ", final gap too large", oracle_ok ? "" : ", oracle mismatch");
    });
}

/// 10. Mollified lookback: constants, the linear-path window, and the delta sweep.
inline CheckResult mollifier(const SuiteOptions& o) {
    return detail::timed(10, "mollifier", [&](CheckResult& r) {
        const TimeGrid grid = TimeGrid::with_step(0.0, 1.0, o.step);
        const std::size_t n = grid.n_nodes();
        const auto one = weights::one();

        double const_err = 0.0;
        for (double c : {-1.3, 0.0, 0.7, 2.5}) {
            const std::vector<double> path(n, c);
            for (double delta : {4.0 * o.step, 0.0125, 0.05, 0.2, 0.5, 1.0, 2.0}) {
                for (double v : window_average(grid, path, one, delta)) {
                    const_err = std::max(const_err, std::abs(v - c) / std::max(1.0, std::abs(c)));
                }
                const auto lb = mollify_lookback([](double a, double b) { return 10.0 * a + b; }, one, delta);
                const_err = std::max(const_err, std::abs(lb(grid, path) - 11.0 * c) / std::max(1.0, std::abs(c)));
            }
        }

        std::vector<double> linear(n);
        for (std::size_t k = 0; k < n; ++k) linear[k] = grid.time(k) - 1.0;
        const double lin = window_average(grid, linear, one, 0.2)[grid.nearest_node(0.5)];
        const double lin_err = std::abs(lin + 0.6);

        // Tent path peaking at theta = -0.4.
        std::vector<double> tent(n);
        for (std::size_t k = 0; k < n; ++k) tent[k] = 1.0 - 2.0 * std::abs(grid.time(k) - 1.0 + 0.4);
        bool sweep_ok = true;
        for (const auto& [label, a] : {std::pair{"one", one}, std::pair{"ramp", weights::ramp(1.0)}}) {
            double sup = -INFINITY;
            for (std::size_t k = 0; k < n; ++k) sup = std::max(sup, a(grid.time(k) - 1.0) * tent[k]);
            double prev = INFINITY;
            r.detail += std::string(label) + ":";
            for (double delta : {0.2, 0.05, 0.0125}) {
                const double diff = std::abs(mollify_lookback([](double, double s) { return s; }, a, delta)
                                                 .window_sup(grid, tent) -
                                             sup);
                sweep_ok = sweep_ok && diff < prev;
                prev = diff;
                r.detail += detail::format(" %.5f", diff);
            }
            r.detail += "; ";
        }
        r.passed = const_err <= 1e-12 && lin_err <= 1e-12 && sweep_ok;
        r.detail += detail::format("constant-path max error %.2e, linear window %.15f", const_err, lin);
    });
}

} // namespace msde::checks
