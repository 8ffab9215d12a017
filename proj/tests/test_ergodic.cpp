#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "msde/engine/catalog.hpp"
#include "msde/ergodic/averaged_model.hpp"
#include "msde/ergodic/frozen.hpp"
#include "msde/ergodic/psd_sqrt.hpp"
#include "msde/ergodic/tabulate.hpp"

using namespace msde;

namespace {

ErrorCode code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no msde::Error thrown";
    return ErrorCode::InvalidArgument;
}

FrozenEquation ou(double kappa = 2.0, double c = 1.0, double mean = 0.0) {
    auto f = catalog::ou_linear(kappa, c, mean);
    return {f.B, f.C, 0.0, {0.0}};
}

ErgodicParams horizon(double h, double step = 1e-3) {
    ErgodicParams p;
    p.horizon = h;
    p.step = step;
    return p;
}

std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t d) {
    std::vector<double> c(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < d; ++k) c[i * d + j] += a[i * d + k] * b[k * d + j];
    return c;
}

} // namespace

TEST(Frozen, ZeroCoefficientsKeepInitialState) {
    const auto sys = catalog::zero_system();
    const auto eq = FrozenEquation::of(sys, 0.0, {0.0});
    RngStream rng(1, 0);
    const std::vector<double> y0{1.5};
    const auto b = simulate_frozen(eq, y0, 2.0, 1e-2, rng);
    for (std::size_t k = 0; k < b.grid().n_nodes(); ++k) ASSERT_EQ(b.at(0, k, 0), 1.5);
}

TEST(Frozen, OuMeanDecay) {
    const std::vector<double> y0{3.0};
    const auto v = frozen_terminal_values(ou(), y0, 5.0, 1e-3, 10000, StreamFamily(2));
    const auto e = mc_estimate(v);
    EXPECT_NEAR(e.mean, 3.0 * std::exp(-10.0), 3.0 * e.std_error);
}

TEST(Frozen, OuVarianceAtHorizon) {
    const std::vector<double> y0{0.0};
    const auto v = frozen_terminal_values(ou(), y0, 5.0, 1e-3, 10000, StreamFamily(3));
    double m = 0, m2 = 0;
    for (double x : v) {
        m += x;
        m2 += x * x;
    }
    m /= v.size();
    const double var = m2 / v.size() - m * m;
    EXPECT_NEAR(var, 0.25 * (1.0 - std::exp(-20.0)), 0.05 * 0.25);
}

TEST(Contraction, CoupledDistanceMatchesClosedForm) {
    const std::vector<double> y1{1.0}, y2{0.0};
    const auto rep = verify_contraction(ou(), y1, y2, {0.0, 0.25, 0.5, 1.0}, 100, 1e-3, StreamFamily(4));
    ASSERT_EQ(rep.rows.size(), 4u);
    EXPECT_EQ(rep.rows[0].squared_distance.mean, 1.0);
    for (const auto& r : rep.rows) {
        EXPECT_NEAR(r.squared_distance.mean / std::exp(-4.0 * r.s), 1.0, 0.01) << r.s;
        EXPECT_NEAR(r.bound, std::exp(-4.0 * r.s), 1e-15);
    }
    EXPECT_FALSE(rep.any_violation());
}

TEST(Contraction, RefOuPairNeverFlagged) {
    const auto sys = catalog::ref_ou();
    const std::vector<double> y1{2.0}, y2{-1.0};
    const auto rep = verify_contraction(FrozenEquation::of(sys, 0.0, {1.0}), y1, y2, {0.1, 0.5, 1.0, 2.0}, 200, 1e-3,
                                        StreamFamily(5));
    EXPECT_FALSE(rep.any_violation());
}

TEST(Invariant, OuStationaryLaw) {
    RngStream rng(6, 0);
    const std::vector<double> y0{0.0};
    const auto est = estimate_invariant(ou(), y0, horizon(5e4), rng);
    EXPECT_NEAR(est.mean[0], 0.0, 3.0 * est.mean_se[0]);
    EXPECT_NEAR(est.covariance[0], 0.25, 0.02 * 0.25);
    EXPECT_FALSE(est.nonstationary);
    EXPECT_LE(est.effective_sample_size, static_cast<double>(est.n_samples));
    ASSERT_GE(est.decay.size(), 3u);
    EXPECT_EQ(est.decay[0].autocorrelation, 1.0);
    // Autocorrelation of OU at lag s is e^{-kappa s}.
    for (const auto& d : est.decay) {
        if (d.lag > 0.0 && d.lag <= 0.5) EXPECT_NEAR(d.autocorrelation, std::exp(-2.0 * d.lag), 0.05) << d.lag;
    }
    EXPECT_NEAR(est.quantiles[0][3], 0.0, 0.02);
}

TEST(Invariant, ShiftedOuMean) {
    RngStream rng(7, 0);
    const std::vector<double> y0{0.0};
    const auto est = estimate_invariant(ou(2.0, 1.0, 5.0), y0, horizon(2e4), rng);
    EXPECT_NEAR(est.mean[0], 5.0, 3.0 * est.mean_se[0]);
}

TEST(Invariant, DeterministicContraction) {
    RngStream rng(8, 0);
    const std::vector<double> y0{1.0};
    const auto est = estimate_invariant(ou(2.0, 0.0), y0, horizon(100), rng);
    EXPECT_LT(std::abs(est.mean[0]), 1e-4);
    EXPECT_LT(est.covariance[0], 1e-8);
}

TEST(Invariant, NonStationaryRunIsFlagged) {
    // Slow relaxation: the run covers only part of the transient.
    RngStream rng(9, 0);
    const std::vector<double> y0{10.0};
    ErgodicParams p = horizon(50.0);
    p.burn_in = 0.0;
    const auto est = estimate_invariant(ou(0.02, 0.1), y0, p, rng);
    EXPECT_TRUE(est.nonstationary);
    EXPECT_FALSE(est.warnings.empty());
}

TEST(Invariant, DefaultsFollowBeta) {
    const auto r = resolve(ErgodicParams{}, ou(4.0));
    EXPECT_DOUBLE_EQ(r.burn_in, 2.5);
    EXPECT_DOUBLE_EQ(r.horizon, 50.0);
}

TEST(Invariant, EnsembleModeAgreesWithTimeAverage) {
    const auto sys = catalog::ref_ou();
    const auto eq = FrozenEquation::of(sys, 0.0, {1.0});
    const std::vector<double> y0{0.0};
    ErgodicParams p = horizon(5.0);
    p.burn_in = 0.0;
    p.ensemble_paths = 4000;
    RngStream ra(10, 0), rb(10, 1);
    const auto ens = estimate_averaged_diffusion(sys.sigma, eq, y0, p, ra);
    const auto ta = estimate_averaged_diffusion(sys.sigma, eq, y0, horizon(2e3), rb);
    EXPECT_NEAR(ens.value[0], ta.value[0], 3.0 * std::hypot(ens.std_error[0], ta.std_error[0]));
}

TEST(Averaged, RefOuDrift) {
    const auto sys = catalog::ref_ou();
    RngStream rng(11, 0);
    const std::vector<double> y0{0.0};
    const auto b = estimate_averaged_drift(sys.b, FrozenEquation::of(sys, 0.0, {1.0}), y0, horizon(1e4), rng);
    EXPECT_NEAR(b.value[0], -1.0, 3.0 * b.std_error[0]);
}

TEST(Averaged, ConstantIntegrandIsExact) {
    const auto b = scalar_field("7", [](double, double, double) { return 7.0; });
    RngStream rng(12, 0);
    const std::vector<double> y0{0.0};
    const auto v = estimate_averaged_drift(b, ou(), y0, horizon(100), rng);
    EXPECT_EQ(v.value[0], 7.0);
    EXPECT_EQ(v.std_error[0], 0.0);
}

TEST(Averaged, LinearIntegrandAtOrigin) {
    const auto b = scalar_field("y", [](double, double, double y) { return y; });
    RngStream rng(13, 0);
    const std::vector<double> y0{0.0};
    const auto v = estimate_averaged_drift(b, ou(), y0, horizon(1e4), rng);
    EXPECT_NEAR(v.value[0], 0.0, 3.0 * v.std_error[0]);
}

TEST(Averaged, RefOuDiffusion) {
    const auto sys = catalog::ref_ou();
    RngStream rng(14, 0);
    const std::vector<double> y0{0.0};
    const auto a = estimate_averaged_diffusion(sys.sigma, FrozenEquation::of(sys, 0.0, {0.0}), y0, horizon(1e4), rng);
    const double oracle = (2.0 + std::exp(-0.5)) / 2.0;
    EXPECT_NEAR(oracle, 1.303265, 1e-6);
    EXPECT_NEAR(a.value[0] / oracle, 1.0, 0.01);
}

TEST(Averaged, ConstantDiffusions) {
    RngStream rng(15, 0);
    const std::vector<double> y0{0.0};
    const auto s = scalar_field("sqrt2", [](double, double, double) { return std::sqrt(2.0); });
    EXPECT_DOUBLE_EQ(estimate_averaged_diffusion(s, ou(), y0, horizon(100), rng).value[0], 1.0);

    const auto sigma2 = constant_field("2I", 1, 1, 2, 2, {2.0, 0.0, 0.0, 2.0});
    const auto a = estimate_averaged_diffusion(sigma2, ou(), y0, horizon(100), rng);
    EXPECT_EQ(a.value, (std::vector<double>{2.0, 0.0, 0.0, 2.0}));
}

TEST(Averaged, HorizonBelowFiftyOverBetaRejected) {
    const auto sys = catalog::ref_ou();
    RngStream rng(16, 0);
    const std::vector<double> y0{0.0};
    EXPECT_EQ(code_of([&] { estimate_averaged_drift(sys.b, FrozenEquation::of(sys, 0, {1.0}), y0, horizon(10), rng); }),
              ErrorCode::InsufficientHorizon);
}

TEST(PsdSqrt, Examples) {
    EXPECT_EQ(psd_sqrt(std::vector<double>{0.5, 0.0, 0.0, 0.5}, 2), (std::vector<double>{1, 0, 0, 1}));
    const auto d = psd_sqrt(std::vector<double>{2.0, 0.0, 0.0, 0.5}, 2);
    EXPECT_NEAR(d[0], 2.0, 1e-15);
    EXPECT_NEAR(d[3], 1.0, 1e-15);
    EXPECT_EQ(d[1], 0.0);
    const auto s = psd_sqrt(std::vector<double>{1.25, 0.75, 0.75, 1.25}, 2);
    const std::vector<double> expect{1.5, 0.5, 0.5, 1.5};
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(s[i], expect[i], 1e-12);
    const auto sq = matmul(s, s, 2);
    const std::vector<double> two_a{2.5, 1.5, 1.5, 2.5};
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(sq[i], two_a[i], 1e-12);
}

TEST(PsdSqrt, Errors) {
    EXPECT_EQ(code_of([] { psd_sqrt(std::vector<double>{1.0, 0.0, 0.0, -1.0}, 2); }), ErrorCode::NotPSD);
    EXPECT_EQ(code_of([] { psd_sqrt(std::vector<double>{1.0, 0.5, 0.0, 1.0}, 2); }), ErrorCode::NotSymmetric);
    EXPECT_EQ(code_of([] { psd_sqrt(std::vector<double>{NAN}, 1); }), ErrorCode::NonFiniteSample);
}

TEST(PsdSqrt, NoiseLevelNegativeEigenvalueClamped) {
    const auto s = psd_sqrt(std::vector<double>{1.0, 0.0, 0.0, -1e-12}, 2);
    EXPECT_EQ(s[3], 0.0);
    EXPECT_NEAR(s[0], std::sqrt(2.0), 1e-15);
}

TEST(PsdSqrt, RandomRoundTrip) {
    RngStream rng(17, 0);
    for (int m = 0; m < 1000; ++m) {
        const std::size_t d = 1 + m % 5, rank = 1 + (m / 5) % d;
        std::vector<double> g(d * rank), a(d * d);
        rng.normals(g);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < rank; ++k) acc += g[i * rank + k] * g[j * rank + k];
                a[i * d + j] = a[j * d + i] = 0.5 * acc;
            }
        const auto s = psd_sqrt(a, d);
        const auto sq = matmul(s, s, d);
        double err = 0.0, norm = 0.0;
        for (std::size_t i = 0; i < d * d; ++i) {
            err += (sq[i] - 2.0 * a[i]) * (sq[i] - 2.0 * a[i]);
            norm += 4.0 * a[i] * a[i];
            EXPECT_EQ(s[i], s[(i % d) * d + i / d]);
        }
        ASSERT_LE(std::sqrt(err), 1e-10 * (1.0 + std::sqrt(norm))) << "matrix " << m;
    }
}

namespace {

AveragedModel small_table() {
    // bbar = t + 2x, sigmabar = 1 + x on t in {0, 1}, x in {0, 1, 3}.
    std::vector<AveragedNode> nodes;
    for (double t : {0.0, 1.0})
        for (double x : {0.0, 1.0, 3.0}) nodes.push_back({{t + 2 * x}, {1 + x}, {0.01}, {0.02}, false});
    return AveragedModel::tabulated({0.0, 1.0}, {{0.0, 1.0, 3.0}}, nodes);
}

} // namespace

TEST(AveragedModel, ExactAtNodesAndLinearBetween) {
    const auto m = small_table();
    double b = 0, s = 0;
    for (double t : {0.0, 1.0})
        for (double x : {0.0, 1.0, 3.0}) {
            EXPECT_FALSE(m.eval(t, std::span(&x, 1), std::span(&b, 1), std::span(&s, 1)));
            EXPECT_EQ(b, t + 2 * x);
            EXPECT_EQ(s, 1 + x);
        }
    double x = 2.0;
    m.eval(0.25, std::span(&x, 1), std::span(&b, 1), std::span(&s, 1));
    EXPECT_NEAR(b, 0.25 + 4.0, 1e-14);
    EXPECT_NEAR(s, 3.0, 1e-14);
}

TEST(AveragedModel, ConstantExtrapolationIsFlagged) {
    const auto m = small_table();
    double b = 0, s = 0, x = 10.0;
    EXPECT_TRUE(m.eval(0.0, std::span(&x, 1), std::span(&b, 1), std::span(&s, 1)));
    EXPECT_EQ(b, 6.0);
    x = 1.0;
    EXPECT_TRUE(m.eval(5.0, std::span(&x, 1), std::span(&b, 1), std::span(&s, 1)));
    EXPECT_EQ(b, 3.0);
}

TEST(AveragedModel, TableRoundTrip) {
    const auto m = small_table();
    std::stringstream ss;
    m.write_table(ss);
    const std::string text = ss.str();
    EXPECT_EQ(text.substr(0, text.find('\n')), "t,x_1,bbar_1,sigmabar_11,se_bbar_1,se_abar_11");
    auto back = AveragedModel::read_table(ss);
    ASSERT_EQ(back.n_nodes(), m.n_nodes());
    for (std::size_t i = 0; i < m.n_nodes(); ++i) {
        EXPECT_EQ(back.node(i).bbar, m.node(i).bbar);
        EXPECT_EQ(back.node(i).sigmabar, m.node(i).sigmabar);
        EXPECT_EQ(back.node(i).se_abar, m.node(i).se_abar);
    }
    std::stringstream again;
    back.write_table(again);
    EXPECT_EQ(again.str(), text);
}

TEST(AveragedModel, SchemaMismatch) {
    std::stringstream bad("t,x_1,bbar_1,sigma_11,se_bbar_1,se_abar_11\n0,0,0,0,0,0\n");
    EXPECT_EQ(code_of([&] { AveragedModel::read_table(bad); }), ErrorCode::SchemaMismatch);
    std::stringstream ragged("t,x_1,bbar_1,sigmabar_11,se_bbar_1,se_abar_11\n0,0,0\n");
    EXPECT_EQ(code_of([&] { AveragedModel::read_table(ragged); }), ErrorCode::SchemaMismatch);
}

TEST(AveragedModel, ClosedFormMetadata) {
    auto m = AveragedModel::closed_form(
        1, [](double, std::span<const double> x, std::span<double> o) { o[0] = -x[0]; },
        [](double, std::span<const double>, std::span<double> o) { o[0] = 1.61448; });
    EXPECT_FALSE(m.is_tabulated());
    EXPECT_EQ(m.metadata().at("sigma_root"), "symmetric-psd");
    double b = 0, s = 0, x = 2.0;
    EXPECT_FALSE(m.eval(0.0, std::span(&x, 1), std::span(&b, 1), std::span(&s, 1)));
    EXPECT_EQ(b, -2.0);
}

TEST(Tabulate, RefOuNodes) {
    TabulateParams p;
    p.ergodic = horizon(2000);
    p.seed = 21;
    const auto m = tabulate_averaged_model(catalog::ref_ou(), {0.0, 0.5, 1.0}, {{-1.0, 0.0, 1.0}}, p);
    ASSERT_EQ(m.n_nodes(), 9u);
    for (std::size_t i = 0; i < m.n_nodes(); ++i) {
        const auto c = m.node_coords(i);
        const auto& n = m.node(i);
        EXPECT_NEAR(n.bbar[0], -c[1], 3.0 * n.se_bbar[0]) << i;
        EXPECT_NEAR(n.sigmabar[0] / 1.61448, 1.0, 0.005) << i;
    }
    // Time-independent coefficients: nodes at different t agree.
    for (std::size_t j = 0; j < 3; ++j) {
        const auto& a = m.node(j);
        const auto& b = m.node(6 + j);
        EXPECT_NEAR(a.bbar[0], b.bbar[0], 3.0 * std::hypot(a.se_bbar[0], b.se_bbar[0]));
    }
}

TEST(Tabulate, DoublingHorizonIsConsistent) {
    TabulateParams p;
    p.ergodic = horizon(1000);
    p.seed = 22;
    const auto a = tabulate_averaged_model(catalog::ref_ou(), {0.0}, {{0.5}}, p);
    p.ergodic = horizon(2000);
    p.seed = 23;
    const auto b = tabulate_averaged_model(catalog::ref_ou(), {0.0}, {{0.5}}, p);
    EXPECT_NEAR(a.node(0).bbar[0], b.node(0).bbar[0], 3.0 * std::hypot(a.node(0).se_bbar[0], b.node(0).se_bbar[0]));
}

TEST(Tabulate, SingleNodeIsConstant) {
    TabulateParams p;
    p.ergodic = horizon(100);
    const auto m = tabulate_averaged_model(catalog::ref_ou(), {0.0}, {{0.0}}, p);
    double b0 = 0, s0 = 0, b = 0, s = 0, x0 = 0.0, x = 3.0;
    m.eval(0.0, std::span(&x0, 1), std::span(&b0, 1), std::span(&s0, 1));
    m.eval(0.7, std::span(&x, 1), std::span(&b, 1), std::span(&s, 1));
    EXPECT_EQ(b, b0);
    EXPECT_EQ(s, s0);
}

TEST(Tabulate, IndependentOfWorkerCount) {
    TabulateParams p;
    p.ergodic = horizon(100);
    p.seed = 5;
    const auto a = tabulate_averaged_model(catalog::ref_ou(), {0.0}, {{-1.0, 0.0, 1.0, 2.0}}, p);
    p.workers = 3;
    const auto b = tabulate_averaged_model(catalog::ref_ou(), {0.0}, {{-1.0, 0.0, 1.0, 2.0}}, p);
    for (std::size_t i = 0; i < a.n_nodes(); ++i) EXPECT_EQ(a.node(i).bbar, b.node(i).bbar);
}

TEST(Tabulate, NodeErrorsCarryCoordinates) {
    TabulateParams p;
    p.ergodic = horizon(10);
    try {
        tabulate_averaged_model(catalog::ref_ou(), {0.0}, {{0.0, 1.0}}, p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InsufficientHorizon);
        EXPECT_NE(std::string(e.what()).find("t=0"), std::string::npos);
    }
}
