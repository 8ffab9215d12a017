#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "msde/core/correlation.hpp"
#include "msde/core/increments.hpp"
#include "msde/core/parallel.hpp"
#include "msde/core/path_bundle.hpp"
#include "msde/core/rng.hpp"
#include "msde/core/statistics.hpp"
#include "msde/core/time_grid.hpp"

using namespace msde;

namespace {

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

ErrorCode code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no msde::Error thrown";
    return ErrorCode::InvalidArgument;
}

} // namespace

TEST(Correlation, ScalarResidualWeight) {
    auto s = build_correlation(1, 1, {0.5});
    EXPECT_DOUBLE_EQ(s.residual_weight(0), std::sqrt(0.75));
}

TEST(Correlation, FullyDrivenColumnHasZeroResidual) {
    auto s = build_correlation(2, 1, {0.6, 0.8});
    EXPECT_NEAR(s.residual_weight(0), 0.0, 1e-7);
}

TEST(Correlation, NonOrthogonalColumnsRejected) {
    EXPECT_EQ(code_of([] { build_correlation(1, 2, {0.7, 0.7}); }), ErrorCode::OrthogonalityViolation);
}

TEST(Correlation, ColumnNormAboveOneRejected) {
    EXPECT_EQ(code_of([] { build_correlation(2, 1, {0.8, 0.8}); }), ErrorCode::ColumnNormViolation);
}

TEST(Correlation, ResidualWeightsInUnitInterval) {
    RngStream rng(3, 0);
    for (int trial = 0; trial < 200; ++trial) {
        const double r1 = rng.uniform(-0.7, 0.7), r2 = rng.uniform(-0.7, 0.7);
        auto s = build_correlation(2, 1, {r1, r2});
        EXPECT_GE(s.residual_weight(0), 0.0);
        EXPECT_LE(s.residual_weight(0), 1.0);
    }
}

TEST(Increments, EmptyGridGivesEmptyArrays) {
    RngStream rng(1, 0);
    auto inc = sample_increments(independent_correlation(1, 1), TimeGrid(0.0, 0.0, 0), rng);
    EXPECT_TRUE(inc.dW.empty());
    EXPECT_TRUE(inc.dW_fast.empty());
}

TEST(Increments, EmpiricalCorrelationMatchesSpec) {
    const std::size_t N = 1000000;
    const TimeGrid grid(0.0, 1.0, N);
    for (double rho : {0.0, 0.5}) {
        RngStream rng(11, 0);
        auto inc = sample_increments(build_correlation(1, 1, {rho}), grid, rng);
        EXPECT_NEAR(correlation(inc.dW, inc.dW_fast), rho, 3.0 / std::sqrt(static_cast<double>(N))) << rho;
    }
}

TEST(Increments, CovarianceBlockStructure) {
    const std::size_t N = 200000;
    const TimeGrid grid(0.0, 1.0, N);
    // d = 2, l = 2 with orthogonal columns.
    auto spec = build_correlation(2, 2, {0.3, 0.4, 0.4, -0.3});
    RngStream rng(5, 1);
    auto inc = sample_increments(spec, grid, rng);
    const double h = grid.step();
    auto cov = [&](const std::vector<double>& a, std::size_t sa, std::size_t ia, const std::vector<double>& b,
                   std::size_t sb, std::size_t ib) {
        double acc = 0.0;
        for (std::size_t k = 0; k < N; ++k) acc += a[k * sa + ia] * b[k * sb + ib];
        return acc / (static_cast<double>(N) * h);
    };
    const double tol = 4.0 / std::sqrt(static_cast<double>(N));
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            EXPECT_NEAR(cov(inc.dW, 2, i, inc.dW_fast, 2, j), spec.rho(i, j), tol);
            EXPECT_NEAR(cov(inc.dW, 2, i, inc.dW, 2, j), i == j ? 1.0 : 0.0, tol);
            EXPECT_NEAR(cov(inc.dW_fast, 2, i, inc.dW_fast, 2, j), i == j ? 1.0 : 0.0, tol);
        }
    }
}

TEST(Increments, DeterministicPerStream) {
    const TimeGrid grid(0.0, 1.0, 500);
    auto spec = build_correlation(1, 1, {0.3});
    RngStream a(42, 7), b(42, 7), c(42, 8);
    auto ia = sample_increments(spec, grid, a);
    auto ib = sample_increments(spec, grid, b);
    auto ic = sample_increments(spec, grid, c);
    EXPECT_EQ(ia.dW, ib.dW);
    EXPECT_EQ(ia.dW_fast, ib.dW_fast);
    EXPECT_NE(ia.dW, ic.dW);
}

TEST(Rng, DerivedFamiliesAreDistinctAndStable) {
    StreamFamily root(9);
    EXPECT_EQ(root.derive("x").master_seed(), StreamFamily(9).derive("x").master_seed());
    EXPECT_NE(root.derive("x").master_seed(), root.derive("y").master_seed());
    EXPECT_NE(root.derive("x", 0).master_seed(), root.derive("x", 1).master_seed());
    RngStream s = root.stream(3, 2);
    EXPECT_EQ(s.master_seed(), 9u);
    EXPECT_EQ(s.stream_index(), 3u);
    EXPECT_EQ(s.substream(), 2u);
}

TEST(Statistics, ConstantSamples) {
    std::vector<double> v{3, 3, 3, 3};
    auto e = mc_estimate(v);
    EXPECT_EQ(e.mean, 3.0);
    EXPECT_EQ(e.std_error, 0.0);
    EXPECT_EQ(e.n_samples, 4u);
}

TEST(Statistics, TwoPointCase) {
    std::vector<double> v{0, 2};
    auto e = mc_estimate(v);
    EXPECT_DOUBLE_EQ(e.mean, 1.0);
    EXPECT_DOUBLE_EQ(e.std_error, 1.0);
}

TEST(Statistics, NormalDrawsMean) {
    RngStream rng(2, 0);
    std::vector<double> v(1000000);
    rng.normals(v);
    EXPECT_NEAR(mc_estimate(v).mean, 0.0, 3e-3);
}

TEST(Statistics, Errors) {
    EXPECT_EQ(code_of([] { mc_estimate(std::vector<double>{1.0}); }), ErrorCode::InsufficientSamples);
    EXPECT_EQ(code_of([] { mc_estimate(std::vector<double>{1.0, NAN}); }), ErrorCode::NonFiniteSample);
}

TEST(Statistics, KsStatistic) {
    EXPECT_DOUBLE_EQ(ks_statistic({1, 2, 3}, {1, 2, 3}), 0.0);
    EXPECT_DOUBLE_EQ(ks_statistic({0, 0}, {1, 1}), 1.0);
    EXPECT_NEAR(ks_critical_1pct(10000, 10000), 1.63 * std::sqrt(2.0 / 10000), 1e-15);
}

TEST(Statistics, OlsSlopeAndQuantile) {
    std::vector<double> x{0, 1, 2, 3}, y{1, 3, 5, 7};
    EXPECT_DOUBLE_EQ(ols_slope(x, y), 2.0);
    std::vector<double> s{1, 2, 3, 4, 5};
    EXPECT_DOUBLE_EQ(sorted_quantile(s, 0.5), 3.0);
}

TEST(TimeGrid, WithStep) {
    auto g = TimeGrid::with_step(0.0, 1.0, 1e-3);
    EXPECT_EQ(g.n_steps(), 1000u);
    EXPECT_EQ(g.n_nodes(), 1001u);
    EXPECT_DOUBLE_EQ(g.time(500), 0.5);
    EXPECT_EQ(g.nearest_node(0.25), 250u);
    EXPECT_THROW(TimeGrid::with_step(0.0, 1.0, 0.3), Error);
}

TEST(Parallel, ResultsIndependentOfWorkers) {
    for (unsigned w : {1u, 2u, 5u}) {
        std::vector<double> out(1000);
        parallel_for(out.size(), w, [&](unsigned, std::size_t i) { out[i] = RngStream(1, i).normal(); });
        std::vector<double> ref(1000);
        for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = RngStream(1, i).normal();
        EXPECT_EQ(out, ref);
    }
}

TEST(Parallel, LowestFailingIndexWins) {
    for (unsigned w : {1u, 4u}) {
        try {
            parallel_for(1000, w, [](unsigned, std::size_t i) {
                if (i == 700 || i == 130) throw std::runtime_error(std::to_string(i));
            }, 7);
            FAIL();
        } catch (const std::runtime_error& e) {
            EXPECT_STREQ(e.what(), "130");
        }
    }
}

TEST(PathBundle, StoreAndLookup) {
    const TimeGrid grid(0.0, 1.0, 2);
    PathBundle b(grid, 2, {"X", "Y"});
    std::vector<double> states{1, 2, 3, 4, 5, 6};
    PathRecord r;
    r.path_index = 1;
    r.grid = &grid;
    r.dim = 2;
    r.states = states;
    b.store(r);
    EXPECT_EQ(b.component("Y"), 1u);
    EXPECT_EQ(b.at(1, 2, 0), 5.0);
    EXPECT_EQ(b.series(1, 1), (std::vector<double>{2, 4, 6}));
    EXPECT_EQ(b.terminal(0), (std::vector<double>{0, 5}));
    EXPECT_THROW(b.component("Z"), Error);
}
