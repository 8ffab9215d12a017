#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "msde/engine/catalog.hpp"
#include "msde/engine/diagnostics.hpp"
#include "msde/engine/simulate.hpp"
#include "msde/ergodic/frozen.hpp"

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

/// b = 0, sigma = 1 slow Brownian motion next to an OU fast pair.
SlowFastSystem brownian_system() {
    auto s = catalog::constant_system({{"mu", 0.0}, {"s", 1.0}, {"rho", 0.0}});
    s.name = "brownian";
    return s;
}

} // namespace

TEST(Simulate, ZeroDynamicsStayAtInitialState) {
    const auto sys = catalog::zero_system();
    const auto grid = TimeGrid::with_step(0.0, 1.0, 0.01);
    const auto b = simulate_slow_fast(sys, 0.1, grid, StreamFamily(1), 20);
    for (std::size_t p = 0; p < 20; ++p) {
        for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
            ASSERT_EQ(b.at(p, k, 0), sys.x0[0]);
            ASSERT_EQ(b.at(p, k, 1), sys.y0[0]);
        }
    }
}

TEST(Simulate, AuxiliaryZeroDynamicsStayAtInitialState) {
    const auto sys = catalog::zero_system();
    const auto grid = TimeGrid::with_step(0.0, 1.0, 0.01);
    const auto b = simulate_auxiliary(sys, 0.1, grid, StreamFamily(1), 10);
    ASSERT_EQ(b.dim(), 4u);
    for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
        EXPECT_EQ(b.at(3, k, b.component("Xhat")), sys.x0[0]);
        EXPECT_EQ(b.at(3, k, b.component("Yhat")), sys.y0[0]);
    }
}

TEST(Simulate, RefOuFastStationaryVariance) {
    // Reduced path count; the tolerance is the 5% of the reference check.
    const auto sys = catalog::ref_ou();
    const auto grid = TimeGrid::with_step(0.0, 1.0, 1e-3);
    const std::size_t n = 20000;
    std::vector<double> sum(grid.n_nodes(), 0.0), sq(grid.n_nodes(), 0.0);
    std::vector<std::vector<double>> y(n);
    for_each_slow_fast_path(sys, 0.05, grid, StreamFamily(17), n, [&](const PathRecord& r) {
        std::vector<double> v(r.n_nodes());
        for (std::size_t k = 0; k < r.n_nodes(); ++k) v[k] = r.at(k, 1);
        y[r.path_index] = std::move(v);
    });
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t k = grid.nearest_node(0.5); k < grid.n_nodes(); ++k) {
        double m = 0.0, m2 = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            m += y[p][k];
            m2 += y[p][k] * y[p][k];
        }
        m /= n;
        acc += m2 / n - m * m;
        ++count;
    }
    EXPECT_NEAR(acc / count, 0.25, 0.05 * 0.25);
}

TEST(Simulate, FastSecondMomentStableAcrossEpsilon) {
    const auto sys = catalog::ref_ou();
    const auto grid = TimeGrid::with_step(0.0, 1.0, 1e-3);
    const auto a = max_fast_second_moment(simulate_slow_fast(sys, 0.2, grid, StreamFamily(3), 4000));
    const auto b = max_fast_second_moment(simulate_slow_fast(sys, 0.05, grid, StreamFamily(4), 4000));
    EXPECT_LT(std::abs(a.mean / b.mean - 1.0), 0.1);
}

TEST(Simulate, DeterministicAcrossWorkerCounts) {
    const auto sys = catalog::ref_ou();
    const auto grid = TimeGrid::with_step(0.0, 1.0, 1e-2);
    SimulationOptions one, many;
    many.workers = 3;
    const auto a = simulate_slow_fast(sys, 0.05, grid, StreamFamily(8), 300, one);
    const auto b = simulate_slow_fast(sys, 0.05, grid, StreamFamily(8), 300, many);
    EXPECT_TRUE(std::equal(a.raw().begin(), a.raw().end(), b.raw().begin(), b.raw().end()));
}

TEST(Simulate, AuxiliarySharesNoiseWithTruePath) {
    const auto sys = catalog::ref_ou();
    const auto grid = TimeGrid::with_step(0.0, 1.0, 1e-3);
    const auto a = simulate_slow_fast(sys, 0.05, grid, StreamFamily(5), 50);
    const auto b = simulate_auxiliary(sys, 0.05, grid, StreamFamily(5), 50);
    for (std::size_t p = 0; p < 50; ++p) {
        for (std::size_t k = 0; k < grid.n_nodes(); k += 50) {
            ASSERT_EQ(a.at(p, k, 0), b.at(p, k, 0));
            ASSERT_EQ(a.at(p, k, 1), b.at(p, k, 1));
        }
    }
}

TEST(Simulate, AbsentPerturbationIgnoresEta) {
    auto sys = catalog::ref_ou();
    const auto grid = TimeGrid::with_step(0.0, 1.0, 1e-2);
    const auto a = simulate_slow_fast(sys, 0.1, grid, StreamFamily(2), 50);
    sys.eta = 0.7;
    const auto b = simulate_slow_fast(sys, 0.1, grid, StreamFamily(2), 50);
    EXPECT_TRUE(std::equal(a.raw().begin(), a.raw().end(), b.raw().begin(), b.raw().end()));
}

TEST(Simulate, UnitEpsilonMatchesSingleScaleLaw) {
    const auto sys = catalog::ref_ou();
    const auto grid = TimeGrid::with_step(0.0, 1.0, 1e-3);
    const std::size_t n = 10000;
    const auto bundle = simulate_slow_fast(sys, 1.0, grid, StreamFamily(6), n);
    const auto eq = FrozenEquation::of(sys, 0.0, sys.x0);
    const auto direct = frozen_terminal_values(eq, sys.y0, 1.0, 1e-3, n, StreamFamily(7));
    EXPECT_LT(ks_statistic(bundle.terminal(1), direct), 1.63 / std::sqrt(static_cast<double>(n)));
}

TEST(Simulate, OverflowGuardReportsPath) {
    auto sys = catalog::constant_system({{"s", 0.0}});
    sys.b = scalar_field("10x", [](double, double x, double) { return 10.0 * x; });
    sys.x0 = {1.0};
    sys.horizon = 2.0;
    const auto grid = TimeGrid::with_step(0.0, 2.0, 1e-3);
    try {
        simulate_slow_fast(sys, 0.5, grid, StreamFamily(1), 3);
        FAIL();
    } catch (const NumericalBlowup& e) {
        EXPECT_EQ(e.path_index(), 0u);
        EXPECT_GT(e.time(), 1.7);
    }
}

TEST(Simulate, SubstepPolicy) {
    SimulationOptions o;
    EXPECT_EQ(resolve_substeps(1e-3, 0.05, o), 1u);
    EXPECT_EQ(resolve_substeps(1e-3, 0.0125, o), 2u);
    EXPECT_EQ(resolve_substeps(1e-3, 0.001, o), 20u);
    o.fast_substeps = 1;
    EXPECT_EQ(code_of([&] { resolve_substeps(1e-3, 0.0125, o); }), ErrorCode::StepTooCoarse);
}

TEST(Simulate, PerturbationExponentValidated) {
    auto sys = catalog::ref_ou();
    sys.D = scalar_field("one", [](double, double, double) { return 1.0; });
    sys.eta = 1.0;
    EXPECT_THROW(sys.validate(), Error);
    sys.eta = 0.5;
    EXPECT_NO_THROW(sys.validate());
}

TEST(Khasminskii, ClosedFormValues) {
    EXPECT_NEAR(khasminskii_delta(std::exp(-1.0)), std::exp(-1.0), 1e-15);
    EXPECT_NEAR(khasminskii_delta(std::exp(-16.0)), 2.0 * std::exp(-16.0), 1e-20);
    EXPECT_NEAR(khasminskii_delta(0.01), 0.01 * std::sqrt(std::sqrt(std::log(100.0))), 1e-17);
    EXPECT_NEAR(khasminskii_delta(0.01), 0.0146490, 5e-7);
    EXPECT_EQ(code_of([] { khasminskii_delta(1.0); }), ErrorCode::DegenerateEpsilon);
    EXPECT_EQ(code_of([] { khasminskii_delta(0.0); }), ErrorCode::DegenerateEpsilon);
}

TEST(Diagnostics, ConstantPaths) {
    const auto sys = catalog::zero_system(1, 1, {{"x0", 2.0}});
    const auto grid = TimeGrid::with_step(0.0, 1.0, 1e-2);
    const auto rep = check_moment_bounds(simulate_slow_fast(sys, 0.1, grid, StreamFamily(1), 10), 3.0);
    EXPECT_DOUBLE_EQ(rep.find("sup_moment").statistic, 8.0);
    EXPECT_TRUE(rep.has("increments_vanish"));
    EXPECT_TRUE(rep.passed());
}

TEST(Diagnostics, RefOuIncrementSlope) {
    const auto grid = TimeGrid::with_step(0.0, 1.0, 1e-3);
    const auto rep =
        check_moment_bounds(simulate_slow_fast(catalog::ref_ou(), 0.05, grid, StreamFamily(2), 2000), 2.0);
    EXPECT_NEAR(rep.find("increment_slope").statistic, 1.0, 0.1);
}

TEST(Diagnostics, BrownianFourthMomentSlope) {
    const auto grid = TimeGrid::with_step(0.0, 1.0, 1e-3);
    const auto rep = check_moment_bounds(simulate_slow_fast(brownian_system(), 0.2, grid, StreamFamily(3), 2000), 4.0);
    EXPECT_NEAR(rep.find("increment_slope").statistic, 2.0, 0.2);
}

TEST(Dissipativity, OuPairIsExactlyTwo) {
    const auto f = catalog::ou_linear(2.0, 1.0);
    RngStream rng(1, 0);
    EXPECT_NEAR(check_dissipativity(f.B, f.C, box_sampler(1, 1, 1.0, 5.0, 10.0), 1000, rng), 2.0, 1e-12);
}

TEST(Dissipativity, ExpansiveDriftHasWitness) {
    const auto B = scalar_field("+y", [](double, double, double y) { return y; });
    const auto C = scalar_field("0", [](double, double, double) { return 0.0; });
    RngStream rng(1, 0);
    try {
        check_dissipativity(B, C, box_sampler(1, 1, 1.0, 5.0, 10.0), 100, rng);
        FAIL();
    } catch (const DissipativityViolated& e) {
        EXPECT_EQ(e.code(), ErrorCode::DissipativityViolated);
        EXPECT_EQ(e.witness().y1.size(), 1u);
    }
}

TEST(Dissipativity, PerturbedOuScan) {
    const auto B = scalar_field("-2y+0.5sin", [](double, double, double y) { return -2.0 * y + 0.5 * std::sin(y); });
    const auto C = scalar_field("1", [](double, double, double) { return 1.0; });
    RngStream rng(4, 0);
    EXPECT_GE(check_dissipativity(B, C, box_sampler(1, 1, 1.0, 5.0, 10.0), 100000, rng), 1.5);
}

TEST(Diagnostics, SublinearitySpotCheck) {
    const auto sys = catalog::ref_ou();
    RngStream rng(1, 0);
    EXPECT_TRUE(check_sublinearity(sys.sigma, 1.0, 5.0, 1000, rng).passed);
}
