#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msde/core/parallel.hpp"
#include "msde/core/path_bundle.hpp"
#include "msde/core/rng.hpp"
#include "msde/core/statistics.hpp"
#include "msde/engine/simulate.hpp"
#include "msde/engine/system.hpp"

namespace msde {

/// dy_s = B(t, x, y_s) ds + C(t, x, y_s) dW~_s with (t, x) held fixed.
struct FrozenEquation {
    CoefficientField B;
    CoefficientField C;
    double t = 0.0;
    std::vector<double> x;

    static FrozenEquation of(const SlowFastSystem& sys, double t, std::vector<double> x) {
        require(x.size() == sys.slow_dim(), "frozen slow state has the wrong dimension");
        return {sys.B, sys.C, t, std::move(x)};
    }

    std::size_t fast_dim() const noexcept { return B.rows(); }

    /// Declared dissipativity constant of the fast drift, if any.
    std::optional<double> beta() const noexcept { return B.constants().dissipativity; }

    void validate() const {
        require(static_cast<bool>(B) && static_cast<bool>(C), "frozen equation needs both B and C");
        require(B.cols() == 1 && C.rows() == B.rows() && C.cols() == B.rows(),
                "frozen equation coefficients have inconsistent shapes");
        require(x.size() == B.slow_dim(), "frozen slow state has the wrong dimension");
    }
};

namespace detail {

class FrozenStepper {
public:
    FrozenStepper(const FrozenEquation& eq, double step, double guard = 1e8)
        : eq_(eq), l_(eq.fast_dim()), h_(step), sqrt_h_(std::sqrt(step)), guard_(guard), Bv_(l_), Cv_(l_ * l_),
          dW_(l_), scratch_(l_) {}

    void step(std::span<double> y, RngStream& rng) {
        rng.normals(dW_, sqrt_h_);
        advance(y, dW_);
    }

    /// Step with externally supplied increments (for coupled paths).
    void advance(std::span<double> y, std::span<const double> dW) {
        eq_.B.eval(eq_.t, eq_.x, y, Bv_);
        eq_.C.eval(eq_.t, eq_.x, y, Cv_);
        if (l_ == 1) {
            y[0] += Bv_[0] * h_ + Cv_[0] * dW[0];
        } else {
            for (std::size_t j = 0; j < l_; ++j) {
                double acc = Bv_[j] * h_;
                for (std::size_t k = 0; k < l_; ++k) acc += Cv_[j * l_ + k] * dW[k];
                scratch_[j] = acc;
            }
            for (std::size_t j = 0; j < l_; ++j) y[j] += scratch_[j];
        }
    }

    void check(std::span<const double> y, std::size_t path, double s) const { guard_state(y, guard_, path, s); }

    std::size_t dim() const noexcept { return l_; }
    double step_size() const noexcept { return h_; }

private:
    const FrozenEquation& eq_;
    std::size_t l_;
    double h_, sqrt_h_, guard_;
    std::vector<double> Bv_, Cv_, dW_, scratch_;
};

inline std::size_t steps_for(double duration, double step, const char* what) {
    require(step > 0.0, "frozen step must be positive");
    double n = std::round(duration / step);
    require(std::abs(n * step - duration) <= 1e-9 * std::max(1.0, duration),
            std::string(what) + " is not a whole number of steps");
    return static_cast<std::size_t>(n);
}

} // namespace detail

/// One Euler-Maruyama trajectory of the frozen equation on [0, horizon].
inline PathBundle simulate_frozen(const FrozenEquation& eq, std::span<const double> y_init, double horizon,
                                  double step, RngStream& rng) {
    eq.validate();
    require(horizon > 0.0, "frozen horizon must be positive");
    require(y_init.size() == eq.fast_dim(), "initial fast state has the wrong dimension");
    const TimeGrid grid = TimeGrid::with_step(0.0, horizon, step);
    std::vector<std::string> labels;
    for (std::size_t j = 0; j < eq.fast_dim(); ++j) labels.push_back(eq.fast_dim() == 1 ? "y" : "y" + std::to_string(j + 1));
    PathBundle bundle(grid, 1, labels);
    detail::FrozenStepper stepper(eq, grid.step());
    std::vector<double> y(y_init.begin(), y_init.end());
    for (std::size_t j = 0; j < y.size(); ++j) bundle.at(0, 0, j) = y[j];
    for (std::size_t k = 1; k < grid.n_nodes(); ++k) {
        stepper.step(y, rng);
        stepper.check(y, 0, grid.time(k));
        for (std::size_t j = 0; j < y.size(); ++j) bundle.at(0, k, j) = y[j];
    }
    return bundle;
}

/// Terminal states y_horizon of n independent frozen paths, row-major (path, component).
inline std::vector<double> frozen_terminal_values(const FrozenEquation& eq, std::span<const double> y_init,
                                                  double horizon, double step, std::size_t n_paths,
                                                  const StreamFamily& streams, unsigned workers = 1) {
    eq.validate();
    const std::size_t l = eq.fast_dim();
    const std::size_t n = detail::steps_for(horizon, step, "frozen horizon");
    std::vector<double> out(n_paths * l);
    parallel_for(n_paths, workers, [&](unsigned, std::size_t p) {
        detail::FrozenStepper stepper(eq, step);
        RngStream rng = streams.stream(p);
        std::vector<double> y(y_init.begin(), y_init.end());
        for (std::size_t k = 0; k < n; ++k) {
            stepper.step(y, rng);
            stepper.check(y, p, static_cast<double>(k + 1) * step);
        }
        std::copy(y.begin(), y.end(), out.begin() + static_cast<std::ptrdiff_t>(p * l));
    });
    return out;
}

struct ContractionRow {
    double s = 0.0;
    MonteCarloEstimate squared_distance;
    double bound = 0.0;
    bool violated = false;
};

struct ContractionReport {
    double beta = 0.0;
    double margin = 0.0;
    std::vector<ContractionRow> rows;

    bool any_violation() const noexcept {
        return std::any_of(rows.begin(), rows.end(), [](const ContractionRow& r) { return r.violated; });
    }
};

/// Coupled paths from y1 and y2 share every increment; compares E|y^1_s - y^2_s|^2 with
/// exp(-2 beta s)|y1 - y2|^2. A row is flagged if the estimate exceeds the bound by more
/// than `margin` (relative) plus three standard errors.
inline ContractionReport verify_contraction(const FrozenEquation& eq, std::span<const double> y1,
                                            std::span<const double> y2, std::vector<double> times,
                                            std::size_t n_paths, double step, const StreamFamily& streams,
                                            double margin = 0.01, unsigned workers = 1) {
    eq.validate();
    require(eq.beta().has_value(), "contraction check needs a declared dissipativity constant on B");
    require(y1.size() == eq.fast_dim() && y2.size() == eq.fast_dim(), "initial states have the wrong dimension");
    double d0 = 0.0;
    for (std::size_t j = 0; j < y1.size(); ++j) d0 += (y1[j] - y2[j]) * (y1[j] - y2[j]);
    require(d0 > 0.0, "contraction check needs y1 != y2");
    require(n_paths >= 2, "contraction check needs at least 2 paths");
    std::sort(times.begin(), times.end());
    std::vector<std::size_t> nodes;
    for (double s : times) {
        require(s >= 0.0, "contraction times must be non-negative");
        nodes.push_back(detail::steps_for(s, step, "contraction time"));
    }
    const std::size_t l = eq.fast_dim();
    const std::size_t n_times = times.size();
    std::vector<double> dist(n_paths * n_times);
    parallel_for(n_paths, workers, [&](unsigned, std::size_t p) {
        detail::FrozenStepper stepper(eq, step);
        RngStream rng = streams.stream(p);
        std::vector<double> a(y1.begin(), y1.end()), b(y2.begin(), y2.end()), dW(l);
        std::size_t k = 0;
        const double sqrt_h = std::sqrt(step);
        for (std::size_t i = 0; i < n_times; ++i) {
            for (; k < nodes[i]; ++k) {
                rng.normals(dW, sqrt_h);
                stepper.advance(a, dW);
                stepper.advance(b, dW);
                stepper.check(a, p, static_cast<double>(k + 1) * step);
                stepper.check(b, p, static_cast<double>(k + 1) * step);
            }
            double s2 = 0.0;
            for (std::size_t j = 0; j < l; ++j) s2 += (a[j] - b[j]) * (a[j] - b[j]);
            dist[p * n_times + i] = s2;
        }
    });
    ContractionReport report;
    report.beta = *eq.beta();
    report.margin = margin;
    std::vector<double> col(n_paths);
    for (std::size_t i = 0; i < n_times; ++i) {
        for (std::size_t p = 0; p < n_paths; ++p) col[p] = dist[p * n_times + i];
        ContractionRow row;
        row.s = times[i];
        row.squared_distance = mc_estimate(col);
        row.bound = std::exp(-2.0 * report.beta * times[i]) * d0;
        row.violated = row.squared_distance.mean > row.bound * (1.0 + margin) + 3.0 * row.squared_distance.std_error;
        report.rows.push_back(row);
    }
    return report;
}

/// Parameters of a single-trajectory time average. NaN burn-in or horizon defaults to
/// 10/beta and 200/beta from the declared dissipativity constant.
struct ErgodicParams {
    double burn_in = std::numeric_limits<double>::quiet_NaN();
    double horizon = std::numeric_limits<double>::quiet_NaN();
    double step = 1e-3;
    std::size_t batches = 64;
    std::size_t max_stored = 1u << 16;
    /// When positive, average over this many independent paths at time `horizon` instead
    /// of along one trajectory.
    std::size_t ensemble_paths = 0;
};

struct ResolvedErgodicParams {
    double burn_in;
    double horizon;
    std::size_t burn_steps;
    std::size_t total_steps;
    std::size_t samples;
};

inline ResolvedErgodicParams resolve(const ErgodicParams& p, const FrozenEquation& eq) {
    double burn = p.burn_in, horizon = p.horizon;
    if (std::isnan(burn) || std::isnan(horizon)) {
        require(eq.beta().has_value() && *eq.beta() > 0.0,
                "default burn-in/horizon need a declared dissipativity constant on B");
        if (std::isnan(burn)) burn = 10.0 / *eq.beta();
        if (std::isnan(horizon)) horizon = 200.0 / *eq.beta();
    }
    require(burn >= 0.0, "burn-in must be non-negative");
    require(horizon > burn, "ergodic horizon must exceed the burn-in");
    ResolvedErgodicParams r{burn, horizon, 0, 0, 0};
    r.burn_steps = static_cast<std::size_t>(std::llround(burn / p.step));
    r.total_steps = static_cast<std::size_t>(std::llround(horizon / p.step));
    r.samples = r.total_steps - r.burn_steps;
    if (p.ensemble_paths == 0) {
        require(p.batches >= 4 && r.samples >= 2 * p.batches, "too few post-burn-in samples for batch means");
    }
    return r;
}

/// Batch-means accumulator for a vector-valued time series of known length.
class BatchMeans {
public:
    BatchMeans(std::size_t dim, std::size_t batches, std::size_t n_samples)
        : dim_(dim), batches_(batches), n_(n_samples), sums_(batches * dim, 0.0), counts_(batches, 0),
          first_(dim, 0.0), constant_(dim, 1) {}

    void add(std::size_t index, std::span<const double> v) {
        std::size_t b = index * batches_ / n_;
        if (index == 0) std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(dim_), first_.begin());
        counts_[b] += 1;
        double* s = sums_.data() + b * dim_;
        for (std::size_t i = 0; i < dim_; ++i) {
            s[i] += v[i];
            if (v[i] != first_[i]) constant_[i] = 0;
        }
    }

    /// True if every sample of the component equals the first one.
    bool constant(std::size_t component) const noexcept { return constant_[component] != 0; }

    std::vector<double> batch_means(std::size_t component) const {
        std::vector<double> out(batches_);
        for (std::size_t b = 0; b < batches_; ++b) out[b] = sums_[b * dim_ + component] / static_cast<double>(counts_[b]);
        return out;
    }

    double mean(std::size_t component) const {
        if (constant(component)) return first_[component];
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t b = 0; b < batches_; ++b) {
            s += sums_[b * dim_ + component];
            n += counts_[b];
        }
        return s / static_cast<double>(n);
    }

    double std_error(std::size_t component) const {
        if (constant(component)) return 0.0;
        auto bm = batch_means(component);
        return mc_estimate(bm).std_error;
    }

    /// |mean(first half) - mean(second half)| in units of its batch-means SE; 0 when both
    /// halves are identical.
    double half_split_z(std::size_t component) const {
        if (constant(component)) return 0.0;
        auto bm = batch_means(component);
        const std::size_t h = batches_ / 2;
        std::span<const double> a(bm.data(), h), b(bm.data() + h, batches_ - h);
        auto ea = mc_estimate(a);
        auto eb = mc_estimate(b);
        double diff = std::abs(ea.mean - eb.mean);
        double se = combined_se(ea, eb);
        if (se == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        return diff / se;
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t samples() const noexcept { return n_; }

private:
    std::size_t dim_, batches_, n_;
    std::vector<double> sums_;
    std::vector<std::size_t> counts_;
    std::vector<double> first_;
    std::vector<char> constant_;
};

inline constexpr double nonstationary_z = 5.0;

/// Time average of f(y_s) over [burn_in, horizon] with batch-means standard errors.
struct TimeAverage {
    std::vector<double> mean;
    std::vector<double> std_error;
    std::size_t n_samples = 0;
    std::size_t batches = 0;
    double burn_in = 0.0;
    double horizon = 0.0;
    bool nonstationary = false;
};

using Integrand = std::function<void(std::span<const double> y, std::span<double> out)>;

inline TimeAverage ergodic_average(const FrozenEquation& eq, std::span<const double> y_init,
                                   const ErgodicParams& params, RngStream& rng, const Integrand& f,
                                   std::size_t out_dim) {
    eq.validate();
    require(y_init.size() == eq.fast_dim(), "initial fast state has the wrong dimension");
    const auto r = resolve(params, eq);
    std::vector<double> value(out_dim);
    TimeAverage out;
    out.burn_in = r.burn_in;
    out.horizon = r.horizon;

    if (params.ensemble_paths > 0) {
        require(params.ensemble_paths >= 2, "ensemble mode needs at least 2 paths");
        std::vector<double> samples(params.ensemble_paths * out_dim);
        detail::FrozenStepper stepper(eq, params.step);
        for (std::size_t p = 0; p < params.ensemble_paths; ++p) {
            RngStream sub(rng.master_seed(), rng.stream_index(), rng.substream() + 1 + p);
            std::vector<double> y(y_init.begin(), y_init.end());
            for (std::size_t k = 0; k < r.total_steps; ++k) {
                stepper.step(y, sub);
                stepper.check(y, p, static_cast<double>(k + 1) * params.step);
            }
            f(y, value);
            std::copy(value.begin(), value.end(), samples.begin() + static_cast<std::ptrdiff_t>(p * out_dim));
        }
        std::vector<double> col(params.ensemble_paths);
        for (std::size_t i = 0; i < out_dim; ++i) {
            for (std::size_t p = 0; p < params.ensemble_paths; ++p) col[p] = samples[p * out_dim + i];
            auto e = mc_estimate(col);
            out.mean.push_back(e.mean);
            out.std_error.push_back(e.std_error);
        }
        out.n_samples = params.ensemble_paths;
        return out;
    }

    detail::FrozenStepper stepper(eq, params.step);
    BatchMeans acc(out_dim, params.batches, r.samples);
    std::vector<double> y(y_init.begin(), y_init.end());
    for (std::size_t k = 0; k < r.total_steps; ++k) {
        stepper.step(y, rng);
        stepper.check(y, 0, static_cast<double>(k + 1) * params.step);
        if (k >= r.burn_steps) {
            f(y, value);
            acc.add(k - r.burn_steps, value);
        }
    }
    for (std::size_t i = 0; i < out_dim; ++i) {
        out.mean.push_back(acc.mean(i));
        out.std_error.push_back(acc.std_error(i));
        out.nonstationary = out.nonstationary || acc.half_split_z(i) > nonstationary_z;
    }
    out.n_samples = r.samples;
    out.batches = params.batches;
    return out;
}

struct DecayPoint {
    double lag = 0.0;
    double autocorrelation = 0.0;
};

/// Empirical description of the invariant measure of a frozen equation.
struct InvariantMeasureEstimate {
    double t = 0.0;
    std::vector<double> x;
    std::vector<double> mean;
    std::vector<double> mean_se;
    std::vector<double> covariance; ///< l x l
    std::vector<double> quantile_levels;
    std::vector<std::vector<double>> quantiles; ///< per component, one value per level
    double burn_in = 0.0;
    double horizon = 0.0;
    std::size_t n_samples = 0;
    double effective_sample_size = 0.0;
    /// Autocorrelation of the first fast component: the empirical stand-in for the
    /// (unspecified) rate at which the frozen law approaches equilibrium.
    std::vector<DecayPoint> decay;
    bool nonstationary = false;
    std::vector<std::string> warnings;
};

inline InvariantMeasureEstimate estimate_invariant(const FrozenEquation& eq, std::span<const double> y_init,
                                                   const ErgodicParams& params, RngStream& rng) {
    eq.validate();
    require(y_init.size() == eq.fast_dim(), "initial fast state has the wrong dimension");
    const auto r = resolve(params, eq);
    const std::size_t l = eq.fast_dim();
    const std::size_t stride = std::max<std::size_t>(1, (r.samples + params.max_stored - 1) / params.max_stored);

    BatchMeans acc(l, params.batches, r.samples);
    std::vector<double> sum(l, 0.0), cross(l * l, 0.0);
    std::vector<std::vector<double>> stored(l);
    detail::FrozenStepper stepper(eq, params.step);
    std::vector<double> y(y_init.begin(), y_init.end());
    for (std::size_t k = 0; k < r.total_steps; ++k) {
        stepper.step(y, rng);
        stepper.check(y, 0, static_cast<double>(k + 1) * params.step);
        if (k < r.burn_steps) continue;
        const std::size_t i = k - r.burn_steps;
        acc.add(i, y);
        for (std::size_t a = 0; a < l; ++a) {
            sum[a] += y[a];
            for (std::size_t b = 0; b < l; ++b) cross[a * l + b] += y[a] * y[b];
        }
        if (i % stride == 0) {
            for (std::size_t a = 0; a < l; ++a) stored[a].push_back(y[a]);
        }
    }

    InvariantMeasureEstimate est;
    est.t = eq.t;
    est.x = eq.x;
    est.burn_in = r.burn_in;
    est.horizon = r.horizon;
    est.n_samples = r.samples;
    const double n = static_cast<double>(r.samples);
    est.mean.resize(l);
    est.mean_se.resize(l);
    est.effective_sample_size = n;
    for (std::size_t a = 0; a < l; ++a) {
        est.mean[a] = sum[a] / n;
        est.mean_se[a] = acc.std_error(a);
        if (acc.half_split_z(a) > nonstationary_z) est.nonstationary = true;
    }
    est.covariance.resize(l * l);
    for (std::size_t a = 0; a < l; ++a) {
        for (std::size_t b = 0; b < l; ++b) {
            est.covariance[a * l + b] = cross[a * l + b] / n - est.mean[a] * est.mean[b];
        }
    }
    for (std::size_t a = 0; a < l; ++a) {
        for (std::size_t b = a + 1; b < l; ++b) {
            double s = 0.5 * (est.covariance[a * l + b] + est.covariance[b * l + a]);
            est.covariance[a * l + b] = est.covariance[b * l + a] = s;
        }
        est.covariance[a * l + a] = std::max(0.0, est.covariance[a * l + a]);
        double se2 = est.mean_se[a] * est.mean_se[a];
        if (se2 > 0.0) est.effective_sample_size = std::min(est.effective_sample_size, est.covariance[a * l + a] / se2);
    }
    est.effective_sample_size = std::min(est.effective_sample_size, n);
    if (est.nonstationary) {
        est.warnings.push_back("NonStationaryWarning: first- and second-half means differ by more than 5 batch SEs");
    }

    est.quantile_levels = {0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99};
    for (std::size_t a = 0; a < l; ++a) {
        std::vector<double> sorted = stored[a];
        std::sort(sorted.begin(), sorted.end());
        std::vector<double> q;
        for (double level : est.quantile_levels) q.push_back(sorted_quantile(sorted, level));
        est.quantiles.push_back(std::move(q));
    }

    const auto& series = stored[0];
    const std::size_t ns = series.size();
    double m = 0.0;
    for (double v : series) m += v;
    m /= static_cast<double>(ns);
    double var = 0.0;
    for (double v : series) var += (v - m) * (v - m);
    var /= static_cast<double>(ns);
    est.decay.push_back({0.0, 1.0});
    for (std::size_t lag = 1; lag * 10 <= ns; lag *= 2) {
        double c = 0.0;
        for (std::size_t i = 0; i + lag < ns; ++i) c += (series[i] - m) * (series[i + lag] - m);
        c /= static_cast<double>(ns - lag);
        est.decay.push_back({static_cast<double>(lag * stride) * params.step, var > 0.0 ? c / var : 0.0});
    }
    return est;
}

/// Averaged coefficient at one frozen point: value (rows x cols) with per-entry SE.
struct AveragedValue {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> value;
    std::vector<double> std_error;
    TimeAverage average;

    bool nonstationary() const noexcept { return average.nonstationary; }
};

namespace detail {

inline void require_ergodic_horizon(const FrozenEquation& eq, const ErgodicParams& params) {
    if (params.ensemble_paths > 0 || std::isnan(params.horizon) || !eq.beta()) return;
    if (params.horizon < 50.0 / *eq.beta()) {
        throw Error(ErrorCode::InsufficientHorizon, "ergodic horizon " + std::to_string(params.horizon) +
                                                        " is below 50/beta = " + std::to_string(50.0 / *eq.beta()));
    }
}

} // namespace detail

/// b_bar(t, x) = lim 1/tau int_0^tau b(t, x, y_s) ds along the frozen trajectory.
inline AveragedValue estimate_averaged_drift(const CoefficientField& b, const FrozenEquation& eq,
                                             std::span<const double> y_init, const ErgodicParams& params,
                                             RngStream& rng) {
    detail::require_ergodic_horizon(eq, params);
    require(b.cols() == 1, "drift must be a column vector");
    const std::vector<double> x = eq.x;
    const double t = eq.t;
    Integrand f = [&](std::span<const double> y, std::span<double> out) { b.eval(t, x, y, out); };
    AveragedValue v;
    v.rows = b.rows();
    v.cols = 1;
    v.average = ergodic_average(eq, y_init, params, rng, f, b.rows());
    v.value = v.average.mean;
    v.std_error = v.average.std_error;
    return v;
}

/// a_bar(t, x): time average of sigma sigma^T / 2, symmetrized.
inline AveragedValue estimate_averaged_diffusion(const CoefficientField& sigma, const FrozenEquation& eq,
                                                 std::span<const double> y_init, const ErgodicParams& params,
                                                 RngStream& rng) {
    detail::require_ergodic_horizon(eq, params);
    const std::size_t d = sigma.rows();
    require(sigma.cols() == d, "diffusion must be square");
    const std::vector<double> x = eq.x;
    const double t = eq.t;
    std::vector<double> s(d * d);
    Integrand f = [&, s](std::span<const double> y, std::span<double> out) mutable {
        sigma.eval(t, x, y, s);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < d; ++k) acc += s[i * d + k] * s[j * d + k];
                out[i * d + j] = 0.5 * acc;
            }
        }
    };
    AveragedValue v;
    v.rows = d;
    v.cols = d;
    v.average = ergodic_average(eq, y_init, params, rng, f, d * d);
    v.value = v.average.mean;
    v.std_error = v.average.std_error;
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) {
            double m = 0.5 * (v.value[i * d + j] + v.value[j * d + i]);
            double e = 0.5 * (v.std_error[i * d + j] + v.std_error[j * d + i]);
            v.value[i * d + j] = v.value[j * d + i] = m;
            v.std_error[i * d + j] = v.std_error[j * d + i] = e;
        }
    }
    return v;
}

} // namespace msde
