#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msde/core/error.hpp"
#include "msde/core/time_grid.hpp"
#include "msde/finance/lookback.hpp"

namespace msde {

/// A bounded option on one underlying.
///
/// kind / payoff:
///   european: call min((S_T - K)^+, cap), put min((K - S_T)^+, cap)
///   asian:    call/put on A = T^-1 int_0^T S dt (trapezoid)
///   lookback: fixed min((M - K)^+, cap), floating min((M - S_T)^+, cap), where M is the
///             mollified running supremum of a(theta) S_{T+theta}
///   custom:   unit (payoff 1, at most cap), asset min(S_T, cap)
struct OptionSpec {
    std::string kind = "european";
    std::string payoff = "call";
    double strike = 1.0;
    std::optional<double> cap;
    double maturity = 1.0;
    double tau = 0.0;
    /// Lookback mollification width; NaN means four grid steps.
    double delta = std::numeric_limits<double>::quiet_NaN();
    std::string weight = "one";

    void validate() const {
        if (!cap) throw Error(ErrorCode::UnboundedPayoff, "option payoff needs a declared cap");
        require(*cap > 0.0 && std::isfinite(*cap), "option cap must be positive and finite", ErrorCode::UnboundedPayoff);
        require(maturity > 0.0, "maturity must be positive");
        require(tau >= 0.0 && tau <= maturity, "valuation time must lie in [0, T]");
        if (tau != 0.0) {
            throw Error(ErrorCode::Unsupported, "conditional prices at tau > 0 are not supported");
        }
        auto one_of = [&](std::initializer_list<const char*> allowed) {
            for (const char* a : allowed) {
                if (payoff == a) return;
            }
            throw Error(ErrorCode::InvalidArgument, "payoff '" + payoff + "' is not valid for kind '" + kind + "'");
        };
        if (kind == "european" || kind == "asian") {
            one_of({"call", "put"});
        } else if (kind == "lookback") {
            one_of({"fixed", "floating"});
            require(std::isnan(delta) || delta > 0.0, "lookback delta must be positive");
            if (weight != "one" && weight != "ramp") {
                throw Error(ErrorCode::InvalidArgument, "unknown weight function '" + weight + "'");
            }
        } else if (kind == "custom") {
            one_of({"unit", "asset"});
        } else {
            throw Error(ErrorCode::InvalidArgument,
                        "unknown option kind '" + kind + "' (available: european, asian, lookback, custom)");
        }
    }
};

/// Undiscounted payoff of `spec` on a price path given at the nodes of `grid`.
class Payoff {
public:
    Payoff(OptionSpec spec, const TimeGrid& grid) : spec_(std::move(spec)), grid_(grid) {
        spec_.validate();
        require(std::abs(grid.t_end() - spec_.maturity) <= 1e-9 * std::max(1.0, spec_.maturity) && grid.t0() == 0.0,
                "simulation grid must run from 0 to the option maturity");
        cap_ = *spec_.cap;
        if (spec_.kind == "lookback") {
            double delta = std::isnan(spec_.delta) ? 4.0 * grid.step() : spec_.delta;
            const double K = spec_.strike;
            const bool fixed = spec_.payoff == "fixed";
            lookback_ = mollify_lookback(
                [K, fixed](double terminal, double sup) { return std::max((fixed ? sup - K : sup - terminal), 0.0); },
                weights::by_name(spec_.weight, spec_.maturity), delta);
        }
    }

    const OptionSpec& spec() const noexcept { return spec_; }

    double operator()(std::span<const double> s) const {
        const double K = spec_.strike;
        double v = 0.0;
        if (spec_.kind == "european") {
            v = spec_.payoff == "call" ? std::max(s.back() - K, 0.0) : std::max(K - s.back(), 0.0);
        } else if (spec_.kind == "asian") {
            double acc = 0.0;
            for (std::size_t k = 1; k < s.size(); ++k) acc += 0.5 * (s[k - 1] + s[k]);
            double avg = acc / static_cast<double>(s.size() - 1);
            v = spec_.payoff == "call" ? std::max(avg - K, 0.0) : std::max(K - avg, 0.0);
        } else if (spec_.kind == "lookback") {
            v = (*lookback_)(grid_, s);
        } else if (spec_.payoff == "unit") {
            v = 1.0;
        } else {
            v = s.back();
        }
        return std::min(v, cap_);
    }

private:
    OptionSpec spec_;
    TimeGrid grid_;
    double cap_ = 0.0;
    std::optional<MollifiedLookback> lookback_;
};

} // namespace msde
