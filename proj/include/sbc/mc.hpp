#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sbc/error.hpp"
#include "sbc/model.hpp"
#include "sbc/parallel.hpp"
#include "sbc/regions.hpp"

namespace sbc {

/// Which way finite-horizon truncation biases the estimate.
enum class Bias {
    UpperForLiveness,   // P(stay through K) >= P(stay forever)
    LowerForReachAvoid, // P(reach within K) <= P(reach eventually)
};

inline const char* to_string(Bias b) {
    return b == Bias::UpperForLiveness ? "upper_biased_for_liveness" : "lower_biased_for_reach_avoid";
}

/// Hoeffding half-width for n Bernoulli trials at confidence 1 - delta.
inline double hoeffding_half_width(std::size_t n, double delta) {
    return std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(n)));
}

struct McEstimate {
    double p_hat = 0.0;
    std::size_t successes = 0;
    std::size_t n_trials = 0;
    int horizon = 0;
    double delta = 0.0;
    double half_width = 0.0;
    Bias bias = Bias::LowerForReachAvoid;
    std::optional<std::string> error; // first failing trial; counts cover trials before it

    double lower() const { return std::max(0.0, p_hat - half_width); }
    double upper() const { return std::min(1.0, p_hat + half_width); }
};

namespace detail {

enum class TrialOutcome : std::uint8_t { Failure, Success, Error };

template <class Trial>
McEstimate run_trials(std::size_t n, double delta, int horizon, Bias bias, std::uint64_t seed, unsigned threads,
                      Trial&& trial) {
    if (horizon < 1) throw ValidationError("Monte Carlo horizon must be at least 1");
    if (n < 1) throw ValidationError("Monte Carlo needs at least one trial");
    if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("confidence parameter delta must lie in (0, 1)");
    std::vector<TrialOutcome> outcome(n, TrialOutcome::Failure);
    std::vector<std::string> messages(n);
    parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
            Rng rng(Rng::derive(seed, t));
            try {
                outcome[t] = trial(rng) ? TrialOutcome::Success : TrialOutcome::Failure;
            } catch (const EvalError& e) {
                outcome[t] = TrialOutcome::Error;
                messages[t] = e.what();
            }
        }
    });
    McEstimate est;
    est.horizon = horizon;
    est.delta = delta;
    est.bias = bias;
    std::size_t t = 0;
    for (; t < n; ++t) {
        if (outcome[t] == TrialOutcome::Error) {
            est.error = "trial " + std::to_string(t) + ": " + messages[t];
            break;
        }
        if (outcome[t] == TrialOutcome::Success) ++est.successes;
    }
    est.n_trials = t;
    if (t == 0) throw EvalError("first Monte Carlo trial failed: " + *est.error);
    est.p_hat = static_cast<double>(est.successes) / static_cast<double>(t);
    est.half_width = hoeffding_half_width(t, delta);
    return est;
}

} // namespace detail

/// Fraction of trajectories from x0 that stay in X for steps 0..K. This
/// over-estimates the infinite-horizon liveness probability.
inline McEstimate estimate_liveness(const SystemModel& model, const RegionSpec& regions, const State& x0,
                                    int horizon, std::size_t n, double delta, std::uint64_t seed,
                                    unsigned threads = 1) {
    return detail::run_trials(n, delta, horizon, Bias::UpperForLiveness, seed, threads, [&](Rng& rng) {
        if (!regions.safe.eval(x0)) return false;
        State x = x0;
        State y(x.size());
        for (int l = 0; l < horizon; ++l) {
            model.step_into(x, sample_disturbance(model.dist(), rng), y);
            x.swap(y);
            if (!regions.safe.eval(x)) return false;
        }
        return true;
    });
}

/// Fraction of trajectories from x0 that hit X_r within K steps while
/// staying in X. This under-estimates the reach-avoid probability.
inline McEstimate estimate_reach_avoid(const SystemModel& model, const RegionSpec& regions, const State& x0,
                                       int horizon, std::size_t n, double delta, std::uint64_t seed,
                                       unsigned threads = 1) {
    return detail::run_trials(n, delta, horizon, Bias::LowerForReachAvoid, seed, threads, [&](Rng& rng) {
        State x = x0;
        State y(x.size());
        for (int l = 0;; ++l) {
            switch (classify(regions, x)) {
            case StateClass::Target: return true;
            case StateClass::Unsafe: return false;
            case StateClass::SafeNonTarget: break;
            }
            if (l == horizon) return false;
            model.step_into(x, sample_disturbance(model.dist(), rng), y);
            x.swap(y);
        }
    });
}

} // namespace sbc
