#pragma once

// Fixed-point solvers for the three value functions on a transition kernel:
//
//   exit:        U = 1_{not X} + 1_X E[U o f]
//   reach-avoid: W = 1_{X_r} + 1_{X \ X_r} E[W o f]
//   discounted:  W = 1_{X_r} + g 1_{X \ X_r} E[W o f],   g in [0, 1)
//
// The undiscounted equations may have several bounded solutions; iterating
// from the indicator seed yields the least one, which is the probability.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sbc/error.hpp"
#include "sbc/grid.hpp"
#include "sbc/kernel.hpp"

namespace sbc {

enum class Objective {
    ReachAvoid, // probability of hitting X_r before leaving X
    SafetyExit, // probability of ever leaving X
};

struct SolveOptions {
    double tol = 1e-9;
    std::size_t max_iter = 1'000'000;
};

struct Solution {
    ValueField field;
    std::size_t iterations = 0;
    bool converged = false;
    double last_change = 0.0; // sup-norm change of the final sweep
};

namespace detail {

inline void require_objective(const TransitionKernel& k, Objective obj) {
    if (obj == Objective::SafetyExit && k.has_target)
        throw ValidationError("exit value function needs a kernel built without the target set");
}

// Value pinned at an absorbing node.
inline double absorbing_value(StateClass c, Objective obj) {
    if (obj == Objective::SafetyExit) return c == StateClass::Unsafe ? 1.0 : 0.0;
    return c == StateClass::Target ? 1.0 : 0.0;
}

inline double reward(const KernelRow& row, Objective obj) {
    return obj == Objective::SafetyExit ? row.unsafe_mass : row.target_mass;
}

inline double outside_value(Objective obj) { return obj == Objective::SafetyExit ? 1.0 : 0.0; }

// Indicator seed: absorbing nodes at their value, transient nodes at 0.
inline std::vector<double> seed(const TransitionKernel& k, Objective obj) {
    std::vector<double> v(k.size(), 0.0);
    for (std::size_t i = 0; i < k.size(); ++i)
        if (!k.rows[i].transient()) v[i] = absorbing_value(k.rows[i].cls, obj);
    return v;
}

inline double sweep_row(const KernelRow& row, Objective obj, double gamma, const std::vector<double>& in) {
    double acc = reward(row, obj);
    for (auto [j, p] : row.mix) acc += p * in[j];
    return gamma * acc;
}

} // namespace detail

/// One application of the (discounted) Bellman operator to a full node
/// vector: absorbing nodes are reset to their indicator values.
inline void apply_bellman(const TransitionKernel& k, Objective obj, double gamma, const std::vector<double>& in,
                          std::vector<double>& out) {
    out.resize(k.size());
    for (std::size_t i = 0; i < k.size(); ++i) {
        const KernelRow& row = k.rows[i];
        out[i] = row.transient() ? detail::sweep_row(row, obj, gamma, in) : detail::absorbing_value(row.cls, obj);
    }
}

/// Value iteration from the indicator seed with synchronous (double-buffered)
/// sweeps. Undiscounted iterates increase monotonically to the least fixed
/// point and each one is a valid lower bound of it.
///
/// Undiscounted runs stop once the change falls below `tol` and the
/// geometric tail estimated from the last two changes is below `tol` too;
/// discounted runs stop once the change falls below tol * (1 - gamma).
inline Solution value_iteration(const TransitionKernel& k, Objective obj, double gamma, const SolveOptions& opt) {
    detail::require_objective(k, obj);
    std::vector<double> cur = detail::seed(k, obj);
    std::vector<double> next = cur;
    Solution sol;
    double prev_change = std::numeric_limits<double>::infinity();
    for (std::size_t it = 1; it <= opt.max_iter; ++it) {
        double change = 0.0;
        for (std::size_t i : k.transient) {
            next[i] = detail::sweep_row(k.rows[i], obj, gamma, cur);
            change = std::max(change, std::fabs(next[i] - cur[i]));
        }
        cur.swap(next);
        sol.iterations = it;
        sol.last_change = change;
        bool done;
        if (change == 0.0) {
            done = true;
        } else if (gamma < 1.0) {
            done = change < opt.tol * (1.0 - gamma);
        } else {
            double ratio = change / prev_change;
            done = change < opt.tol && ratio < 1.0 && change * ratio / (1.0 - ratio) < opt.tol;
        }
        prev_change = change;
        if (done) {
            sol.converged = true;
            break;
        }
    }
    sol.field = ValueField{k.grid, std::move(cur), detail::outside_value(obj)};
    return sol;
}

/// Exit probability field V; the liveness probability is 1 - V.
inline Solution solve_safety_exit(const TransitionKernel& k, const SolveOptions& opt = {}) {
    return value_iteration(k, Objective::SafetyExit, 1.0, opt);
}

/// Reach-avoid probability field.
inline Solution solve_reach_avoid(const TransitionKernel& k, const SolveOptions& opt = {}) {
    return value_iteration(k, Objective::ReachAvoid, 1.0, opt);
}

/// Discounted value field. With Objective::SafetyExit this is the discounted
/// exit value, used for upper bounds of the liveness probability.
inline Solution solve_discounted(const TransitionKernel& k, double gamma, const SolveOptions& opt = {},
                                 Objective obj = Objective::ReachAvoid) {
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw ValidationError("discount factor must lie in [0, 1); at 1 the bounded solution is not unique");
    return value_iteration(k, obj, gamma, opt);
}

/// Exactly `steps` sweeps from the indicator seed: the probability of
/// reaching the target (or leaving X) within `steps` transitions.
inline ValueField finite_horizon(const TransitionKernel& k, Objective obj, std::size_t steps) {
    detail::require_objective(k, obj);
    std::vector<double> cur = detail::seed(k, obj);
    std::vector<double> next = cur;
    for (std::size_t s = 0; s < steps; ++s) {
        for (std::size_t i : k.transient) next[i] = detail::sweep_row(k.rows[i], obj, 1.0, cur);
        cur.swap(next);
    }
    return ValueField{k.grid, std::move(cur), detail::outside_value(obj)};
}

/// Direct dense solve of (I - gamma P_tt) v_t = b restricted to transient
/// nodes. Serves as the oracle for the iterative solvers.
inline ValueField solve_exact_small(const TransitionKernel& k, Objective obj, double gamma = 1.0) {
    detail::require_objective(k, obj);
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("discount factor must lie in [0, 1]");
    const std::size_t t = k.transient.size();
    if (t > 5000)
        throw ValidationError("exact solve limited to 5000 transient nodes, kernel has " + std::to_string(t));
    std::vector<double> values = detail::seed(k, obj);
    if (t > 0) {
        std::vector<std::ptrdiff_t> pos(k.size(), -1);
        for (std::size_t r = 0; r < t; ++r) pos[k.transient[r]] = static_cast<std::ptrdiff_t>(r);
        Eigen::MatrixXd a = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t));
        Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(t));
        for (std::size_t r = 0; r < t; ++r) {
            const KernelRow& row = k.rows[k.transient[r]];
            b[r] = gamma * detail::reward(row, obj);
            for (auto [j, p] : row.mix) {
                if (pos[j] >= 0)
                    a(static_cast<Eigen::Index>(r), pos[j]) -= gamma * p;
                else
                    b[r] += gamma * p * values[j];
            }
        }
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
        Eigen::VectorXd v = lu.solve(b);
        double rcond = lu.rcond();
        if (!(rcond > 1e-13) || !v.allFinite())
            throw NumericError("singular system: Assumption 1 (numerically) violated at gamma=" +
                               std::to_string(gamma) + " (rcond " + std::to_string(rcond) + ")");
        for (std::size_t r = 0; r < t; ++r) values[k.transient[r]] = v[static_cast<Eigen::Index>(r)];
    }
    return ValueField{k.grid, std::move(values), detail::outside_value(obj)};
}

struct StayResult {
    bool holds = false;
    double sup_stay_prob = 1.0;
    std::size_t iterations = 0;
    ValueField stay; // probability of remaining in X \ X_r forever (upper bound when not converged)
};

/// Assumption 1: from every transient state the chain leaves X \ X_r in
/// finite time almost surely. Computes the stay-forever probability as the
/// decreasing limit of s_{k+1} = 1_{X \ X_r} E[s_k o f] from s_0 = 1_{X \ X_r}.
inline StayResult check_assumption1(const TransitionKernel& k, const SolveOptions& opt = {}) {
    std::vector<double> cur(k.size(), 0.0);
    for (std::size_t i : k.transient) cur[i] = 1.0;
    std::vector<double> next = cur;
    StayResult res;
    double sup = k.transient.empty() ? 0.0 : 1.0;
    for (std::size_t it = 1; it <= opt.max_iter && sup >= opt.tol; ++it) {
        double change = 0.0;
        sup = 0.0;
        for (std::size_t i : k.transient) {
            double acc = 0.0;
            for (auto [j, p] : k.rows[i].mix) acc += p * cur[j];
            next[i] = acc;
            change = std::max(change, cur[i] - acc);
            sup = std::max(sup, acc);
        }
        cur.swap(next);
        res.iterations = it;
        if (change <= opt.tol * 1e-6) break; // stalled above tol: mass trapped in X \ X_r
    }
    res.sup_stay_prob = sup;
    res.holds = sup < opt.tol;
    res.stay = ValueField{k.grid, std::move(cur), 0.0};
    return res;
}

} // namespace sbc
