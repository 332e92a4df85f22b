#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sbc/error.hpp"
#include "sbc/grid.hpp"
#include "sbc/model.hpp"
#include "sbc/parallel.hpp"
#include "sbc/regions.hpp"

namespace sbc {

enum class OutcomeKind { AbsorbTarget, AbsorbUnsafe, Mix };

/// What happens to a transient node under one disturbance atom.
struct AtomOutcome {
    double prob = 0.0;
    OutcomeKind kind = OutcomeKind::Mix;
    std::vector<std::pair<std::size_t, double>> weights; // Mix only; sums to 1
};

struct KernelRow {
    StateClass cls = StateClass::Unsafe;
    std::vector<AtomOutcome> atoms; // empty for absorbing nodes
    // Aggregated over atoms:
    double target_mass = 0.0;
    double unsafe_mass = 0.0;
    std::vector<std::pair<std::size_t, double>> mix; // (node, prob * weight), merged by node

    bool transient() const noexcept { return cls == StateClass::SafeNonTarget; }
};

/// Finite absorbing-chain approximation of the closed-loop dynamics on a grid.
/// Nodes in X_r or outside X absorb; every other node moves, per atom, into
/// the target, out of X, or onto interpolation weights over grid nodes.
struct TransitionKernel {
    Grid grid;
    std::vector<KernelRow> rows;
    std::vector<std::size_t> transient; // indices of transient nodes, ascending
    bool has_target = false;            // false for kernels built without a target set

    std::size_t size() const noexcept { return rows.size(); }
};

namespace detail {

inline std::string format_state(std::span<const double> x) {
    std::ostringstream os;
    os.precision(10);
    os << '[';
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << ']';
    return os.str();
}

} // namespace detail

inline TransitionKernel build_kernel(const SystemModel& model, const Grid& grid, const RegionSpec& regions,
                                     unsigned threads = 1) {
    if (grid.dim() != model.state_dim()) throw ValidationError("grid dimension differs from state dimension");
    TransitionKernel k;
    k.grid = grid;
    k.rows.resize(grid.size());
    const auto& dist = model.dist();

    parallel_for(grid.size(), threads, [&](std::size_t begin, std::size_t end) {
        State x(model.state_dim());
        State y(model.state_dim());
        std::vector<std::pair<std::size_t, double>> w;
        for (std::size_t i = begin; i < end; ++i) {
            x = grid.node(i);
            KernelRow& row = k.rows[i];
            row.cls = classify(regions, x);
            if (!row.transient()) continue;
            row.atoms.reserve(dist.size());
            for (std::size_t a = 0; a < dist.size(); ++a) {
                AtomOutcome out;
                out.prob = dist.prob(a);
                try {
                    model.step_into(x, dist.atom(a), y);
                } catch (const EvalError& e) {
                    throw EvalError("dynamics failed at node " + detail::format_state(x) + ": " + e.what());
                }
                switch (classify(regions, y)) {
                case StateClass::Target:
                    out.kind = OutcomeKind::AbsorbTarget;
                    row.target_mass += out.prob;
                    break;
                case StateClass::Unsafe:
                    out.kind = OutcomeKind::AbsorbUnsafe;
                    row.unsafe_mass += out.prob;
                    break;
                case StateClass::SafeNonTarget:
                    if (!grid.interpolate(y, w))
                        throw ValidationError("grid too small: image " + detail::format_state(y) + " of node " +
                                              detail::format_state(x) + " is safe but outside the grid box");
                    out.kind = OutcomeKind::Mix;
                    out.weights = w;
                    for (auto [j, wj] : w) row.mix.emplace_back(j, out.prob * wj);
                    break;
                }
                row.atoms.push_back(std::move(out));
            }
            std::sort(row.mix.begin(), row.mix.end());
            std::size_t kept = 0;
            for (std::size_t e = 0; e < row.mix.size(); ++e) {
                if (kept > 0 && row.mix[kept - 1].first == row.mix[e].first)
                    row.mix[kept - 1].second += row.mix[e].second;
                else
                    row.mix[kept++] = row.mix[e];
            }
            row.mix.resize(kept);
            double total = row.target_mass + row.unsafe_mass;
            for (auto [j, p] : row.mix) total += p;
            if (std::fabs(total - 1.0) > 1e-9)
                throw NumericError("kernel row at node " + detail::format_state(x) + " has mass " +
                                   std::to_string(total));
        }
    });

    for (std::size_t i = 0; i < k.rows.size(); ++i) {
        if (k.rows[i].transient()) k.transient.push_back(i);
        if (k.rows[i].cls == StateClass::Target || k.rows[i].target_mass > 0.0) k.has_target = true;
    }
    return k;
}

/// Kernel for the exit (safety) value function: the target plays no role.
inline TransitionKernel build_exit_kernel(const SystemModel& model, const Grid& grid, const RegionSpec& regions,
                                          unsigned threads = 1) {
    return build_kernel(model, grid, regions.without_target(), threads);
}

} // namespace sbc
