#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sbc/error.hpp"
#include "sbc/expr.hpp"
#include "sbc/model.hpp"

namespace sbc {

/// Closed axis-aligned box.
struct Box {
    std::vector<double> lower;
    std::vector<double> upper;

    std::size_t dim() const noexcept { return lower.size(); }

    bool contains(std::span<const double> x) const {
        for (std::size_t i = 0; i < lower.size(); ++i)
            if (!(x[i] >= lower[i] && x[i] <= upper[i])) return false;
        return true;
    }

    bool contains(const Box& other) const {
        for (std::size_t i = 0; i < lower.size(); ++i)
            if (other.lower[i] < lower[i] || other.upper[i] > upper[i]) return false;
        return true;
    }
};

enum class StateClass { Target, SafeNonTarget, Unsafe };

inline const char* to_string(StateClass c) {
    switch (c) {
    case StateClass::Target: return "target";
    case StateClass::SafeNonTarget: return "safe";
    case StateClass::Unsafe: return "unsafe";
    }
    return "?";
}

/// Safe set X and target set X_r, both as predicates over the state.
struct RegionSpec {
    expr::Predicate safe;
    expr::Predicate target;

    static RegionSpec from_strings(std::size_t n, const std::string& safe, const std::string& target) {
        return {expr::parse_predicate(safe, n), expr::parse_predicate(target, n)};
    }

    /// Same safe set with an empty target; every state of X is then
    /// transient, which is the setting of the exit (safety) value function.
    RegionSpec without_target() const { return {safe, expr::Predicate::constant(false, safe.state_dim())}; }
};

inline StateClass classify(const RegionSpec& regions, std::span<const double> x) {
    if (regions.target.eval(x)) return StateClass::Target;
    if (regions.safe.eval(x)) return StateClass::SafeNonTarget;
    return StateClass::Unsafe;
}

struct NestingReport {
    std::vector<State> witnesses; // target(x) && !safe(x)
    std::size_t samples = 0;
    std::size_t target_hits = 0;

    bool passed() const noexcept { return witnesses.empty(); }
    /// No sample fell in the target, so the check says nothing.
    bool vacuous() const noexcept { return target_hits == 0; }
};

/// Sampling check of X_r being a subset of X.
inline NestingReport validate_nesting(const RegionSpec& regions, const std::vector<State>& samples,
                                      std::size_t max_witnesses = 10) {
    if (samples.empty()) throw ValidationError("nesting check needs at least one sample");
    NestingReport rep;
    rep.samples = samples.size();
    for (const auto& x : samples) {
        if (!regions.target.eval(x)) continue;
        ++rep.target_hits;
        if (!regions.safe.eval(x) && rep.witnesses.size() < max_witnesses) rep.witnesses.push_back(x);
    }
    return rep;
}

/// `count` points drawn uniformly from `box`.
inline std::vector<State> sample_box(const Box& box, std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<State> out(count, State(box.dim()));
    for (auto& x : out)
        for (std::size_t i = 0; i < box.dim(); ++i) x[i] = rng.uniform(box.lower[i], box.upper[i]);
    return out;
}

/// Which sampled states have their one-step images included in the box.
enum class OmegaSource {
    Safe,      // images of X (the safety setting)
    Transient, // images of X \ X_r (reach-avoid: target states absorb)
};

/// Bounding box of the sampled states of X together with their one-step
/// images under every disturbance atom, padded by 1% of each side length.
inline Box compute_omega(const SystemModel& model, const RegionSpec& regions, const std::vector<State>& samples,
                         OmegaSource source = OmegaSource::Safe) {
    const std::size_t n = model.state_dim();
    Box box{std::vector<double>(n, std::numeric_limits<double>::infinity()),
            std::vector<double>(n, -std::numeric_limits<double>::infinity())};
    auto include = [&](std::span<const double> y) {
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(y[i])) throw EvalError("non-finite image point while computing omega");
            box.lower[i] = std::min(box.lower[i], y[i]);
            box.upper[i] = std::max(box.upper[i], y[i]);
        }
    };
    State y(n);
    bool any = false;
    for (const auto& x : samples) {
        StateClass c = classify(regions, x);
        if (c == StateClass::Unsafe) continue;
        any = true;
        include(x);
        if (source == OmegaSource::Transient && c == StateClass::Target) continue;
        for (const auto& th : model.dist().atoms()) {
            model.step_into(x, th, y);
            include(y);
        }
    }
    if (!any) throw ValidationError("no sample lies in the safe set; cannot compute omega");
    for (std::size_t i = 0; i < n; ++i) {
        double pad = 0.01 * (box.upper[i] - box.lower[i]);
        box.lower[i] -= pad;
        box.upper[i] += pad;
    }
    return box;
}

} // namespace sbc
