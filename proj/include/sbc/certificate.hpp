#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sbc/error.hpp"
#include "sbc/grid.hpp"
#include "sbc/kernel.hpp"
#include "sbc/model.hpp"
#include "sbc/parallel.hpp"
#include "sbc/regions.hpp"
#include "sbc/solve.hpp"

namespace sbc {

// ---------------------------------------------------------------------------
// Candidate functions

/// Sum of c_k * prod_i x_i^{e_ki}.
struct Polynomial {
    std::size_t dim = 0;
    std::vector<std::vector<unsigned>> exponents;
    std::vector<double> coeffs;

    void validate() const {
        if (exponents.size() != coeffs.size())
            throw ValidationError("polynomial has " + std::to_string(exponents.size()) + " monomials but " +
                                  std::to_string(coeffs.size()) + " coefficients");
        for (std::size_t k = 0; k < exponents.size(); ++k) {
            if (exponents[k].size() != dim) throw ValidationError("monomial exponent vector has wrong length");
            for (std::size_t j = 0; j < k; ++j)
                if (exponents[j] == exponents[k]) throw ValidationError("duplicate monomial in polynomial");
        }
    }

    static double monomial(std::span<const unsigned> e, std::span<const double> x) {
        double m = 1.0;
        for (std::size_t i = 0; i < e.size(); ++i) m *= expr::detail::ipow(x[i], e[i]);
        return m;
    }

    double eval(std::span<const double> x) const {
        if (x.size() != dim) throw EvalError("polynomial evaluated at a point of wrong dimension");
        double acc = 0.0;
        for (std::size_t k = 0; k < coeffs.size(); ++k) acc += coeffs[k] * monomial(exponents[k], x);
        return acc;
    }
};

struct Constant {
    double value = 0.0;
};

/// Grid field whose value is fixed on X_r and/or off X, mirroring how the
/// value functions are defined there; interpolation is used only in between.
struct PinnedField {
    ValueField field;
    RegionSpec regions;
    std::optional<double> on_target;
    std::optional<double> off_safe;

    double at(std::span<const double> x) const {
        if (on_target && regions.target.eval(x)) return *on_target;
        if (off_safe && !regions.safe.eval(x)) return *off_safe;
        return field.at(x);
    }
};

using CertFunction = std::variant<ValueField, PinnedField, Polynomial, Constant>;

inline double eval_cert(const CertFunction& f, std::span<const double> x) {
    double v = std::visit(
        [&](const auto& g) -> double {
            using T = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<T, ValueField> || std::is_same_v<T, PinnedField>) return g.at(x);
            else if constexpr (std::is_same_v<T, Polynomial>) return g.eval(x);
            else return g.value;
        },
        f);
    if (!std::isfinite(v)) throw EvalError("certificate value is not finite");
    return v;
}

inline CertFunction scaled(const CertFunction& f, double s) {
    return std::visit(
        [&](const auto& g) -> CertFunction {
            using T = std::decay_t<decltype(g)>;
            T h = g;
            if constexpr (std::is_same_v<T, ValueField>) {
                for (double& v : h.values) v *= s;
                h.outside_default *= s;
            } else if constexpr (std::is_same_v<T, PinnedField>) {
                for (double& v : h.field.values) v *= s;
                h.field.outside_default *= s;
                if (h.on_target) *h.on_target *= s;
                if (h.off_safe) *h.off_safe *= s;
            } else if constexpr (std::is_same_v<T, Polynomial>) {
                for (double& c : h.coeffs) c *= s;
            } else {
                h.value *= s;
            }
            return h;
        },
        f);
}

// ---------------------------------------------------------------------------
// Conditions

enum class ConditionKind {
    SafetyLower,             // lower bound 1 - eps on the liveness probability
    UnsafeReachUpper,        // upper bound eps on the reach-avoid probability
    RaLowerA1,               // lower bound on reach-avoid, needs a.s. exit from X \ X_r
    RaLowerDiscounted,       // lower bound on reach-avoid via a discounted function
    LivenessUpperDiscounted, // lower bound eps on the exit probability
    RaLowerPair,             // lower bound on reach-avoid with an auxiliary function w
};

inline constexpr std::array<ConditionKind, 6> all_condition_kinds{
    ConditionKind::SafetyLower,       ConditionKind::UnsafeReachUpper,        ConditionKind::RaLowerA1,
    ConditionKind::RaLowerDiscounted, ConditionKind::LivenessUpperDiscounted, ConditionKind::RaLowerPair};

inline const char* to_string(ConditionKind k) {
    switch (k) {
    case ConditionKind::SafetyLower: return "safety-lower";
    case ConditionKind::UnsafeReachUpper: return "unsafe-reach-upper";
    case ConditionKind::RaLowerA1: return "ra-lower-a1";
    case ConditionKind::RaLowerDiscounted: return "ra-lower-discounted";
    case ConditionKind::LivenessUpperDiscounted: return "liveness-upper-discounted";
    case ConditionKind::RaLowerPair: return "ra-lower-pair";
    }
    return "?";
}

inline ConditionKind parse_condition_kind(const std::string& s) {
    for (ConditionKind k : all_condition_kinds)
        if (s == to_string(k)) return k;
    throw ValidationError("unknown condition kind '" + s + "'");
}

/// v(x0) is bounded above in the x0 clause (the certificate caps a probability).
inline bool caps_at_x0(ConditionKind k) {
    return k == ConditionKind::SafetyLower || k == ConditionKind::UnsafeReachUpper;
}

inline bool has_gamma(ConditionKind k) {
    return k == ConditionKind::RaLowerDiscounted || k == ConditionKind::LivenessUpperDiscounted ||
           k == ConditionKind::RaLowerPair;
}

/// Reach-avoid kinds treat X_r as absorbing; safety kinds only look at X.
inline bool uses_target(ConditionKind k) {
    return k != ConditionKind::SafetyLower && k != ConditionKind::LivenessUpperDiscounted;
}

struct Condition {
    ConditionKind kind = ConditionKind::RaLowerA1;
    double epsilon = 0.0;
    double gamma = 0.0;        // discounted kinds only; RaLowerPair stores gamma0 here for reference
    std::optional<Box> omega;  // RaLowerPair: points outside are not checked

    void validate() const {
        if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("epsilon must lie in [0, 1]");
        if ((kind == ConditionKind::RaLowerDiscounted || kind == ConditionKind::LivenessUpperDiscounted) &&
            !(gamma > 0.0 && gamma < 1.0))
            throw ValidationError("discount factor must lie in (0, 1)");
    }
};

struct Certificate {
    CertFunction v;
    std::optional<CertFunction> w; // RaLowerPair only
    Condition cond;
};

// ---------------------------------------------------------------------------
// Point sets

struct PointSet {
    std::vector<State> points;
    std::string label;
};

namespace detail {

inline void append_images(const SystemModel& model, const RegionSpec& regions, const std::vector<State>& from,
                          bool skip_target, std::vector<State>& out) {
    State y(model.state_dim());
    const std::size_t count = from.size();
    for (std::size_t i = 0; i < count; ++i) {
        StateClass c = classify(regions, from[i]);
        if (c == StateClass::Unsafe || (skip_target && c == StateClass::Target)) continue;
        for (const auto& th : model.dist().atoms()) {
            try {
                model.step_into(from[i], th, y);
            } catch (const EvalError&) {
                continue; // the checker reports the failing expectation at from[i]
            }
            out.push_back(y);
        }
    }
}

} // namespace detail

/// Points for checking a grid certificate: all nodes, a one-cell halo around
/// the box, and the one-step images of nodes in X (X \ X_r when the target
/// absorbs). Off-node interior points are left out: multilinear
/// interpolants of value functions do not satisfy the drift inequalities
/// between nodes.
inline PointSet grid_point_set(const SystemModel& model, const RegionSpec& regions, const Grid& grid,
                               bool target_absorbs) {
    PointSet ps;
    ps.points = grid.nodes();
    const std::size_t n = grid.dim();
    for (std::size_t k = 0; k < grid.size(); ++k) {
        auto mi = grid.multi_index(k);
        for (std::size_t i = 0; i < n; ++i) {
            if (mi[i] == 0) {
                State x = grid.node(k);
                x[i] -= grid.width()[i];
                ps.points.push_back(std::move(x));
            }
            if (mi[i] + 1 == grid.cells()[i]) {
                State x = grid.node(k);
                x[i] += grid.width()[i];
                ps.points.push_back(std::move(x));
            }
        }
    }
    const std::size_t base = ps.points.size();
    std::vector<State> nodes(ps.points.begin(), ps.points.begin() + static_cast<std::ptrdiff_t>(grid.size()));
    detail::append_images(model, regions, nodes, target_absorbs, ps.points);
    ps.label = std::to_string(grid.size()) + " grid nodes, " + std::to_string(base - grid.size()) +
               " halo points, " + std::to_string(ps.points.size() - base) + " node images";
    return ps;
}

/// Grid nodes in X (X \ X_r when the target absorbs) and their one-step
/// images; no halo.
inline PointSet node_point_set(const SystemModel& model, const RegionSpec& regions, const Grid& grid,
                               bool target_absorbs) {
    PointSet ps;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        State x = grid.node(k);
        StateClass c = classify(regions, x);
        if (c == StateClass::Unsafe || (target_absorbs && c == StateClass::Target)) continue;
        ps.points.push_back(std::move(x));
    }
    const std::size_t base = ps.points.size();
    detail::append_images(model, regions, std::vector<State>(ps.points), target_absorbs, ps.points);
    ps.label = std::to_string(base) + " grid nodes and " + std::to_string(ps.points.size() - base) +
               " one-step images";
    return ps;
}

/// `count` uniform samples from `box` that lie in X (X \ X_r when the target
/// absorbs), together with their one-step images.
inline PointSet sampled_point_set(const SystemModel& model, const RegionSpec& regions, const Box& box,
                                  bool target_absorbs, std::size_t count, std::uint64_t seed) {
    PointSet ps;
    Rng rng(seed);
    State x(box.dim());
    std::size_t attempts = 0;
    while (ps.points.size() < count) {
        if (++attempts > 1000 * (count + 1))
            throw ValidationError("sampling box rarely hits the safe set; cannot build a point set");
        for (std::size_t i = 0; i < box.dim(); ++i) x[i] = rng.uniform(box.lower[i], box.upper[i]);
        StateClass c = classify(regions, x);
        if (c == StateClass::Unsafe || (target_absorbs && c == StateClass::Target)) continue;
        ps.points.push_back(x);
    }
    detail::append_images(model, regions, std::vector<State>(ps.points), target_absorbs, ps.points);
    ps.label = std::to_string(count) + " sampled states and " + std::to_string(ps.points.size() - count) +
               " one-step images";
    return ps;
}

/// Adds `count` uniform samples of `box` that fall outside `exclude`.
inline void add_points_outside(PointSet& ps, const Box& box, const Box& exclude, std::size_t count,
                               std::uint64_t seed) {
    std::size_t added = 0;
    for (const auto& x : sample_box(box, count, seed))
        if (!exclude.contains(x)) {
            ps.points.push_back(x);
            ++added;
        }
    ps.label += ", " + std::to_string(added) + " random points outside the grid";
}

// ---------------------------------------------------------------------------
// Checking

enum class Clause : std::uint8_t {
    Initial,     // threshold at x0
    Drift,       // v against (gamma *) E[v o f]
    PairDrift,   // v <= E[w o f] - w
    Target,      // bound on X_r
    Outside,     // bound off X
    Nonnegative, // v >= 0 everywhere
};

inline constexpr std::size_t clause_count = 6;

inline const char* to_string(Clause c) {
    switch (c) {
    case Clause::Initial: return "initial";
    case Clause::Drift: return "drift";
    case Clause::PairDrift: return "pair-drift";
    case Clause::Target: return "target";
    case Clause::Outside: return "outside";
    case Clause::Nonnegative: return "nonnegative";
    }
    return "?";
}

struct Witness {
    std::size_t index = 0; // point index, or x0 index for the initial clause
    State point;
    Clause clause = Clause::Initial;
    double lhs = 0.0;
    double rhs = 0.0;
    double slack = 0.0;
    std::string note; // evaluation error text, if any
};

struct ClauseSummary {
    std::size_t count = 0;
    double worst = std::numeric_limits<double>::infinity(); // min slack; +inf if never evaluated
};

struct CheckReport {
    bool passed = false;
    double tolerance = 0.0;
    std::array<ClauseSummary, clause_count> clauses{};
    std::vector<Witness> witnesses; // most violated first
    std::size_t violations = 0;
    std::size_t points_checked = 0;
    std::size_t points_skipped = 0; // outside omega
    std::vector<std::string> caveats;

    const ClauseSummary& clause(Clause c) const { return clauses[static_cast<std::size_t>(c)]; }

    double worst_slack(bool include_initial = true) const {
        double w = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < clause_count; ++c)
            if (include_initial || c != static_cast<std::size_t>(Clause::Initial)) w = std::min(w, clauses[c].worst);
        return w;
    }

    std::string method() const { return "pointwise check, validated on " + std::to_string(points_checked) + " points"; }
};

struct CheckOptions {
    double tolerance = 1e-6;
    std::size_t max_witnesses = 10;
    unsigned threads = 1;
    bool skip_initial = false; // used by best_threshold
};

namespace detail {

struct Accumulator {
    std::array<ClauseSummary, clause_count> clauses{};
    std::vector<Witness> witnesses;
    std::size_t violations = 0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
    double tolerance = 0.0;
    std::size_t max_witnesses = 0;

    // slack = lhs - rhs for ">=", rhs - lhs for "<=".
    void record(std::size_t idx, std::span<const double> x, Clause c, double lhs, double rhs, bool geq,
                std::string note = {}) {
        double slack = note.empty() ? (geq ? lhs - rhs : rhs - lhs) : -std::numeric_limits<double>::infinity();
        auto& s = clauses[static_cast<std::size_t>(c)];
        ++s.count;
        s.worst = std::min(s.worst, slack);
        if (slack < -tolerance) {
            ++violations;
            witnesses.push_back({idx, State(x.begin(), x.end()), c, lhs, rhs, slack, std::move(note)});
            trim();
        }
    }

    void trim() {
        if (witnesses.size() <= 2 * max_witnesses) return;
        sort_witnesses();
        witnesses.resize(max_witnesses);
    }

    void sort_witnesses() {
        std::sort(witnesses.begin(), witnesses.end(), [](const Witness& a, const Witness& b) {
            if (a.slack != b.slack) return a.slack < b.slack;
            if (a.index != b.index) return a.index < b.index;
            return a.clause < b.clause;
        });
    }

    void merge(Accumulator&& o) {
        for (std::size_t c = 0; c < clause_count; ++c) {
            clauses[c].count += o.clauses[c].count;
            clauses[c].worst = std::min(clauses[c].worst, o.clauses[c].worst);
        }
        violations += o.violations;
        checked += o.checked;
        skipped += o.skipped;
        for (auto& w : o.witnesses) witnesses.push_back(std::move(w));
        trim();
    }
};

// Evaluates every clause of `cert` that applies at x.
inline void check_point(const SystemModel& model, const RegionSpec& regions, const Certificate& cert,
                        std::size_t idx, std::span<const double> x, Accumulator& acc) {
    const Condition& cd = cert.cond;
    if (cd.kind == ConditionKind::RaLowerPair && cd.omega && !cd.omega->contains(x)) {
        ++acc.skipped;
        return;
    }
    ++acc.checked;
    StateClass cls = classify(regions, x);
    if (!uses_target(cd.kind) && cls == StateClass::Target) cls = StateClass::SafeNonTarget;
    const bool in_x = cls != StateClass::Unsafe;

    double v;
    try {
        v = eval_cert(cert.v, x);
    } catch (const Error& e) {
        acc.record(idx, x, Clause::Drift, 0, 0, true, e.what());
        return;
    }
    auto expect = [&](const CertFunction& f) {
        return expectation(model, x, [&](std::span<const double> y) { return eval_cert(f, y); });
    };
    auto drift = [&](double scale, bool geq) {
        try {
            acc.record(idx, x, Clause::Drift, v, scale * expect(cert.v), geq);
        } catch (const Error& e) {
            acc.record(idx, x, Clause::Drift, v, 0, geq, e.what());
        }
    };

    switch (cd.kind) {
    case ConditionKind::SafetyLower:
        if (in_x) drift(1.0, true);
        else acc.record(idx, x, Clause::Outside, v, 1.0, true);
        acc.record(idx, x, Clause::Nonnegative, v, 0.0, true);
        break;
    case ConditionKind::UnsafeReachUpper:
        if (cls == StateClass::SafeNonTarget) drift(1.0, true);
        else if (cls == StateClass::Target) acc.record(idx, x, Clause::Target, v, 1.0, true);
        else acc.record(idx, x, Clause::Outside, v, 0.0, true);
        break;
    case ConditionKind::RaLowerA1:
    case ConditionKind::RaLowerDiscounted:
    case ConditionKind::RaLowerPair:
        if (cls == StateClass::SafeNonTarget) {
            drift(cd.kind == ConditionKind::RaLowerDiscounted ? cd.gamma : 1.0, false);
            if (cd.kind == ConditionKind::RaLowerPair) {
                if (!cert.w) throw ValidationError("pair condition needs the auxiliary function w");
                try {
                    double w = eval_cert(*cert.w, x);
                    acc.record(idx, x, Clause::PairDrift, v, expect(*cert.w) - w, false);
                } catch (const Error& e) {
                    acc.record(idx, x, Clause::PairDrift, v, 0, false, e.what());
                }
            }
        } else if (cls == StateClass::Target) {
            acc.record(idx, x, Clause::Target, v, 1.0, false);
        } else {
            acc.record(idx, x, Clause::Outside, v, 0.0, false);
        }
        break;
    case ConditionKind::LivenessUpperDiscounted:
        if (in_x) drift(cd.gamma, false);
        else acc.record(idx, x, Clause::Outside, v, 1.0, false);
        break;
    }
}

} // namespace detail

/// Evaluates every clause of the certificate's condition at every point and
/// the threshold clause at every initial state.
inline CheckReport check_condition(const SystemModel& model, const RegionSpec& regions, const Certificate& cert,
                                   const std::vector<State>& x0s, const PointSet& points,
                                   const CheckOptions& opt = {}) {
    cert.cond.validate();
    if (x0s.empty() && !opt.skip_initial) throw ValidationError("at least one initial state is required");
    if (cert.cond.kind == ConditionKind::RaLowerPair && !cert.w)
        throw ValidationError("pair condition needs the auxiliary function w");

    const std::size_t n = points.points.size();
    const unsigned threads = std::max(1U, opt.threads);
    const std::size_t chunks = std::min<std::size_t>(threads, std::max<std::size_t>(1, n));
    std::vector<detail::Accumulator> parts(chunks);
    for (auto& a : parts) {
        a.tolerance = opt.tolerance;
        a.max_witnesses = opt.max_witnesses;
    }
    const std::size_t per = (n + chunks - 1) / chunks;
    parallel_for(chunks, chunks, [&](std::size_t b, std::size_t e) {
        for (std::size_t c = b; c < e; ++c)
            for (std::size_t i = c * per; i < std::min(n, (c + 1) * per); ++i)
                detail::check_point(model, regions, cert, i, points.points[i], parts[c]);
    });
    detail::Accumulator acc = std::move(parts[0]);
    for (std::size_t c = 1; c < chunks; ++c) acc.merge(std::move(parts[c]));

    if (!opt.skip_initial) {
        const bool cap = caps_at_x0(cert.cond.kind);
        const double bound =
            cert.cond.kind == ConditionKind::SafetyLower ? 1.0 - cert.cond.epsilon : cert.cond.epsilon;
        for (std::size_t i = 0; i < x0s.size(); ++i) {
            try {
                acc.record(i, x0s[i], Clause::Initial, eval_cert(cert.v, x0s[i]), bound, !cap);
            } catch (const Error& e) {
                acc.record(i, x0s[i], Clause::Initial, 0, bound, !cap, e.what());
            }
        }
    }

    CheckReport rep;
    acc.sort_witnesses();
    if (acc.witnesses.size() > opt.max_witnesses) acc.witnesses.resize(opt.max_witnesses);
    rep.tolerance = opt.tolerance;
    rep.clauses = acc.clauses;
    rep.witnesses = std::move(acc.witnesses);
    rep.violations = acc.violations;
    rep.points_checked = acc.checked;
    rep.points_skipped = acc.skipped;
    rep.passed = rep.worst_slack(!opt.skip_initial) >= -opt.tolerance;
    if (cert.cond.kind == ConditionKind::RaLowerDiscounted && x0s.size() > 1)
        rep.caveats.push_back("discounted condition with several initial states: Ṽ_γ need not converge "
                              "uniformly, so failure here does not rule out a certificate");
    if (std::holds_alternative<Polynomial>(cert.v))
        rep.caveats.push_back("polynomial certificate: boundedness over X is only observed on the point set");
    return rep;
}

/// The tightest threshold the x0 clause admits, provided every other clause
/// passes: 1 - max v(x0) for SafetyLower, max v(x0) for UnsafeReachUpper and
/// min v(x0) for the lower-bound kinds. Throws VerificationError otherwise.
inline double best_threshold(const SystemModel& model, const RegionSpec& regions, const Certificate& cert,
                             const std::vector<State>& x0s, const PointSet& points, CheckOptions opt = {}) {
    if (x0s.empty()) throw ValidationError("at least one initial state is required");
    opt.skip_initial = true;
    CheckReport rep = check_condition(model, regions, cert, x0s, points, opt);
    if (!rep.passed) {
        std::string msg = "certificate fails its structural clauses; no threshold";
        if (!rep.witnesses.empty()) {
            const Witness& w = rep.witnesses.front();
            msg += " (" + std::string(to_string(w.clause)) + " at " + detail::format_state(w.point) +
                   ", slack " + std::to_string(w.slack) + ")";
        }
        throw VerificationError(msg);
    }
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& x0 : x0s) {
        double v = eval_cert(cert.v, x0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double eps;
    switch (cert.cond.kind) {
    case ConditionKind::SafetyLower: eps = 1.0 - hi; break;
    case ConditionKind::UnsafeReachUpper: eps = hi; break;
    default: eps = lo; break;
    }
    return std::clamp(eps, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Extraction from value fields

struct ExtractOptions {
    SolveOptions solve{};
    std::optional<double> gamma; // discounted kinds: fixed discount, otherwise searched
    double gamma_margin = 5e-5;  // search stops once the discounted value is this close to the undiscounted one
    unsigned threads = 1;
};

struct Extraction {
    Certificate cert;
    double value_at_x0 = 0.0;  // the field value the threshold was read from
    std::string source;        // which field the certificate came from
    std::optional<double> gamma1; // RaLowerPair: scale of w
};

namespace detail {

inline std::vector<double> field_at(const ValueField& f, const std::vector<State>& x0s) {
    std::vector<double> out;
    for (const auto& x : x0s) out.push_back(f.at(x));
    return out;
}

inline double min_of(const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }
inline double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

inline const std::vector<double>& gamma_ladder() {
    static const std::vector<double> ladder{0.5,         0.9,          0.99,         0.999,      0.9999,
                                            1.0 - 1e-5,  1.0 - 1e-6,   1.0 - 1e-7,   1.0 - 1e-8};
    return ladder;
}

// Smallest ladder discount whose field at every x0 is within `margin` of the
// undiscounted value there.
inline std::pair<double, ValueField> search_gamma(const TransitionKernel& k, Objective obj,
                                                  const ValueField& undiscounted, const std::vector<State>& x0s,
                                                  const ExtractOptions& opt) {
    std::vector<double> want = field_at(undiscounted, x0s);
    Solution last;
    double g = 0.0;
    for (double cand : gamma_ladder()) {
        g = cand;
        last = solve_discounted(k, g, opt.solve, obj);
        std::vector<double> got = field_at(last.field, x0s);
        bool close = true;
        for (std::size_t i = 0; i < got.size(); ++i) close = close && got[i] >= want[i] - opt.gamma_margin;
        if (close) break;
    }
    return {g, std::move(last.field)};
}

inline std::string argmax_node(const ValueField& f) {
    auto it = std::max_element(f.values.begin(), f.values.end());
    return format_state(f.grid.node(static_cast<std::size_t>(it - f.values.begin())));
}

} // namespace detail

/// Box containing the grid box and the images of all grid nodes: a
/// superset of X and its one-step reachable set when X lies in the grid.
inline Box omega_from_grid(const SystemModel& model, const Grid& grid) {
    Box b = grid.box();
    State y(model.state_dim());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        State x = grid.node(k);
        for (const auto& th : model.dist().atoms()) {
            model.step_into(x, th, y);
            for (std::size_t i = 0; i < y.size(); ++i) {
                b.lower[i] = std::min(b.lower[i], y[i]);
                b.upper[i] = std::max(b.upper[i], y[i]);
            }
        }
    }
    return b;
}

/// Builds a grid certificate for `kind` from the value function that the
/// corresponding necessity argument uses:
///   SafetyLower, LivenessUpperDiscounted  <- (discounted) exit probability
///   UnsafeReachUpper, RaLowerA1            <- reach-avoid probability
///   RaLowerDiscounted                      <- discounted reach-avoid value
///   RaLowerPair                            <- v = Ṽ_g0, w = g1 Ṽ_g0, g1 = g0 / (1 - g0)
/// The threshold is set to the tightest value the field allows at the x0s.
inline Extraction extract_certificate(const SystemModel& model, const RegionSpec& regions, const Grid& grid,
                                      ConditionKind kind, const std::vector<State>& x0s,
                                      const ExtractOptions& opt = {}) {
    if (x0s.empty()) throw ValidationError("at least one initial state is required");
    if (opt.gamma && !(*opt.gamma > 0.0 && *opt.gamma < 1.0))
        throw ValidationError("discount factor must lie in (0, 1)");
    Extraction ex;
    ex.cert.cond.kind = kind;
    const bool exit_side = !uses_target(kind);
    TransitionKernel k = exit_side ? build_exit_kernel(model, grid, regions, opt.threads)
                                   : build_kernel(model, grid, regions, opt.threads);
    const Objective obj = exit_side ? Objective::SafetyExit : Objective::ReachAvoid;

    ValueField v;
    switch (kind) {
    case ConditionKind::SafetyLower:
        v = solve_safety_exit(k, opt.solve).field;
        ex.source = "exit probability";
        break;
    case ConditionKind::UnsafeReachUpper:
        v = solve_reach_avoid(k, opt.solve).field;
        ex.source = "reach-avoid probability";
        break;
    case ConditionKind::RaLowerA1: {
        StayResult a1 = check_assumption1(k, opt.solve);
        if (!a1.holds)
            throw VerificationError("refusing extraction: the chain can stay in X \\ X_r forever (sup stay "
                                    "probability " + std::to_string(a1.sup_stay_prob) + " at node " +
                                    detail::argmax_node(a1.stay) + ")");
        v = solve_reach_avoid(k, opt.solve).field;
        ex.source = "reach-avoid probability";
        break;
    }
    case ConditionKind::RaLowerDiscounted:
    case ConditionKind::LivenessUpperDiscounted:
    case ConditionKind::RaLowerPair: {
        double g;
        if (opt.gamma) {
            g = *opt.gamma;
            v = solve_discounted(k, g, opt.solve, obj).field;
        } else {
            ValueField full = value_iteration(k, obj, 1.0, opt.solve).field;
            std::tie(g, v) = detail::search_gamma(k, obj, full, x0s, opt);
        }
        ex.cert.cond.gamma = g;
        ex.source = std::string(exit_side ? "discounted exit value" : "discounted reach-avoid value") +
                    " at gamma=" + std::to_string(g);
        break;
    }
    }
    v.outside_default = caps_at_x0(kind) || kind == ConditionKind::LivenessUpperDiscounted ? 1.0 : 0.0;
    std::vector<double> at = detail::field_at(v, x0s);
    ex.value_at_x0 = caps_at_x0(kind) ? detail::max_of(at) : detail::min_of(at);
    ex.cert.cond.epsilon =
        std::clamp(kind == ConditionKind::SafetyLower ? 1.0 - ex.value_at_x0 : ex.value_at_x0, 0.0, 1.0);

    // Pin the values the Bellman equations fix: exit value 1 off X; reach
    // values 1 on X_r and 0 off X.
    PinnedField pinned{std::move(v), regions, std::nullopt, std::nullopt};
    if (exit_side) {
        pinned.off_safe = 1.0;
    } else {
        pinned.on_target = 1.0;
        pinned.off_safe = 0.0;
    }
    ex.cert.v = std::move(pinned);
    if (kind == ConditionKind::RaLowerPair) {
        const double g0 = ex.cert.cond.gamma;
        const double g1 = g0 / (1.0 - g0);
        ex.gamma1 = g1;
        ex.cert.w = scaled(ex.cert.v, g1);
        ex.cert.cond.omega = omega_from_grid(model, grid);
    }
    return ex;
}

// ---------------------------------------------------------------------------
// Text format
//
//   sbc-certificate 1
//   kind ra-lower-a1
//   epsilon 0.29
//   gamma 0
//   omega <n> <lower...> <upper...>        (optional)
//   v grid <n> <lower...> <upper...> <cells...> <outside> <values...>
//   v polynomial <n> <terms> (<exponents...> <coeff>)*
//   v constant <value>
//   v pinned <target value|none> <outside value|none>
//   safe <predicate>
//   target <predicate>
//   field grid ...
//   w ...                                  (optional, same forms)
//   end

namespace detail {

inline void write_fn(std::ostream& os, const char* tag, const CertFunction& f) {
    os << tag << ' ';
    std::visit(
        [&](const auto& g) {
            using T = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<T, PinnedField>) {
                os << "pinned ";
                if (g.on_target) os << *g.on_target; else os << "none";
                os << ' ';
                if (g.off_safe) os << *g.off_safe; else os << "none";
                os << "\nsafe " << g.regions.safe.to_string() << "\ntarget " << g.regions.target.to_string() << '\n';
                write_fn(os, "field", g.field);
            } else if constexpr (std::is_same_v<T, ValueField>) {
                const Grid& gr = g.grid;
                os << "grid " << gr.dim();
                for (double v : gr.lower()) os << ' ' << v;
                for (double v : gr.upper()) os << ' ' << v;
                for (auto c : gr.cells()) os << ' ' << c;
                os << ' ' << g.outside_default << '\n';
                for (std::size_t i = 0; i < g.values.size(); ++i) os << g.values[i] << '\n';
            } else if constexpr (std::is_same_v<T, Polynomial>) {
                os << "polynomial " << g.dim << ' ' << g.coeffs.size() << '\n';
                for (std::size_t k = 0; k < g.coeffs.size(); ++k) {
                    for (unsigned e : g.exponents[k]) os << e << ' ';
                    os << g.coeffs[k] << '\n';
                }
            } else {
                os << "constant " << g.value << '\n';
            }
        },
        f);
}

class Tokens {
public:
    explicit Tokens(std::istream& is) : is_(is) {}

    std::string word(const char* what) {
        std::string s;
        if (!(is_ >> s)) throw ParseError(std::string("certificate file ended while reading ") + what, pos());
        return s;
    }

    double number(const char* what) {
        std::string s = word(what);
        try {
            std::size_t used = 0;
            double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ParseError(std::string("expected a number for ") + what + ", got '" + s + "'", pos());
        }
    }

    std::size_t count(const char* what) {
        double v = number(what);
        if (v < 0 || v != std::floor(v) || v > 1e9) throw ParseError(std::string("bad count for ") + what, pos());
        return static_cast<std::size_t>(v);
    }

    std::optional<double> optional_number(const char* what) {
        std::string s = word(what);
        if (s == "none") return std::nullopt;
        try {
            std::size_t used = 0;
            double v = std::stod(s, &used);
            if (used == s.size()) return v;
        } catch (const std::exception&) {
        }
        throw ParseError(std::string("expected a number or 'none' for ") + what + ", got '" + s + "'", pos());
    }

    // Rest of the current line after a keyword.
    std::string line(const char* keyword) {
        if (word(keyword) != keyword) throw ParseError(std::string("expected '") + keyword + "'", pos());
        std::string s;
        std::getline(is_, s);
        return s;
    }

    std::size_t pos() {
        auto p = is_.tellg();
        return p < 0 ? 0 : static_cast<std::size_t>(p);
    }

private:
    std::istream& is_;
};

inline CertFunction read_fn(Tokens& t) {
    std::string form = t.word("representation");
    if (form == "constant") return Constant{t.number("constant value")};
    if (form == "polynomial") {
        Polynomial p;
        p.dim = t.count("polynomial dimension");
        std::size_t terms = t.count("polynomial term count");
        for (std::size_t k = 0; k < terms; ++k) {
            std::vector<unsigned> e(p.dim);
            for (auto& x : e) x = static_cast<unsigned>(t.count("exponent"));
            p.exponents.push_back(std::move(e));
            p.coeffs.push_back(t.number("coefficient"));
        }
        p.validate();
        return p;
    }
    if (form == "pinned") {
        auto on_target = t.optional_number("target pin");
        auto off_safe = t.optional_number("outside pin");
        std::string safe = t.line("safe");
        std::string target = t.line("target");
        if (t.word("field") != "field") throw ParseError("expected 'field'", t.pos());
        CertFunction inner = read_fn(t);
        auto* field = std::get_if<ValueField>(&inner);
        if (!field) throw ParseError("pinned field must wrap a grid", t.pos());
        RegionSpec regions = RegionSpec::from_strings(field->grid.dim(), safe, target);
        return PinnedField{std::move(*field), std::move(regions), on_target, off_safe};
    }
    if (form == "grid") {
        std::size_t n = t.count("grid dimension");
        if (n == 0 || n > 16) throw ParseError("grid dimension out of range", t.pos());
        std::vector<double> lo(n), hi(n);
        std::vector<std::size_t> cells(n);
        for (auto& v : lo) v = t.number("grid lower");
        for (auto& v : hi) v = t.number("grid upper");
        for (auto& c : cells) c = t.count("grid cells");
        ValueField f{Grid(lo, hi, cells), {}, t.number("outside default")};
        f.values.resize(f.grid.size());
        for (auto& v : f.values) v = t.number("grid value");
        return f;
    }
    throw ParseError("unknown representation '" + form + "'", t.pos());
}

} // namespace detail

inline void write_certificate(std::ostream& os, const Certificate& c) {
    auto old = os.precision(17);
    os << "sbc-certificate 1\n";
    os << "kind " << to_string(c.cond.kind) << '\n';
    os << "epsilon " << c.cond.epsilon << '\n';
    os << "gamma " << c.cond.gamma << '\n';
    if (c.cond.omega) {
        os << "omega " << c.cond.omega->dim();
        for (double v : c.cond.omega->lower) os << ' ' << v;
        for (double v : c.cond.omega->upper) os << ' ' << v;
        os << '\n';
    }
    detail::write_fn(os, "v", c.v);
    if (c.w) detail::write_fn(os, "w", *c.w);
    os << "end\n";
    os.precision(old);
}

inline Certificate read_certificate(std::istream& is) {
    detail::Tokens t(is);
    if (t.word("header") != "sbc-certificate") throw ParseError("not a certificate file", 0);
    if (t.count("format version") != 1) throw ParseError("unsupported certificate format version", t.pos());
    Certificate c;
    bool have_v = false;
    for (;;) {
        std::string key = t.word("section");
        if (key == "end") break;
        if (key == "kind") c.cond.kind = parse_condition_kind(t.word("kind"));
        else if (key == "epsilon") c.cond.epsilon = t.number("epsilon");
        else if (key == "gamma") c.cond.gamma = t.number("gamma");
        else if (key == "omega") {
            std::size_t n = t.count("omega dimension");
            Box b{std::vector<double>(n), std::vector<double>(n)};
            for (auto& v : b.lower) v = t.number("omega lower");
            for (auto& v : b.upper) v = t.number("omega upper");
            c.cond.omega = std::move(b);
        } else if (key == "v") {
            c.v = detail::read_fn(t);
            have_v = true;
        } else if (key == "w") {
            c.w = detail::read_fn(t);
        } else {
            throw ParseError("unknown certificate section '" + key + "'", t.pos());
        }
    }
    if (!have_v) throw ParseError("certificate has no v section", t.pos());
    c.cond.validate();
    return c;
}

inline std::string certificate_to_string(const Certificate& c) {
    std::ostringstream os;
    write_certificate(os, c);
    return os.str();
}

} // namespace sbc
