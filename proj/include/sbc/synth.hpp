#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "sbc/certificate.hpp"
#include "sbc/error.hpp"
#include "sbc/model.hpp"
#include "sbc/parallel.hpp"
#include "sbc/regions.hpp"
#include "sbc/simplex.hpp"

namespace sbc {

/// Monomial basis with a box bound on every coefficient.
struct Template {
    std::size_t dim = 0;
    std::vector<std::vector<unsigned>> exponents;
    double bound = 1e3;

    /// All monomials of total degree <= d in n variables, constant first,
    /// then by degree and lexicographically.
    static Template up_to_degree(std::size_t n, unsigned d, double bound = 1e3) {
        Template t;
        t.dim = n;
        t.bound = bound;
        std::vector<unsigned> e(n, 0);
        for (unsigned deg = 0; deg <= d; ++deg) {
            // enumerate exponent vectors summing to deg
            auto rec = [&](auto&& self, std::size_t i, unsigned left) -> void {
                if (i + 1 == n) {
                    e[i] = left;
                    t.exponents.push_back(e);
                    return;
                }
                for (unsigned k = left + 1; k-- > 0;) {
                    e[i] = k;
                    self(self, i + 1, left - k);
                }
            };
            if (n == 0) break;
            rec(rec, 0, deg);
        }
        return t;
    }

    std::size_t size() const { return exponents.size(); }

    void validate() const {
        if (dim == 0) throw ValidationError("template needs at least one variable");
        if (!(bound >= 0.0) || !std::isfinite(bound)) throw ValidationError("coefficient bound must be finite and >= 0");
        bool constant = false;
        for (std::size_t k = 0; k < exponents.size(); ++k) {
            if (exponents[k].size() != dim) throw ValidationError("template exponent vector has wrong length");
            if (std::all_of(exponents[k].begin(), exponents[k].end(), [](unsigned v) { return v == 0; }))
                constant = true;
            for (std::size_t j = 0; j < k; ++j)
                if (exponents[j] == exponents[k]) throw ValidationError("duplicate monomial in template");
        }
        if (!constant) throw ValidationError("template must include the constant monomial");
    }

    void basis(std::span<const double> x, std::vector<double>& out) const {
        out.resize(exponents.size());
        for (std::size_t k = 0; k < exponents.size(); ++k) out[k] = Polynomial::monomial(exponents[k], x);
    }
};

enum class SynthStatus { Validated, SampleOptimistic, Infeasible };

inline const char* to_string(SynthStatus s) {
    switch (s) {
    case SynthStatus::Validated: return "validated";
    case SynthStatus::SampleOptimistic: return "sample-optimistic";
    case SynthStatus::Infeasible: return "infeasible";
    }
    return "?";
}

struct SynthOptions {
    std::optional<double> gamma;         // discounted kinds
    std::optional<double> min_threshold; // require at least this epsilon (at most, for UnsafeReachUpper)
    double margin = 1e-3;                // added to the pointwise bound clauses; retried at 0 if infeasible
    CheckOptions check;                  // re-validation settings
    unsigned threads = 1;
};

struct SynthResult {
    SynthStatus status = SynthStatus::Infeasible;
    std::optional<Certificate> cert;
    double threshold = 0.0; // epsilon of the certificate's condition
    double margin_used = 0.0;
    std::size_t lp_rows = 0;
    std::size_t lp_rows_loaded = 0;
    std::size_t lp_iterations = 0;
    std::size_t points_dropped = 0; // sample points whose expectation could not be evaluated
    std::optional<CheckReport> validation;
    std::string message;
};

namespace detail {

struct SynthRow {
    std::vector<double> a; // over template coefficients
    Sense sense;
    double rhs;
};

// Rows contributed by one sample point; empty if evaluation fails.
inline bool clause_rows(const SystemModel& model, const RegionSpec& regions, const Template& tmpl,
                        const Condition& cd, double margin, std::span<const double> x, std::vector<SynthRow>& out) {
    const std::size_t k = tmpl.size();
    StateClass cls = classify(regions, x);
    if (!uses_target(cd.kind) && cls == StateClass::Target) cls = StateClass::SafeNonTarget;
    std::vector<double> phi;
    tmpl.basis(x, phi);
    for (double v : phi)
        if (!std::isfinite(v)) return false;

    auto drift = [&](double scale, Sense s) -> bool {
        std::vector<double> a = phi, py;
        State y(model.state_dim());
        const auto& dist = model.dist();
        for (std::size_t i = 0; i < dist.size(); ++i) {
            try {
                model.step_into(x, dist.atom(i), y);
            } catch (const EvalError&) {
                return false;
            }
            tmpl.basis(y, py);
            for (std::size_t j = 0; j < k; ++j) a[j] -= scale * dist.probs()[i] * py[j];
        }
        for (double v : a)
            if (!std::isfinite(v)) return false;
        out.push_back({std::move(a), s, 0.0});
        return true;
    };
    auto bound = [&](Sense s, double rhs) { out.push_back({phi, s, rhs}); };

    switch (cd.kind) {
    case ConditionKind::SafetyLower:
        if (cls != StateClass::Unsafe) {
            if (!drift(1.0, Sense::Ge)) return false;
        } else {
            bound(Sense::Ge, 1.0 + margin);
        }
        bound(Sense::Ge, margin);
        break;
    case ConditionKind::UnsafeReachUpper:
        if (cls == StateClass::SafeNonTarget) return drift(1.0, Sense::Ge);
        bound(Sense::Ge, (cls == StateClass::Target ? 1.0 : 0.0) + margin);
        break;
    case ConditionKind::RaLowerA1:
    case ConditionKind::RaLowerDiscounted:
        if (cls == StateClass::SafeNonTarget)
            return drift(cd.kind == ConditionKind::RaLowerDiscounted ? cd.gamma : 1.0, Sense::Le);
        bound(Sense::Le, (cls == StateClass::Target ? 1.0 : 0.0) - margin);
        break;
    case ConditionKind::LivenessUpperDiscounted:
        if (cls != StateClass::Unsafe) return drift(cd.gamma, Sense::Le);
        bound(Sense::Le, 1.0 - margin);
        break;
    case ConditionKind::RaLowerPair:
        throw ValidationError("synthesis does not support the pair condition");
    }
    return true;
}

} // namespace detail

/// Fits a polynomial certificate for `kind` by linear programming over the
/// clauses sampled at `samples`, optimizing the threshold at the initial
/// states, and re-checks the result on the independent point set
/// `validation`.
inline SynthResult synthesize(const SystemModel& model, const RegionSpec& regions, ConditionKind kind,
                              const Template& tmpl, const PointSet& samples, const std::vector<State>& x0s,
                              const PointSet& validation, const SynthOptions& opt = {}) {
    tmpl.validate();
    if (tmpl.dim != model.state_dim()) throw ValidationError("template dimension does not match the system");
    if (kind == ConditionKind::RaLowerPair) throw ValidationError("synthesis does not support the pair condition");
    if (x0s.empty()) throw ValidationError("at least one initial state is required");
    Condition cd{kind, 0.0, 0.0, std::nullopt};
    if (has_gamma(kind)) {
        if (!opt.gamma || !(*opt.gamma > 0.0 && *opt.gamma < 1.0))
            throw ValidationError("discounted synthesis needs a discount factor in (0, 1)");
        cd.gamma = *opt.gamma;
    }
    if (opt.min_threshold && !(*opt.min_threshold >= 0.0 && *opt.min_threshold <= 1.0))
        throw ValidationError("threshold must lie in [0, 1]");

    const std::size_t k = tmpl.size();
    const std::size_t tvar = k; // threshold variable
    const bool cap = caps_at_x0(kind);

    auto build = [&](double margin, std::size_t& dropped) {
        const std::size_t n = samples.points.size();
        std::vector<std::vector<detail::SynthRow>> per(n);
        std::vector<char> ok(n, 1);
        parallel_for(n, opt.threads, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i)
                if (!detail::clause_rows(model, regions, tmpl, cd, margin, samples.points[i], per[i])) {
                    per[i].clear();
                    ok[i] = 0;
                }
        });
        dropped = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 0));

        LpProblem lp(k + 1);
        for (std::size_t j = 0; j < k; ++j) {
            lp.lower[j] = -tmpl.bound;
            lp.upper[j] = tmpl.bound;
        }
        lp.lower[tvar] = 0.0;
        lp.upper[tvar] = 1.0;
        // Lower kinds maximize t <= min v(x0); the others minimize t >= max v(x0).
        lp.maximize = !cap;
        lp.objective[tvar] = 1.0;
        std::vector<double> phi;
        for (const auto& x0 : x0s) {
            tmpl.basis(x0, phi);
            std::vector<std::pair<std::size_t, double>> c;
            for (std::size_t j = 0; j < k; ++j) c.push_back({j, phi[j]});
            c.push_back({tvar, -1.0});
            lp.add_row(std::move(c), cap ? Sense::Le : Sense::Ge, 0.0);
        }
        if (opt.min_threshold) {
            const double e = *opt.min_threshold;
            if (kind == ConditionKind::SafetyLower) lp.upper[tvar] = 1.0 - e;
            else if (cap) lp.upper[tvar] = e;
            else lp.lower[tvar] = e;
        }
        for (auto& rows : per)
            for (auto& r : rows) {
                std::vector<std::pair<std::size_t, double>> c;
                for (std::size_t j = 0; j < k; ++j)
                    if (r.a[j] != 0.0) c.push_back({j, r.a[j]});
                lp.add_row(std::move(c), r.sense, r.rhs);
            }
        return lp;
    };

    SynthResult res;
    RowGenOptions rg;
    for (std::size_t i = 0; i < x0s.size(); ++i) rg.seed_rows.push_back(i);
    LpSolution sol;
    for (double margin : {opt.margin, 0.0}) {
        LpProblem lp = build(margin, res.points_dropped);
        sol = simplex_solve_rowgen(lp, rg);
        res.lp_rows = lp.rows.size();
        res.lp_rows_loaded = sol.rows_used;
        res.lp_iterations += sol.iterations;
        res.margin_used = margin;
        if (sol.status == LpStatus::Optimal || margin == 0.0) break;
    }
    if (sol.status != LpStatus::Optimal) {
        res.status = SynthStatus::Infeasible;
        res.message = "no certificate in this template at these samples";
        return res;
    }

    Polynomial p{tmpl.dim, tmpl.exponents, std::vector<double>(sol.x.begin(), sol.x.begin() + static_cast<long>(k))};
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& x0 : x0s) {
        double v = p.eval(x0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double eps = kind == ConditionKind::SafetyLower ? 1.0 - hi : cap ? hi : lo;
    cd.epsilon = std::clamp(eps, 0.0, 1.0);
    res.threshold = cd.epsilon;
    res.cert = Certificate{std::move(p), std::nullopt, cd};

    res.validation = check_condition(model, regions, *res.cert, x0s, validation, opt.check);
    res.status = res.validation->passed ? SynthStatus::Validated : SynthStatus::SampleOptimistic;
    res.message = res.validation->passed
                      ? "re-validated on " + validation.label
                      : "violations on the independent point set (" + std::to_string(res.validation->violations) +
                            ")";
    return res;
}

} // namespace sbc
