#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "sbc/error.hpp"

namespace sbc {

enum class Sense { Le, Ge, Eq };

inline const char* to_string(Sense s) {
    switch (s) {
    case Sense::Le: return "<=";
    case Sense::Ge: return ">=";
    case Sense::Eq: return "=";
    }
    return "?";
}

struct LpRow {
    std::vector<std::pair<std::size_t, double>> coeffs; // sparse: (variable, coefficient)
    Sense sense = Sense::Le;
    double rhs = 0.0;

    double activity(const std::vector<double>& x) const {
        double s = 0.0;
        for (auto [j, a] : coeffs) s += a * x[j];
        return s;
    }

    /// Amount by which x violates the row; zero or negative when satisfied.
    double violation(const std::vector<double>& x) const {
        double a = activity(x);
        switch (sense) {
        case Sense::Le: return a - rhs;
        case Sense::Ge: return rhs - a;
        case Sense::Eq: return std::fabs(a - rhs);
        }
        return 0.0;
    }
};

struct LpProblem {
    std::vector<double> objective;
    bool maximize = true;
    std::vector<LpRow> rows;
    std::vector<double> lower, upper;

    explicit LpProblem(std::size_t vars = 0)
        : objective(vars, 0.0), lower(vars, 0.0), upper(vars, std::numeric_limits<double>::infinity()) {}

    std::size_t num_vars() const { return objective.size(); }

    void add_row(std::vector<std::pair<std::size_t, double>> coeffs, Sense sense, double rhs) {
        rows.push_back({std::move(coeffs), sense, rhs});
    }

    bool bounded() const {
        for (std::size_t j = 0; j < num_vars(); ++j)
            if (!std::isfinite(lower[j]) || !std::isfinite(upper[j])) return false;
        return true;
    }

    void validate() const {
        const std::size_t n = num_vars();
        if (lower.size() != n || upper.size() != n) throw ValidationError("LP bound vectors do not match variable count");
        for (std::size_t j = 0; j < n; ++j) {
            if (!std::isfinite(objective[j])) throw ValidationError("LP objective has a non-finite coefficient");
            if (std::isnan(lower[j]) || std::isnan(upper[j]) || lower[j] > upper[j])
                throw ValidationError("LP variable " + std::to_string(j) + " has empty bounds");
        }
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (!std::isfinite(rows[i].rhs)) throw ValidationError("LP row " + std::to_string(i) + " has a non-finite rhs");
            for (auto [j, a] : rows[i].coeffs)
                if (j >= n || !std::isfinite(a))
                    throw ValidationError("LP row " + std::to_string(i) + " has a bad coefficient");
        }
    }
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

inline const char* to_string(LpStatus s) {
    switch (s) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
    }
    return "?";
}

struct LpSolution {
    LpStatus status = LpStatus::Infeasible;
    std::vector<double> x;
    double objective = 0.0;
    std::vector<double> duals; // one per row, for the problem's own sense; zero for rows never loaded
    std::size_t iterations = 0;
    std::size_t rows_used = 0; // rows in the final tableau (row generation loads a subset)

    double max_violation(const LpProblem& p) const {
        double v = 0.0;
        for (const auto& r : p.rows) v = std::max(v, r.violation(x));
        for (std::size_t j = 0; j < x.size(); ++j) v = std::max({v, p.lower[j] - x[j], x[j] - p.upper[j]});
        return v;
    }
};

struct SimplexOptions {
    double pivot_tol = 1e-9;
    std::size_t max_iterations = 0; // 0 picks a size-based cap
    std::size_t degenerate_streak = 50; // switch to Bland's rule after this many degenerate pivots in a row
};

namespace detail {

// Dense two-phase tableau over the standardized problem
//   max c'y  s.t.  A y (<=,>=,=) b,  b >= 0,  y >= 0.
class Tableau {
public:
    Tableau(std::size_t rows, std::size_t cols) : m_(rows), n_(cols), t_((rows + 1) * (cols + 1), 0.0), basis_(rows) {}

    double& at(std::size_t i, std::size_t j) { return t_[i * (n_ + 1) + j]; }
    double at(std::size_t i, std::size_t j) const { return t_[i * (n_ + 1) + j]; }
    double& rhs(std::size_t i) { return at(i, n_); }
    double& obj(std::size_t j) { return at(m_, j); }

    std::size_t rows() const { return m_; }
    std::size_t cols() const { return n_; }
    std::vector<std::size_t>& basis() { return basis_; }

    void pivot(std::size_t r, std::size_t c) {
        double* pr = &t_[r * (n_ + 1)];
        const double inv = 1.0 / pr[c];
        for (std::size_t j = 0; j <= n_; ++j) pr[j] *= inv;
        pr[c] = 1.0;
        for (std::size_t i = 0; i <= m_; ++i) {
            if (i == r) continue;
            double* pi = &t_[i * (n_ + 1)];
            const double f = pi[c];
            if (f == 0.0) continue;
            for (std::size_t j = 0; j <= n_; ++j) pi[j] -= f * pr[j];
            pi[c] = 0.0;
            if (i < m_ && pi[n_] < 0.0 && pi[n_] > -1e-12) pi[n_] = 0.0;
        }
        basis_[r] = c;
    }

    // Express the objective row in terms of the nonbasic columns.
    void price_out() {
        for (std::size_t i = 0; i < m_; ++i) {
            const double f = obj(basis_[i]);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j <= n_; ++j) obj(j) -= f * at(i, j);
        }
    }

    enum class Outcome { Optimal, Unbounded };

    // Primal simplex on the current objective row. Columns at or beyond
    // `allowed` never enter. Dantzig pricing, Bland's rule once a degenerate
    // streak is seen.
    Outcome run(std::size_t allowed, const SimplexOptions& opt, std::size_t cap, std::size_t& iterations) {
        const double tol = opt.pivot_tol;
        bool bland = false;
        std::size_t streak = 0;
        for (;;) {
            std::size_t enter = n_;
            double best = -tol;
            for (std::size_t j = 0; j < allowed; ++j) {
                if (obj(j) < best) {
                    enter = j;
                    if (bland) break;
                    best = obj(j);
                }
            }
            if (enter == n_) return Outcome::Optimal;

            std::size_t leave = m_;
            double ratio = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < m_; ++i) {
                const double a = at(i, enter);
                if (a <= tol) continue;
                const double q = std::max(0.0, at(i, n_)) / a;
                if (q < ratio - 1e-12) {
                    ratio = q;
                    leave = i;
                } else if (q <= ratio + 1e-12 && leave < m_) {
                    bool take = bland ? basis_[i] < basis_[leave] : a > at(leave, enter);
                    if (take) {
                        ratio = std::min(ratio, q);
                        leave = i;
                    }
                }
            }
            if (leave == m_) return Outcome::Unbounded;

            if (++iterations > cap)
                throw NumericError("simplex stalled after " + std::to_string(iterations - 1) + " iterations");
            streak = ratio <= 1e-12 ? streak + 1 : 0;
            if (streak >= opt.degenerate_streak) bland = true;
            pivot(leave, enter);
        }
    }

private:
    std::size_t m_, n_;
    std::vector<double> t_;
    std::vector<std::size_t> basis_;
};

} // namespace detail

/// Solves the LP with a dense two-phase primal simplex. Variables with a
/// finite lower bound are shifted, those bounded only above are reflected,
/// free ones are split; finite upper bounds become extra rows.
inline LpSolution simplex_solve(const LpProblem& p, const SimplexOptions& opt = {}) {
    p.validate();
    const std::size_t n = p.num_vars();

    // Column map: x_j = shift_j + sign_j * y_pos (- y_neg for free variables).
    struct VarMap {
        double shift = 0.0;
        double sign = 1.0;
        std::size_t pos = 0;
        std::size_t neg = SIZE_MAX;
    };
    std::vector<VarMap> vm(n);
    std::size_t ny = 0;
    struct StdRow {
        std::vector<std::pair<std::size_t, double>> a;
        Sense sense;
        double b;
        long source; // original row index, or -1 for a bound row
    };
    std::vector<StdRow> rows;
    for (std::size_t j = 0; j < n; ++j) {
        const double l = p.lower[j], u = p.upper[j];
        if (std::isfinite(l)) {
            vm[j] = {l, 1.0, ny++};
            if (std::isfinite(u)) rows.push_back({{{vm[j].pos, 1.0}}, Sense::Le, u - l, -1});
        } else if (std::isfinite(u)) {
            vm[j] = {u, -1.0, ny++};
        } else {
            vm[j].pos = ny++;
            vm[j].neg = ny++;
        }
    }
    const std::size_t bound_rows = rows.size();
    for (std::size_t i = 0; i < p.rows.size(); ++i) {
        const LpRow& r = p.rows[i];
        StdRow s{{}, r.sense, r.rhs, static_cast<long>(i)};
        for (auto [j, a] : r.coeffs) {
            if (a == 0.0) continue;
            s.b -= a * vm[j].shift;
            s.a.push_back({vm[j].pos, a * vm[j].sign});
            if (vm[j].neg != SIZE_MAX) s.a.push_back({vm[j].neg, -a});
        }
        rows.push_back(std::move(s));
    }

    const std::size_t m = rows.size();
    std::vector<bool> negated(m, false);
    std::size_t slacks = 0, artificials = 0;
    for (std::size_t i = 0; i < m; ++i) {
        auto& r = rows[i];
        if (r.b < 0.0) {
            negated[i] = true;
            r.b = -r.b;
            for (auto& e : r.a) e.second = -e.second;
            if (r.sense != Sense::Eq) r.sense = r.sense == Sense::Le ? Sense::Ge : Sense::Le;
        }
        if (r.sense != Sense::Eq) ++slacks;
        if (r.sense != Sense::Le) ++artificials;
    }

    const std::size_t cols = ny + slacks + artificials;
    detail::Tableau tab(m, cols);
    std::vector<std::size_t> slack_col(m, SIZE_MAX), art_col(m, SIZE_MAX);
    std::size_t next_slack = ny, next_art = ny + slacks;
    for (std::size_t i = 0; i < m; ++i) {
        const auto& r = rows[i];
        for (auto [k, a] : r.a) tab.at(i, k) += a;
        tab.rhs(i) = r.b;
        if (r.sense != Sense::Eq) {
            slack_col[i] = next_slack++;
            tab.at(i, slack_col[i]) = r.sense == Sense::Le ? 1.0 : -1.0;
        }
        if (r.sense != Sense::Le) {
            art_col[i] = next_art++;
            tab.at(i, art_col[i]) = 1.0;
            tab.basis()[i] = art_col[i];
        } else {
            tab.basis()[i] = slack_col[i];
        }
    }

    LpSolution sol;
    sol.rows_used = p.rows.size();
    const std::size_t cap = opt.max_iterations ? opt.max_iterations : 50 * (m + cols) + 1000;

    if (artificials > 0) {
        for (std::size_t j = ny + slacks; j < cols; ++j) tab.obj(j) = 1.0;
        tab.price_out();
        tab.run(cols, opt, cap, sol.iterations);
        double bmax = 1.0;
        for (const auto& r : rows) bmax = std::max(bmax, r.b);
        if (tab.rhs(m) < -1e-9 * bmax) {
            sol.status = LpStatus::Infeasible;
            return sol;
        }
        // Drive remaining (zero-valued) artificials out where possible.
        for (std::size_t i = 0; i < m; ++i) {
            if (tab.basis()[i] < ny + slacks) continue;
            std::size_t best = cols;
            double big = opt.pivot_tol;
            for (std::size_t j = 0; j < ny + slacks; ++j) {
                if (std::fabs(tab.at(i, j)) > big) {
                    big = std::fabs(tab.at(i, j));
                    best = j;
                }
            }
            if (best < cols) tab.pivot(i, best);
        }
    }

    // Phase 2 objective, always maximized.
    const double dir = p.maximize ? 1.0 : -1.0;
    for (std::size_t j = 0; j <= cols; ++j) tab.obj(j) = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double c = dir * p.objective[j];
        tab.obj(vm[j].pos) -= c * vm[j].sign;
        if (vm[j].neg != SIZE_MAX) tab.obj(vm[j].neg) += c;
    }
    tab.price_out();
    if (tab.run(ny + slacks, opt, cap, sol.iterations) == detail::Tableau::Outcome::Unbounded) {
        sol.status = LpStatus::Unbounded;
        return sol;
    }

    std::vector<double> y(cols, 0.0);
    for (std::size_t i = 0; i < m; ++i) y[tab.basis()[i]] = std::max(0.0, tab.rhs(i));
    sol.x.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double v = vm[j].shift + vm[j].sign * y[vm[j].pos];
        if (vm[j].neg != SIZE_MAX) v -= y[vm[j].neg];
        sol.x[j] = std::clamp(v, p.lower[j], p.upper[j]);
    }
    sol.objective = 0.0;
    for (std::size_t j = 0; j < n; ++j) sol.objective += p.objective[j] * sol.x[j];

    sol.duals.assign(p.rows.size(), 0.0);
    for (std::size_t i = bound_rows; i < m; ++i) {
        double d;
        if (rows[i].sense == Sense::Le) d = tab.obj(slack_col[i]);
        else if (rows[i].sense == Sense::Ge) d = -tab.obj(slack_col[i]);
        else d = tab.obj(art_col[i]);
        if (negated[i]) d = -d;
        sol.duals[static_cast<std::size_t>(rows[i].source)] = dir * d;
    }
    sol.status = LpStatus::Optimal;
    return sol;
}

struct RowGenOptions {
    std::vector<std::size_t> seed_rows; // always loaded
    std::size_t batch = 0;              // rows added per round; 0 picks a size-based default
    double feas_tol = 1e-9;
    std::size_t max_rounds = 1000;
};

/// Cutting-plane wrapper for problems with many rows and bounded variables:
/// solves over a growing subset of rows, adding the most violated ones until
/// the relaxed optimum satisfies every row. Falls back to a full solve when
/// some variable is unbounded.
inline LpSolution simplex_solve_rowgen(const LpProblem& p, const RowGenOptions& rg = {},
                                       const SimplexOptions& opt = {}) {
    p.validate();
    if (!p.bounded()) return simplex_solve(p, opt);
    const std::size_t batch = rg.batch ? rg.batch : std::max<std::size_t>(50, 2 * p.num_vars());

    std::vector<bool> active(p.rows.size(), false);
    std::vector<std::size_t> loaded;
    for (std::size_t i : rg.seed_rows) {
        if (i < p.rows.size() && !active[i]) {
            active[i] = true;
            loaded.push_back(i);
        }
    }
    std::size_t total_iterations = 0;
    for (std::size_t round = 0; round < rg.max_rounds; ++round) {
        LpProblem sub(p.num_vars());
        sub.objective = p.objective;
        sub.maximize = p.maximize;
        sub.lower = p.lower;
        sub.upper = p.upper;
        for (std::size_t i : loaded) sub.rows.push_back(p.rows[i]);
        LpSolution s = simplex_solve(sub, opt);
        total_iterations += s.iterations;
        if (s.status != LpStatus::Optimal) {
            s.iterations = total_iterations;
            s.rows_used = loaded.size();
            s.duals.assign(p.rows.size(), 0.0);
            return s;
        }
        std::vector<std::pair<double, std::size_t>> viol;
        for (std::size_t i = 0; i < p.rows.size(); ++i) {
            if (active[i]) continue;
            double v = p.rows[i].violation(s.x);
            if (v > rg.feas_tol) viol.push_back({v, i});
        }
        if (viol.empty()) {
            LpSolution out = s;
            out.iterations = total_iterations;
            out.rows_used = loaded.size();
            out.duals.assign(p.rows.size(), 0.0);
            for (std::size_t k = 0; k < loaded.size(); ++k) out.duals[loaded[k]] = s.duals[k];
            return out;
        }
        const std::size_t take = std::min(batch, viol.size());
        std::partial_sort(viol.begin(), viol.begin() + static_cast<long>(take), viol.end(),
                          [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
        for (std::size_t k = 0; k < take; ++k) {
            active[viol[k].second] = true;
            loaded.push_back(viol[k].second);
        }
    }
    throw NumericError("row generation did not settle after " + std::to_string(rg.max_rounds) + " rounds");
}

/// Row-per-constraint text dump for cross-checking with external solvers.
inline void write_lp(std::ostream& os, const LpProblem& p) {
    const auto prec = os.precision(17);
    os << (p.maximize ? "maximize" : "minimize") << ' ' << p.num_vars() << ' ' << p.rows.size() << '\n';
    os << "objective";
    for (double c : p.objective) os << ' ' << c;
    os << '\n';
    for (std::size_t j = 0; j < p.num_vars(); ++j) os << "bound " << j << ' ' << p.lower[j] << ' ' << p.upper[j] << '\n';
    for (const auto& r : p.rows) {
        os << "row " << to_string(r.sense) << ' ' << r.rhs;
        for (auto [j, a] : r.coeffs) os << ' ' << j << ':' << a;
        os << '\n';
    }
    os.precision(prec);
}

} // namespace sbc
