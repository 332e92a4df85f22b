#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

#include "sbc/simplex.hpp"

using namespace sbc;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

// Brute-force vertex enumeration: every choice of n tight constraints among
// rows and bounds, solved directly. Only for tiny bounded problems.
double vertex_oracle(const LpProblem& p, bool& feasible) {
    const std::size_t n = p.num_vars();
    struct Plane {
        Eigen::VectorXd a;
        double b;
    };
    std::vector<Plane> planes;
    for (const auto& r : p.rows) {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(static_cast<long>(n));
        for (auto [j, c] : r.coeffs) a[static_cast<long>(j)] += c;
        planes.push_back({a, r.rhs});
    }
    for (std::size_t j = 0; j < n; ++j) {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(static_cast<long>(n));
        a[static_cast<long>(j)] = 1.0;
        planes.push_back({a, p.lower[j]});
        planes.push_back({a, p.upper[j]});
    }
    feasible = false;
    double best = p.maximize ? -inf : inf;
    std::vector<std::size_t> pick(n);
    const std::size_t k = planes.size();
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t depth, std::size_t from) {
        if (depth == n) {
            Eigen::MatrixXd m(static_cast<long>(n), static_cast<long>(n));
            Eigen::VectorXd rhs(static_cast<long>(n));
            for (std::size_t i = 0; i < n; ++i) {
                m.row(static_cast<long>(i)) = planes[pick[i]].a.transpose();
                rhs[static_cast<long>(i)] = planes[pick[i]].b;
            }
            Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
            if (!lu.isInvertible()) return;
            Eigen::VectorXd x = lu.solve(rhs);
            std::vector<double> xs(x.data(), x.data() + n);
            for (std::size_t j = 0; j < n; ++j)
                if (xs[j] < p.lower[j] - 1e-9 || xs[j] > p.upper[j] + 1e-9) return;
            for (const auto& r : p.rows)
                if (r.violation(xs) > 1e-9) return;
            double v = 0.0;
            for (std::size_t j = 0; j < n; ++j) v += p.objective[j] * xs[j];
            feasible = true;
            best = p.maximize ? std::max(best, v) : std::min(best, v);
            return;
        }
        for (std::size_t i = from; i < k; ++i) {
            pick[depth] = i;
            rec(depth + 1, i + 1);
        }
    };
    rec(0, 0);
    return best;
}

LpProblem random_problem(std::mt19937_64& rng, std::size_t n, std::size_t m, bool with_eq) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> sense(0, with_eq ? 2 : 1);
    LpProblem p(n);
    p.maximize = u(rng) > 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        p.objective[j] = u(rng);
        p.lower[j] = -2.0 - std::fabs(u(rng));
        p.upper[j] = 2.0 + std::fabs(u(rng));
    }
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<std::pair<std::size_t, double>> c;
        for (std::size_t j = 0; j < n; ++j) c.push_back({j, u(rng)});
        int s = sense(rng);
        // Eq rows through a point near the origin keep most instances feasible.
        p.add_row(std::move(c), s == 0 ? Sense::Le : s == 1 ? Sense::Ge : Sense::Eq, s == 2 ? 0.2 * u(rng) : u(rng));
    }
    return p;
}

} // namespace

TEST(Simplex, SingleBoundedVariable) {
    LpProblem p(1);
    p.objective = {1.0};
    p.upper = {10.0};
    p.add_row({{0, 1.0}}, Sense::Le, 3.0);
    LpSolution s = simplex_solve(p);
    ASSERT_EQ(s.status, LpStatus::Optimal);
    EXPECT_NEAR(s.x[0], 3.0, 1e-12);
}

TEST(Simplex, TwoVariablesSimplexFace) {
    LpProblem p(2);
    p.objective = {1.0, 1.0};
    p.add_row({{0, 1.0}, {1, 1.0}}, Sense::Le, 1.0);
    LpSolution s = simplex_solve(p);
    ASSERT_EQ(s.status, LpStatus::Optimal);
    EXPECT_NEAR(s.objective, 1.0, 1e-12);
}

TEST(Simplex, ContradictoryBoundsInfeasible) {
    LpProblem p(1);
    p.objective = {1.0};
    p.lower = {-inf};
    p.add_row({{0, 1.0}}, Sense::Ge, 2.0);
    p.add_row({{0, 1.0}}, Sense::Le, 1.0);
    EXPECT_EQ(simplex_solve(p).status, LpStatus::Infeasible);
    EXPECT_EQ(simplex_solve_rowgen(p).status, LpStatus::Infeasible);
}

TEST(Simplex, UnboundedOnlyWithoutFiniteBounds) {
    LpProblem p(2);
    p.objective = {1.0, -1.0};
    p.add_row({{0, 1.0}, {1, -1.0}}, Sense::Ge, -1.0);
    EXPECT_EQ(simplex_solve(p).status, LpStatus::Unbounded);
    p.upper = {5.0, 5.0};
    LpSolution s = simplex_solve(p);
    ASSERT_EQ(s.status, LpStatus::Optimal);
    EXPECT_NEAR(s.objective, 5.0, 1e-12);
}

TEST(Simplex, FreeAndReflectedVariables) {
    // min x + y, x free, y <= 4 unbounded below, x - y >= 1, x + 2y = 2
    LpProblem p(2);
    p.maximize = false;
    p.objective = {1.0, 1.0};
    p.lower = {-inf, -inf};
    p.upper = {inf, 4.0};
    p.add_row({{0, 1.0}, {1, -1.0}}, Sense::Ge, 1.0);
    p.add_row({{0, 1.0}, {1, 2.0}}, Sense::Eq, 2.0);
    p.add_row({{0, 1.0}}, Sense::Le, 10.0);
    LpSolution s = simplex_solve(p);
    ASSERT_EQ(s.status, LpStatus::Optimal);
    // on x + 2y = 2, objective 2 - y is minimized at the largest y allowed by x - y >= 1: y = 1/3
    EXPECT_NEAR(s.x[1], 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(s.objective, 5.0 / 3.0, 1e-12);
}

TEST(Simplex, BealeCyclingExampleTerminates) {
    LpProblem p(4);
    p.maximize = false;
    p.objective = {-0.75, 150.0, -0.02, 6.0};
    p.add_row({{0, 0.25}, {1, -60.0}, {2, -0.04}, {3, 9.0}}, Sense::Le, 0.0);
    p.add_row({{0, 0.5}, {1, -90.0}, {2, -0.02}, {3, 3.0}}, Sense::Le, 0.0);
    p.add_row({{2, 1.0}}, Sense::Le, 1.0);
    SimplexOptions opt;
    opt.degenerate_streak = 1;
    LpSolution s = simplex_solve(p, opt);
    ASSERT_EQ(s.status, LpStatus::Optimal);
    EXPECT_NEAR(s.objective, -0.05, 1e-12);
}

TEST(Simplex, StallReportsIterationCount) {
    LpProblem p(3);
    p.objective = {1.0, 2.0, 3.0};
    p.upper = {1.0, 1.0, 1.0};
    p.add_row({{0, 1.0}, {1, 1.0}, {2, 1.0}}, Sense::Le, 2.5);
    SimplexOptions opt;
    opt.max_iterations = 1;
    try {
        simplex_solve(p, opt);
        FAIL() << "expected a stall";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("after 1 iterations"), std::string::npos);
    }
}

TEST(Simplex, RejectsMalformedProblems) {
    LpProblem p(1);
    p.add_row({{3, 1.0}}, Sense::Le, 1.0);
    EXPECT_THROW(simplex_solve(p), ValidationError);
    LpProblem q(1);
    q.lower = {2.0};
    q.upper = {1.0};
    EXPECT_THROW(simplex_solve(q), ValidationError);
}

TEST(Property, MatchesVertexEnumeration) {
    std::mt19937_64 rng(3);
    int feasible_seen = 0, infeasible_seen = 0;
    for (int trial = 0; trial < 300; ++trial) {
        LpProblem p = random_problem(rng, 3, 5, trial % 2 == 1);
        bool feasible = false;
        double want = vertex_oracle(p, feasible);
        LpSolution s = simplex_solve(p);
        if (!feasible) {
            EXPECT_EQ(s.status, LpStatus::Infeasible) << "trial " << trial;
            ++infeasible_seen;
            continue;
        }
        ++feasible_seen;
        ASSERT_EQ(s.status, LpStatus::Optimal) << "trial " << trial;
        EXPECT_NEAR(s.objective, want, 1e-8) << "trial " << trial;
        EXPECT_LE(s.max_violation(p), 1e-7);
    }
    EXPECT_GT(feasible_seen, 100);
    EXPECT_GT(infeasible_seen, 0);
}

TEST(Property, ComplementarySlackness) {
    std::mt19937_64 rng(17);
    int checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        LpProblem p = random_problem(rng, 4, 8, trial % 3 == 0);
        LpSolution s = simplex_solve(p);
        if (s.status != LpStatus::Optimal) continue;
        ++checked;
        const double dir = p.maximize ? 1.0 : -1.0;
        for (std::size_t i = 0; i < p.rows.size(); ++i) {
            const auto& r = p.rows[i];
            double slack = r.rhs - r.activity(s.x);
            EXPECT_LT(std::fabs(s.duals[i] * slack), 1e-6) << "trial " << trial << " row " << i;
            // sign of the multiplier matches the row sense
            if (r.sense == Sense::Le) {
                EXPECT_GE(dir * s.duals[i], -1e-9);
            } else if (r.sense == Sense::Ge) {
                EXPECT_LE(dir * s.duals[i], 1e-9);
            }
        }
        // reduced cost vanishes for variables strictly inside their bounds
        for (std::size_t j = 0; j < p.num_vars(); ++j) {
            double rc = p.objective[j];
            for (std::size_t i = 0; i < p.rows.size(); ++i)
                for (auto [k, a] : p.rows[i].coeffs)
                    if (k == j) rc -= s.duals[i] * a;
            if (s.x[j] > p.lower[j] + 1e-7 && s.x[j] < p.upper[j] - 1e-7) {
                EXPECT_LT(std::fabs(rc), 1e-6) << "trial " << trial << " var " << j;
            }
        }
    }
    EXPECT_GT(checked, 50);
}

TEST(RowGeneration, AgreesWithFullSolve) {
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 40; ++trial) {
        LpProblem p = random_problem(rng, 5, 400, false);
        LpSolution full = simplex_solve(p);
        RowGenOptions rg;
        rg.batch = 10;
        LpSolution gen = simplex_solve_rowgen(p, rg);
        ASSERT_EQ(full.status, gen.status) << "trial " << trial;
        if (full.status != LpStatus::Optimal) continue;
        EXPECT_NEAR(full.objective, gen.objective, 1e-8);
        EXPECT_LE(gen.max_violation(p), 1e-7);
        EXPECT_LT(gen.rows_used, p.rows.size());
    }
}

TEST(Dump, RowPerConstraint) {
    LpProblem p(2);
    p.objective = {1.0, 0.5};
    p.upper = {1.0, 2.0};
    p.add_row({{0, 1.0}, {1, -2.0}}, Sense::Ge, -0.25);
    std::ostringstream os;
    write_lp(os, p);
    EXPECT_EQ(os.str(), "maximize 2 1\nobjective 1 0.5\nbound 0 0 1\nbound 1 0 2\nrow >= -0.25 0:1 1:-2\n");
}
