#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "sbc/certificate.hpp"

using namespace sbc;

namespace {

struct Case {
    fixtures::Setup s;
    PointSet reach_points;
    PointSet exit_points;
};

Case make(fixtures::Setup s) {
    PointSet r = grid_point_set(s.model, s.regions, s.grid, true);
    PointSet e = grid_point_set(s.model, s.regions, s.grid, false);
    return {std::move(s), std::move(r), std::move(e)};
}

const PointSet& points_for(const Case& c, ConditionKind k) {
    return uses_target(k) ? c.reach_points : c.exit_points;
}

Certificate with_epsilon(Certificate c, double eps) {
    c.cond.epsilon = std::clamp(eps, 0.0, 1.0);
    return c;
}

} // namespace

TEST(EvalCert, Forms) {
    EXPECT_EQ(eval_cert(Constant{0.0}, State{42.0}), 0.0);
    Polynomial sq{1, {{2}}, {1.0}};
    EXPECT_EQ(eval_cert(sq, State{3.0}), 9.0);
    Grid g({-0.5}, {1.5}, {2});
    EXPECT_EQ(eval_cert(ValueField{g, {0.25, 0.75}, 0.0}, State{1.0}), 0.75);
    Polynomial dup{1, {{1}, {1}}, {1.0, 2.0}};
    EXPECT_THROW(dup.validate(), ValidationError);
    Polynomial mismatch{1, {{1}}, {1.0, 2.0}};
    EXPECT_THROW(mismatch.validate(), ValidationError);
    EXPECT_THROW(eval_cert(Constant{std::nan("")}, State{0.0}), EvalError);
}

TEST(Check, SafetyLowerOnInvariantContraction) {
    Case c = make(fixtures::contraction());
    TransitionKernel k = build_exit_kernel(c.s.model, c.s.grid, c.s.regions);
    Certificate cert{solve_safety_exit(k).field, std::nullopt, {ConditionKind::SafetyLower, 1.0}};
    std::get<ValueField>(cert.v).outside_default = 1.0;
    CheckReport rep = check_condition(c.s.model, c.s.regions, cert, {State{0.0}}, c.exit_points);
    EXPECT_TRUE(rep.passed);
    EXPECT_GT(rep.clause(Clause::Outside).count, 0u);
    EXPECT_DOUBLE_EQ(best_threshold(c.s.model, c.s.regions, cert, {State{0.0}}, c.exit_points), 1.0);
}

TEST(Check, ReachFieldPassesNearOracle) {
    Case c = make(fixtures::walk());
    TransitionKernel k = build_kernel(c.s.model, c.s.grid, c.s.regions);
    Certificate cert{solve_reach_avoid(k).field, std::nullopt, {ConditionKind::RaLowerA1, 0.29}};
    CheckReport rep = check_condition(c.s.model, c.s.regions, cert, {State{3.0}}, c.reach_points);
    EXPECT_TRUE(rep.passed);
    EXPECT_NEAR(rep.clause(Clause::Initial).worst, 0.01, 1e-6);
    EXPECT_NEAR(best_threshold(c.s.model, c.s.regions, cert, {State{3.0}}, c.reach_points), 0.3, 1e-6);
    EXPECT_NE(rep.method().find("validated on"), std::string::npos);
}

TEST(Check, RaisedFieldBreaksDrift) {
    Case c = make(fixtures::walk());
    TransitionKernel k = build_kernel(c.s.model, c.s.grid, c.s.regions);
    ValueField f = solve_reach_avoid(k).field;
    for (std::size_t i : k.transient) f.values[i] += 0.05;
    Certificate cert{f, std::nullopt, {ConditionKind::RaLowerA1, 0.29}};
    CheckReport rep = check_condition(c.s.model, c.s.regions, cert, {State{3.0}}, c.reach_points);
    EXPECT_FALSE(rep.passed);
    EXPECT_LT(rep.clause(Clause::Drift).worst, -0.01);
    ASSERT_FALSE(rep.witnesses.empty());
    EXPECT_EQ(rep.witnesses.front().clause, Clause::Drift);
    // worst at nodes one step from absorption, where raised mass meets a pinned value
    double x = rep.witnesses.front().point[0];
    EXPECT_TRUE(x < 1.0 + 1e-9 || x > 9.0 - 1e-9) << x;
    EXPECT_THROW(best_threshold(c.s.model, c.s.regions, cert, {State{3.0}}, c.reach_points), VerificationError);
}

TEST(Check, EvaluationErrorsAreViolations) {
    SystemModel m = SystemModel::from_strings(1, 1, {"1/x1 + th1"}, DisturbanceDist({{0.0}}, {1.0}));
    auto regions = RegionSpec::from_strings(1, "x1 > -5 && x1 < 5", "false");
    PointSet ps{{State{0.0}, State{1.0}}, "two points"};
    Certificate cert{Constant{0.0}, std::nullopt, {ConditionKind::SafetyLower, 0.0}};
    CheckReport rep = check_condition(m, regions, cert, {State{1.0}}, ps);
    EXPECT_FALSE(rep.passed);
    ASSERT_EQ(rep.witnesses.size(), 1u);
    EXPECT_FALSE(rep.witnesses[0].note.empty());
    EXPECT_EQ(rep.witnesses[0].point, State{0.0});
}

TEST(Check, ThreadsGiveIdenticalReports) {
    Case c = make(fixtures::walk(0.6));
    TransitionKernel k = build_kernel(c.s.model, c.s.grid, c.s.regions);
    ValueField f = solve_reach_avoid(k).field;
    for (std::size_t i = 0; i < f.values.size(); i += 7) f.values[i] += 0.01;
    Certificate cert{f, std::nullopt, {ConditionKind::RaLowerA1, 0.5}};
    CheckOptions one{1e-6, 10, 1}, four{1e-6, 10, 4};
    CheckReport a = check_condition(c.s.model, c.s.regions, cert, {State{3.0}}, c.reach_points, one);
    CheckReport b = check_condition(c.s.model, c.s.regions, cert, {State{3.0}}, c.reach_points, four);
    EXPECT_EQ(a.violations, b.violations);
    ASSERT_EQ(a.witnesses.size(), b.witnesses.size());
    for (std::size_t i = 0; i < a.witnesses.size(); ++i) EXPECT_EQ(a.witnesses[i].index, b.witnesses[i].index);
    for (std::size_t cl = 0; cl < clause_count; ++cl) EXPECT_EQ(a.clauses[cl].worst, b.clauses[cl].worst);
}

TEST(Check, InitialSetUsesEveryPoint) {
    Case c = make(fixtures::walk());
    TransitionKernel k = build_kernel(c.s.model, c.s.grid, c.s.regions);
    Certificate cert{solve_reach_avoid(k).field, std::nullopt, {ConditionKind::RaLowerA1, 0.25}};
    std::vector<State> x0s{State{3.0}, State{5.0}, State{2.0}};
    CheckReport rep = check_condition(c.s.model, c.s.regions, cert, x0s, c.reach_points);
    EXPECT_FALSE(rep.passed); // 0.2 at x0 = 2
    EXPECT_EQ(rep.witnesses.front().clause, Clause::Initial);
    EXPECT_EQ(rep.witnesses.front().index, 2u);
    EXPECT_NEAR(best_threshold(c.s.model, c.s.regions, cert, x0s, c.reach_points), 0.2, 1e-6);
}

// Probability each kind's threshold is compared against, from closed forms.
struct Oracle {
    double liveness;
    double reach;
};

class RoundTrip : public ::testing::TestWithParam<int> {};

TEST_P(RoundTrip, ExtractedCertificatesPassAtOracleThreshold) {
    Case c = make(GetParam() == 0   ? fixtures::walk()
                  : GetParam() == 1 ? fixtures::walk(0.6)
                                    : fixtures::contraction());
    const State x0 = GetParam() == 2 ? State{0.8} : State{3.0};
    const Oracle o = GetParam() == 0   ? Oracle{0.0, 0.3}
                     : GetParam() == 1 ? Oracle{0.0, fixtures::ruin_closed_form(3, 10, 0.6)}
                                       : Oracle{1.0, 1.0};
    for (ConditionKind kind : all_condition_kinds) {
        Extraction ex = extract_certificate(c.s.model, c.s.regions, c.s.grid, kind, {x0});
        double eps;
        switch (kind) {
        case ConditionKind::SafetyLower: eps = o.liveness - 1e-4; break;
        case ConditionKind::UnsafeReachUpper: eps = o.reach + 1e-4; break;
        case ConditionKind::LivenessUpperDiscounted: eps = 1.0 - o.liveness - 1e-4; break;
        default: eps = o.reach - 1e-4; break;
        }
        Certificate cert = with_epsilon(ex.cert, eps);
        CheckReport rep = check_condition(c.s.model, c.s.regions, cert, {x0}, points_for(c, kind));
        EXPECT_TRUE(rep.passed) << to_string(kind) << " worst " << rep.worst_slack() << " from " << ex.source;
    }
}

INSTANTIATE_TEST_SUITE_P(Scenarios, RoundTrip, ::testing::Values(0, 1, 2));

TEST(Extract, RefusesWhenChainCanStayForever) {
    auto id = fixtures::identity();
    try {
        extract_certificate(id.model, id.regions, id.grid, ConditionKind::RaLowerA1, {State{3.0}});
        FAIL() << "expected refusal";
    } catch (const VerificationError& e) {
        EXPECT_NE(std::string(e.what()).find("sup stay probability 1"), std::string::npos) << e.what();
    }
}

TEST(Extract, PairWithHalfDiscount) {
    Case c = make(fixtures::walk());
    ExtractOptions opt;
    opt.gamma = 0.5;
    Extraction ex = extract_certificate(c.s.model, c.s.regions, c.s.grid, ConditionKind::RaLowerPair, {State{3.0}}, opt);
    ASSERT_TRUE(ex.gamma1.has_value());
    EXPECT_DOUBLE_EQ(*ex.gamma1, 1.0);
    EXPECT_DOUBLE_EQ(*ex.gamma1 / (1.0 + *ex.gamma1), 0.5);
    CheckReport rep = check_condition(c.s.model, c.s.regions, ex.cert, {State{3.0}}, c.reach_points);
    EXPECT_TRUE(rep.passed);
    EXPECT_GE(rep.clause(Clause::PairDrift).worst, -1e-9);
    // (1 + g1) v <= g1 E[v o f] at transient nodes
    TransitionKernel k = build_kernel(c.s.model, c.s.grid, c.s.regions);
    const auto& v = std::get<PinnedField>(ex.cert.v);
    for (std::size_t i : k.transient) {
        State x = c.s.grid.node(i);
        double e = expectation(c.s.model, x, [&](auto y) { return v.at(y); });
        EXPECT_LE(2.0 * v.at(x), e + 1e-9);
    }
}

TEST(Degenerate, ZeroPassesLowerKindsAtZeroThreshold) {
    Case c = make(fixtures::walk());
    for (ConditionKind kind : {ConditionKind::RaLowerA1, ConditionKind::RaLowerDiscounted, ConditionKind::RaLowerPair,
                               ConditionKind::LivenessUpperDiscounted}) {
        Certificate cert{Constant{0.0}, std::nullopt, {kind, 0.0, 0.9}};
        if (kind == ConditionKind::RaLowerPair) cert.w = Constant{0.0};
        EXPECT_TRUE(check_condition(c.s.model, c.s.regions, cert, {State{3.0}}, points_for(c, kind)).passed)
            << to_string(kind);
        cert.cond.epsilon = 0.01;
        EXPECT_FALSE(check_condition(c.s.model, c.s.regions, cert, {State{3.0}}, points_for(c, kind)).passed);
    }
}

TEST(Serialize, RoundTripsEveryForm) {
    Case c = make(fixtures::walk());
    ExtractOptions opt;
    opt.gamma = 0.5;
    Extraction ex = extract_certificate(c.s.model, c.s.regions, c.s.grid, ConditionKind::RaLowerPair, {State{3.0}}, opt);
    std::string text = certificate_to_string(ex.cert);
    std::istringstream is(text);
    Certificate back = read_certificate(is);
    EXPECT_EQ(certificate_to_string(back), text);
    EXPECT_EQ(std::get<PinnedField>(back.v).field.values, std::get<PinnedField>(ex.cert.v).field.values);
    ASSERT_TRUE(back.cond.omega.has_value());

    Certificate poly{Polynomial{2, {{0, 0}, {1, 0}, {1, 2}}, {0.5, -1.25, 1e-3}}, Constant{2.0},
                     {ConditionKind::UnsafeReachUpper, 0.125}};
    std::istringstream is2(certificate_to_string(poly));
    Certificate back2 = read_certificate(is2);
    EXPECT_EQ(std::get<Polynomial>(back2.v).coeffs, std::get<Polynomial>(poly.v).coeffs);
    EXPECT_EQ(std::get<Constant>(*back2.w).value, 2.0);
    EXPECT_EQ(back2.cond.kind, ConditionKind::UnsafeReachUpper);
}

TEST(Serialize, RejectsMalformedFiles) {
    auto parse = [](const std::string& s) {
        std::istringstream is(s);
        return read_certificate(is);
    };
    EXPECT_THROW(parse("hello"), ParseError);
    EXPECT_THROW(parse("sbc-certificate 1\nkind nonsense\nend\n"), ValidationError);
    EXPECT_THROW(parse("sbc-certificate 1\nkind ra-lower-a1\nend\n"), ParseError);
    EXPECT_THROW(parse("sbc-certificate 1\nkind ra-lower-a1\nv constant abc\nend\n"), ParseError);
    EXPECT_THROW(parse("sbc-certificate 1\nkind ra-lower-a1\nv grid 1 0 1 2 0 0.5\n"), ParseError);
    EXPECT_THROW(parse("sbc-certificate 1\nkind ra-lower-a1\nepsilon 2\nv constant 0\nend\n"), ValidationError);
}
