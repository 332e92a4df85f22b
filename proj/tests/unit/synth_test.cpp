#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "sbc/kernel.hpp"
#include "sbc/solve.hpp"
#include "sbc/synth.hpp"

using namespace sbc;

namespace {

const Box walk_box{{0.0}, {11.0}};

PointSet walk_points(const fixtures::Setup& s, std::size_t count, std::uint64_t seed, bool absorbs = true) {
    return sampled_point_set(s.model, s.regions, walk_box, absorbs, count, seed);
}

} // namespace

TEST(Template, MonomialEnumeration) {
    Template a = Template::up_to_degree(1, 1);
    ASSERT_EQ(a.size(), 2u);
    EXPECT_EQ(a.exponents[0], std::vector<unsigned>{0});
    EXPECT_EQ(a.exponents[1], std::vector<unsigned>{1});
    EXPECT_EQ(a.bound, 1e3);
    Template b = Template::up_to_degree(2, 2);
    EXPECT_EQ(b.size(), 6u); // C(2+2, 2)
    EXPECT_NO_THROW(b.validate());
    EXPECT_EQ(Template::up_to_degree(3, 3).size(), 20u);
    Template no_const{1, {{1}}, 1.0};
    EXPECT_THROW(no_const.validate(), ValidationError);
    Template dup{1, {{0}, {1}, {1}}, 1.0};
    EXPECT_THROW(dup.validate(), ValidationError);
}

TEST(Synthesize, GamblerAffineReachAvoid) {
    auto w = fixtures::walk();
    PointSet samples = walk_points(w, 2000, 1);
    PointSet check = walk_points(w, 8000, 2);
    SynthResult r = synthesize(w.model, w.regions, ConditionKind::RaLowerA1, Template::up_to_degree(1, 1), samples,
                               {State{3.0}}, check);
    ASSERT_EQ(r.status, SynthStatus::Validated) << r.message;
    EXPECT_GE(r.threshold, 0.25);
    EXPECT_LE(r.threshold, fixtures::ruin_closed_form(3, 10, 0.5) + 1e-6);
    const auto& p = std::get<Polynomial>(r.cert->v);
    EXPECT_NEAR(p.coeffs[1], 1.0 / 11.0, 2e-3); // slope fits the image range (-1, 11)
    EXPECT_EQ(r.margin_used, 1e-3);

    // fresh points, never seen by the LP or the re-validation
    PointSet fresh = walk_points(w, 3000, 77);
    EXPECT_TRUE(check_condition(w.model, w.regions, *r.cert, {State{3.0}}, fresh).passed);
}

TEST(Synthesize, UpperBoundKindStaysAboveOracle) {
    auto w = fixtures::walk();
    SynthResult r = synthesize(w.model, w.regions, ConditionKind::UnsafeReachUpper, Template::up_to_degree(1, 2),
                               walk_points(w, 2000, 3), {State{3.0}}, walk_points(w, 6000, 4));
    ASSERT_EQ(r.status, SynthStatus::Validated) << r.message;
    EXPECT_GE(r.threshold, 0.3 - 1e-6);
    EXPECT_LE(r.threshold, 0.4);
}

TEST(Synthesize, DiscountedNeverBeatsDiscountedValue) {
    auto w = fixtures::walk();
    SynthOptions opt;
    opt.gamma = 0.99;
    SynthResult r = synthesize(w.model, w.regions, ConditionKind::RaLowerDiscounted, Template::up_to_degree(1, 3),
                               walk_points(w, 2000, 5), {State{3.0}}, walk_points(w, 6000, 6), opt);
    ASSERT_NE(r.status, SynthStatus::Infeasible);
    TransitionKernel k = build_kernel(w.model, w.grid, w.regions);
    double dp = solve_exact_small(k, Objective::ReachAvoid, 0.99).at(State{3.0});
    EXPECT_LE(r.threshold, dp + 1e-6);
    EXPECT_GT(r.threshold, 0.0);
}

TEST(Synthesize, ConstantTemplateCannotSeparateContraction) {
    auto c = fixtures::contraction();
    const Box safe{{-1.0}, {1.0}};
    PointSet samples = sampled_point_set(c.model, c.regions, safe, false, 200, 1);
    PointSet check = sampled_point_set(c.model, c.regions, safe, false, 1000, 2);
    SynthOptions opt;
    opt.min_threshold = 1.0;
    Template constant = Template::up_to_degree(1, 0);

    // Without points off X nothing forces v >= 1 anywhere; v = 0 works.
    SynthResult free = synthesize(c.model, c.regions, ConditionKind::SafetyLower, constant, samples, {State{0.0}},
                                  check, opt);
    EXPECT_EQ(free.status, SynthStatus::Validated);
    EXPECT_EQ(free.threshold, 1.0);

    add_points_outside(samples, Box{{-2.0}, {2.0}}, safe, 200, 3);
    SynthResult r = synthesize(c.model, c.regions, ConditionKind::SafetyLower, constant, samples, {State{0.0}}, check,
                               opt);
    EXPECT_EQ(r.status, SynthStatus::Infeasible);
    EXPECT_EQ(r.message, "no certificate in this template at these samples");
    EXPECT_FALSE(r.cert.has_value());

    // A quadratic can rise from 0 at the origin to 1 off X.
    SynthResult q = synthesize(c.model, c.regions, ConditionKind::SafetyLower, Template::up_to_degree(1, 2), samples,
                               {State{0.0}}, check, opt);
    EXPECT_NE(q.status, SynthStatus::Infeasible);
}

TEST(Synthesize, ZeroBoundOnlyAdmitsZeroThreshold) {
    auto w = fixtures::walk();
    Template zero = Template::up_to_degree(1, 2, 0.0);
    PointSet samples = walk_points(w, 300, 7);
    PointSet check = walk_points(w, 600, 8);
    SynthResult r = synthesize(w.model, w.regions, ConditionKind::RaLowerA1, zero, samples, {State{3.0}}, check);
    ASSERT_EQ(r.status, SynthStatus::Validated);
    EXPECT_EQ(r.threshold, 0.0);
    EXPECT_EQ(r.margin_used, 0.0);
    SynthOptions opt;
    opt.min_threshold = 0.01;
    EXPECT_EQ(synthesize(w.model, w.regions, ConditionKind::RaLowerA1, zero, samples, {State{3.0}}, check, opt).status,
              SynthStatus::Infeasible);
}

TEST(Synthesize, SampleOptimismIsReported) {
    // Samples that never leave (0, 5) say nothing about the target side, so a
    // steep function fits them and fails on the full range.
    auto w = fixtures::walk();
    PointSet samples = sampled_point_set(w.model, w.regions, Box{{0.0}, {5.0}}, true, 400, 9);
    PointSet check = walk_points(w, 2000, 10);
    SynthResult r = synthesize(w.model, w.regions, ConditionKind::RaLowerA1, Template::up_to_degree(1, 1), samples,
                               {State{3.0}}, check);
    EXPECT_EQ(r.status, SynthStatus::SampleOptimistic);
    ASSERT_TRUE(r.validation.has_value());
    EXPECT_FALSE(r.validation->witnesses.empty());
}

TEST(Synthesize, ThreadCountDoesNotChangeResult) {
    auto w = fixtures::walk(0.6);
    PointSet samples = walk_points(w, 1000, 11);
    PointSet check = walk_points(w, 1000, 12);
    SynthOptions one, three;
    three.threads = 3;
    three.check.threads = 3;
    auto a = synthesize(w.model, w.regions, ConditionKind::RaLowerA1, Template::up_to_degree(1, 2), samples,
                        {State{3.0}}, check, one);
    auto b = synthesize(w.model, w.regions, ConditionKind::RaLowerA1, Template::up_to_degree(1, 2), samples,
                        {State{3.0}}, check, three);
    ASSERT_TRUE(a.cert && b.cert);
    EXPECT_EQ(std::get<Polynomial>(a.cert->v).coeffs, std::get<Polynomial>(b.cert->v).coeffs);
    EXPECT_EQ(a.status, b.status);
}

TEST(Synthesize, RejectsUnsupportedRequests) {
    auto w = fixtures::walk();
    PointSet s = walk_points(w, 50, 13);
    Template t = Template::up_to_degree(1, 1);
    EXPECT_THROW(synthesize(w.model, w.regions, ConditionKind::RaLowerPair, t, s, {State{3.0}}, s), ValidationError);
    EXPECT_THROW(synthesize(w.model, w.regions, ConditionKind::RaLowerDiscounted, t, s, {State{3.0}}, s),
                 ValidationError);
    EXPECT_THROW(synthesize(w.model, w.regions, ConditionKind::RaLowerA1, Template::up_to_degree(2, 1), s,
                            {State{3.0}}, s),
                 ValidationError);
}
