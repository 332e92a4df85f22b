#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "sbc/mc.hpp"
#include "sbc/model.hpp"

using namespace sbc;

TEST(Step, WalkAndContraction) {
    auto w = fixtures::walk();
    EXPECT_EQ(step(w.model, State{3.0}, State{1.0}), State{4.0});
    auto c = fixtures::contraction();
    EXPECT_EQ(step(c.model, State{4.0}, State{0.0}), State{2.0});
}

TEST(Step, SingularDynamicsPropagates) {
    SystemModel m = SystemModel::from_strings(1, 0, {"1/x1"}, DisturbanceDist({State{}}, {1.0}));
    EXPECT_THROW(step(m, State{0.0}, State{}), EvalError);
}

TEST(Model, ValidatesConstruction) {
    DisturbanceDist d({{0.0}}, {1.0});
    EXPECT_THROW(SystemModel::from_strings(2, 1, {"x1"}, d), ValidationError);
    EXPECT_THROW(SystemModel::from_strings(1, 2, {"x1"}, d), ValidationError);
    EXPECT_THROW(SystemModel::from_strings(1, 1, {"x2"}, d), ParseError);
}

TEST(Distribution, Validation) {
    EXPECT_THROW(DisturbanceDist({{0.0}, {1.0}}, {0.5, 0.4}), ValidationError);
    EXPECT_THROW(DisturbanceDist({{0.0}, {0.0}}, {0.5, 0.5}), ValidationError);
    EXPECT_THROW(DisturbanceDist({{0.0}, {1.0}}, {1.0, 0.0}), ValidationError);
    EXPECT_THROW(DisturbanceDist({}, {}), ValidationError);
    EXPECT_THROW(DisturbanceDist({{0.0}, {1.0, 2.0}}, {0.5, 0.5}), ValidationError);
    EXPECT_NO_THROW(DisturbanceDist({{0.0}, {1.0}, {2.0}}, {0.1, 0.2, 0.7}));
}

TEST(Sampling, SymmetricFrequencyNearHalf) {
    DisturbanceDist d({{-1.0}, {1.0}}, {0.5, 0.5});
    Rng rng(42);
    int up = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) up += sample_disturbance(d, rng)[0] > 0.0;
    double f = static_cast<double>(up) / n;
    EXPECT_GE(f, 0.49);
    EXPECT_LE(f, 0.51);
}

TEST(Sampling, SingleAtomIsConstant) {
    DisturbanceDist d({{0.0}}, {1.0});
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_disturbance(d, rng)[0], 0.0);
}

TEST(Sampling, FrequenciesInsideHoeffdingBand) {
    DisturbanceDist d({{0.0}, {1.0}}, {0.3, 0.7});
    const std::size_t n = 200000;
    const double band = std::sqrt(std::log(2.0 / 1e-3) / (2.0 * n));
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        Rng rng(seed);
        std::size_t ones = 0;
        for (std::size_t i = 0; i < n; ++i) ones += sample_disturbance(d, rng)[0] == 1.0;
        EXPECT_NEAR(static_cast<double>(ones) / n, 0.7, band);
    }
}

TEST(Sampling, SequenceReproducibleForSeed) {
    DisturbanceDist d({{-1.0}, {1.0}}, {0.5, 0.5});
    Rng a(9), b(9);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_disturbance(d, a), sample_disturbance(d, b));
}

TEST(Simulate, ZeroHorizon) {
    auto w = fixtures::walk();
    Trajectory t = simulate(w.model, State{3.0}, 0, 5);
    ASSERT_EQ(t.states.size(), 1u);
    EXPECT_EQ(t.states[0], State{3.0});
    EXPECT_TRUE(t.disturbances.empty());
}

TEST(Simulate, DeterministicForSeedAndReplayable) {
    auto w = fixtures::walk();
    Trajectory a = simulate(w.model, State{3.0}, 50, 17);
    Trajectory b = simulate(w.model, State{3.0}, 50, 17);
    EXPECT_EQ(a.states, b.states);
    ASSERT_EQ(a.states.size(), 51u);
    for (std::size_t l = 0; l + 1 < a.states.size(); ++l)
        EXPECT_EQ(a.states[l + 1], step(w.model, a.states[l], a.disturbances[l]));
}

TEST(Simulate, ContractionClosedForm) {
    SystemModel m = SystemModel::from_strings(1, 1, {"0.5*x1"}, DisturbanceDist({{0.0}}, {1.0}));
    Trajectory t = simulate(m, State{8.0}, 3, 0);
    std::vector<State> want{{8.0}, {4.0}, {2.0}, {1.0}};
    EXPECT_EQ(t.states, want);
}

TEST(Simulate, ErrorTruncatesTrajectory) {
    SystemModel m = SystemModel::from_strings(1, 1, {"1/(x1 - 1) + th1"}, DisturbanceDist({{0.0}}, {1.0}));
    Trajectory t = simulate(m, State{2.0}, 5, 0); // 2 -> 1 -> division by zero
    ASSERT_TRUE(t.error.has_value());
    EXPECT_EQ(t.states.size(), 2u);
}

TEST(Expectation, ConstantIntegratesToItself) {
    auto w = fixtures::walk(0.3);
    EXPECT_DOUBLE_EQ(expectation(w.model, State{3.0}, [](auto) { return 2.5; }), 2.5);
}

TEST(Expectation, LinearInIntegrand) {
    auto w = fixtures::walk(0.3);
    auto g = [](std::span<const double> y) { return y[0] * y[0]; };
    auto h = [](std::span<const double> y) { return std::sin(y[0]); };
    State x{2.0};
    double lhs = expectation(w.model, x, [&](auto y) { return 3.0 * g(y) - 2.0 * h(y); });
    double rhs = 3.0 * expectation(w.model, x, g) - 2.0 * expectation(w.model, x, h);
    EXPECT_NEAR(lhs, rhs, 1e-12);
    // by hand: 0.7 * 1 + 0.3 * 9
    EXPECT_DOUBLE_EQ(expectation(w.model, x, g), 0.7 * 1.0 + 0.3 * 9.0);
}

TEST(Quantize, UniformMidpoints) {
    DisturbanceDist d = quantize(UniformSpec{{-1.0}, {1.0}}, 4);
    ASSERT_EQ(d.size(), 4u);
    EXPECT_DOUBLE_EQ(d.atom(0)[0], -0.75);
    EXPECT_DOUBLE_EQ(d.atom(3)[0], 0.75);
    for (double p : d.probs()) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Quantize, GaussianSymmetricAndNormalised) {
    DisturbanceDist d = quantize(GaussianSpec{{1.0}, {2.0}}, 9);
    ASSERT_EQ(d.size(), 9u);
    double total = 0.0, mean = 0.0;
    for (std::size_t k = 0; k < d.size(); ++k) {
        total += d.prob(k);
        mean += d.prob(k) * d.atom(k)[0];
        EXPECT_NEAR(d.prob(k), d.prob(d.size() - 1 - k), 1e-15);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_NEAR(mean, 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(d.atom(4)[0], 1.0);
}

TEST(Quantize, TensorProductInTwoDimensions) {
    DisturbanceDist d = quantize(UniformSpec{{0.0, 0.0}, {1.0, 2.0}}, 3);
    EXPECT_EQ(d.size(), 9u);
    EXPECT_EQ(d.dim(), 2u);
}

TEST(Rng, DerivedStreamsDiffer) {
    EXPECT_NE(Rng::derive(1, 0), Rng::derive(1, 1));
    EXPECT_NE(Rng::derive(1, 0), Rng::derive(2, 0));
    EXPECT_EQ(Rng::derive(5, 7), Rng::derive(5, 7));
}
