#pragma once

// Hand-built systems shared by the unit tests, plus oracles that do not go
// through the grid/kernel machinery.

#include <cmath>
#include <cstddef>
#include <vector>

#include "sbc/grid.hpp"
#include "sbc/kernel.hpp"
#include "sbc/model.hpp"
#include "sbc/regions.hpp"

namespace fixtures {

using sbc::State;

struct Setup {
    sbc::SystemModel model;
    sbc::RegionSpec regions;
    sbc::Grid grid;
};

/// +-1 walk on X = (0, 11) with target [10, 11); up-step probability p.
/// Grid spacing 0.1 so integers are nodes.
inline Setup walk(double p = 0.5) {
    sbc::DisturbanceDist dist({{-1.0}, {1.0}}, {1.0 - p, p});
    return {sbc::SystemModel::from_strings(1, 1, {"x1 + th1"}, dist),
            sbc::RegionSpec::from_strings(1, "x1 > 0 && x1 < 11", "x1 >= 10 && x1 < 11"),
            sbc::Grid({-1.05}, {11.95}, {130})};
}

/// x' = 0.5 x on X = [-1, 1], target [-0.25, 0.25].
inline Setup contraction() {
    sbc::DisturbanceDist dist({{0.0}}, {1.0});
    return {sbc::SystemModel::from_strings(1, 1, {"0.5*x1 + th1"}, dist),
            sbc::RegionSpec::from_strings(1, "x1 >= -1 && x1 <= 1", "x1 >= -0.25 && x1 <= 0.25"),
            sbc::Grid({-1.05}, {1.05}, {21})};
}

/// x' = x: nothing ever leaves X \ X_r.
inline Setup identity() {
    sbc::DisturbanceDist dist({{0.0}}, {1.0});
    return {sbc::SystemModel::from_strings(1, 1, {"x1 + th1"}, dist),
            sbc::RegionSpec::from_strings(1, "x1 > 0 && x1 < 11", "x1 >= 10 && x1 < 11"),
            sbc::Grid({-1.05}, {11.95}, {130})};
}

/// Grid node index holding coordinate x (1D, spacing-aligned).
inline std::size_t node_at(const sbc::Grid& g, double x) {
    return static_cast<std::size_t>(std::lround((x - g.lower()[0]) / g.width()[0] - 0.5));
}

/// Ruin-problem closed form: probability that a walk stepping up with
/// probability p hits N before 0 starting from i.
inline double ruin_closed_form(int i, int n, double p) {
    if (p == 0.5) return static_cast<double>(i) / n;
    double r = (1.0 - p) / p;
    return (1.0 - std::pow(r, i)) / (1.0 - std::pow(r, n));
}

/// Same probability from a tridiagonal solve on the integer chain 1..N-1.
inline std::vector<double> ruin_linear_solve(int n, double p) {
    // h_i - p h_{i+1} - q h_{i-1} = 0, h_0 = 0, h_N = 1
    const int m = n - 1;
    std::vector<double> a(m, -(1.0 - p)), b(m, 1.0), c(m, -p), d(m, 0.0);
    d[m - 1] = p;
    for (int i = 1; i < m; ++i) {
        double w = a[i] / b[i - 1];
        b[i] -= w * c[i - 1];
        d[i] -= w * d[i - 1];
    }
    std::vector<double> h(n + 1, 0.0);
    h[n] = 1.0;
    h[m] = d[m - 1] / b[m - 1];
    for (int i = m - 2; i >= 0; --i) h[i + 1] = (d[i] - c[i] * h[i + 2]) / b[i];
    return h;
}

/// P(hit N before 0 within k steps) by forward recursion on the integer chain.
inline double ruin_within(int i, int n, double p, int k) {
    std::vector<double> h(n + 1, 0.0), next(n + 1, 0.0);
    h[n] = next[n] = 1.0;
    for (int s = 0; s < k; ++s) {
        for (int j = 1; j < n; ++j) next[j] = p * h[j + 1] + (1.0 - p) * h[j - 1];
        h.swap(next);
    }
    return h[i];
}

/// P(still strictly inside (0, N) after k steps) on the integer chain.
inline double survive_within(int i, int n, double p, int k) {
    std::vector<double> s(n + 1, 0.0), next(n + 1, 0.0);
    for (int j = 1; j < n; ++j) s[j] = 1.0;
    for (int step = 0; step < k; ++step) {
        for (int j = 1; j < n; ++j) next[j] = p * s[j + 1] + (1.0 - p) * s[j - 1];
        s.swap(next);
    }
    return s[i];
}

} // namespace fixtures
