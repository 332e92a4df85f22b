#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <type_traits>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sbc/error.hpp"
#include "sbc/expr.hpp"

namespace sbc {

using State = std::vector<double>;

/// Finite-support disturbance distribution: atom k is drawn with probs[k].
class DisturbanceDist {
public:
    DisturbanceDist() = default;

    DisturbanceDist(std::vector<State> atoms, std::vector<double> probs)
        : atoms_(std::move(atoms)), probs_(std::move(probs)) {
        if (atoms_.empty() || atoms_.size() != probs_.size())
            throw ValidationError("disturbance atoms and probabilities must be non-empty lists of equal length");
        const std::size_t m = atoms_.front().size();
        double total = 0.0;
        for (std::size_t k = 0; k < atoms_.size(); ++k) {
            if (atoms_[k].size() != m) throw ValidationError("disturbance atoms have inconsistent dimensions");
            for (double v : atoms_[k])
                if (!std::isfinite(v)) throw ValidationError("disturbance atom is not finite");
            if (!(probs_[k] > 0.0 && probs_[k] <= 1.0))
                throw ValidationError("disturbance probability " + std::to_string(probs_[k]) + " not in (0,1]");
            total += probs_[k];
            for (std::size_t j = 0; j < k; ++j)
                if (atoms_[j] == atoms_[k]) throw ValidationError("disturbance atoms must be pairwise distinct");
        }
        if (std::fabs(total - 1.0) > 1e-12)
            throw ValidationError("disturbance probabilities sum to " + std::to_string(total) + ", expected 1");
        cumulative_.resize(probs_.size());
        double acc = 0.0;
        for (std::size_t k = 0; k < probs_.size(); ++k) {
            acc += probs_[k];
            cumulative_[k] = acc;
        }
    }

    std::size_t size() const noexcept { return atoms_.size(); }
    std::size_t dim() const noexcept { return atoms_.empty() ? 0 : atoms_.front().size(); }
    const std::vector<State>& atoms() const noexcept { return atoms_; }
    const std::vector<double>& probs() const noexcept { return probs_; }
    const State& atom(std::size_t k) const { return atoms_[k]; }
    double prob(std::size_t k) const { return probs_[k]; }

    /// Index of the atom selected by a uniform variate u in [0,1).
    std::size_t index_for(double u) const {
        double scaled = u * cumulative_.back();
        for (std::size_t k = 0; k + 1 < cumulative_.size(); ++k)
            if (scaled < cumulative_[k]) return k;
        return cumulative_.size() - 1;
    }

private:
    std::vector<State> atoms_;
    std::vector<double> probs_;
    std::vector<double> cumulative_;
};

/// Deterministic pseudorandom source. The output of mt19937_64 is fixed by the
/// standard, and uniform variates are derived from it without library
/// distributions, so sequences are reproducible across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Seed for an independent stream identified by (seed, stream).
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        return splitmix(seed ^ splitmix(stream + 0x632be59bd9b4e019ULL));
    }

    std::uint64_t next() { return engine_(); }

    /// Uniform double in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    static std::uint64_t splitmix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
};

/// Stochastic difference equation x' = f(x, th) with i.i.d. disturbance th.
class SystemModel {
public:
    SystemModel() = default;

    SystemModel(std::size_t n, std::size_t m, std::vector<expr::Expr> dynamics, DisturbanceDist dist)
        : n_(n), m_(m), dynamics_(std::move(dynamics)), dist_(std::move(dist)) {
        if (n_ == 0) throw ValidationError("state dimension must be positive");
        if (dynamics_.size() != n_)
            throw ValidationError("expected " + std::to_string(n_) + " dynamics expressions, got " +
                                  std::to_string(dynamics_.size()));
        for (const auto& e : dynamics_)
            if (e.state_dim() != n_ || e.disturbance_dim() != m_)
                throw ValidationError("dynamics expression declared with wrong dimensions");
        if (dist_.dim() != m_)
            throw ValidationError("disturbance atoms have dimension " + std::to_string(dist_.dim()) +
                                  ", expected " + std::to_string(m_));
    }

    /// Parses one dynamics string per state coordinate.
    static SystemModel from_strings(std::size_t n, std::size_t m, const std::vector<std::string>& dynamics,
                                    DisturbanceDist dist) {
        std::vector<expr::Expr> parsed;
        parsed.reserve(dynamics.size());
        for (const auto& text : dynamics) parsed.push_back(expr::parse_expr(text, n, m));
        return SystemModel(n, m, std::move(parsed), std::move(dist));
    }

    std::size_t state_dim() const noexcept { return n_; }
    std::size_t disturbance_dim() const noexcept { return m_; }
    const DisturbanceDist& dist() const noexcept { return dist_; }
    const std::vector<expr::Expr>& dynamics() const noexcept { return dynamics_; }

    void step_into(std::span<const double> x, std::span<const double> th, std::span<double> out) const {
        for (std::size_t i = 0; i < n_; ++i) out[i] = dynamics_[i].eval(x, th);
    }

private:
    std::size_t n_ = 0;
    std::size_t m_ = 0;
    std::vector<expr::Expr> dynamics_;
    DisturbanceDist dist_;
};

inline State step(const SystemModel& model, std::span<const double> x, std::span<const double> th) {
    if (x.size() != model.state_dim() || th.size() != model.disturbance_dim())
        throw EvalError("dimension mismatch in step");
    State out(model.state_dim());
    model.step_into(x, th, out);
    return out;
}

inline const State& sample_disturbance(const DisturbanceDist& dist, Rng& rng) {
    return dist.atom(dist.index_for(rng.uniform()));
}

struct Trajectory {
    std::vector<State> states;        // states[0] = x0
    std::vector<State> disturbances;  // disturbances[l] drives states[l] -> states[l+1]
    std::optional<std::string> error; // set when a step failed; trajectory truncated there
};

inline Trajectory simulate(const SystemModel& model, const State& x0, int horizon, std::uint64_t seed) {
    if (horizon < 0) throw ValidationError("horizon must be non-negative");
    if (x0.size() != model.state_dim()) throw ValidationError("initial state has wrong dimension");
    Trajectory traj;
    traj.states.reserve(static_cast<std::size_t>(horizon) + 1);
    traj.states.push_back(x0);
    Rng rng(seed);
    for (int l = 0; l < horizon; ++l) {
        const State& th = sample_disturbance(model.dist(), rng);
        try {
            State next = step(model, traj.states.back(), th);
            traj.disturbances.push_back(th);
            traj.states.push_back(std::move(next));
        } catch (const EvalError& e) {
            traj.error = "step " + std::to_string(l) + ": " + e.what();
            break;
        }
    }
    return traj;
}

/// Exact E_th[g(f(x, th))] as a finite sum over the atoms.
template <class G>
double expectation(const SystemModel& model, std::span<const double> x, G&& g) {
    const auto& dist = model.dist();
    State y(model.state_dim());
    double acc = 0.0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
        model.step_into(x, dist.atom(k), y);
        acc += dist.prob(k) * static_cast<double>(g(std::span<const double>(y)));
    }
    return acc;
}

struct UniformSpec {
    std::vector<double> lo;
    std::vector<double> hi;
};

struct GaussianSpec {
    std::vector<double> mean;
    std::vector<double> std;
};

using Quantization = std::variant<UniformSpec, GaussianSpec>;

namespace detail {

// Upper tail of the standard normal.
inline double normal_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// Standard-normal mass of [a, b], evaluated in the numerically symmetric form.
inline double normal_mass(double a, double b) {
    if (a >= 0.0) return normal_tail(a) - normal_tail(b);
    if (b <= 0.0) return normal_tail(-b) - normal_tail(-a);
    return 1.0 - normal_tail(-a) - normal_tail(b);
}

inline std::pair<std::vector<double>, std::vector<double>> quantize_axis(const Quantization& q, std::size_t d,
                                                                         int k) {
    std::vector<double> atoms(static_cast<std::size_t>(k));
    std::vector<double> probs(static_cast<std::size_t>(k));
    if (const auto* u = std::get_if<UniformSpec>(&q)) {
        double lo = u->lo[d];
        double hi = u->hi[d];
        if (!(hi > lo)) throw ValidationError("uniform quantization requires hi > lo");
        for (int i = 0; i < k; ++i) {
            atoms[i] = lo + (i + 0.5) * (hi - lo) / k;
            probs[i] = 1.0 / k;
        }
        return {atoms, probs};
    }
    const auto& g = std::get<GaussianSpec>(q);
    double mean = g.mean[d];
    double sd = g.std[d];
    if (!(sd > 0.0)) throw ValidationError("gaussian quantization requires std > 0");
    // Cells of equal width over [-4, 4] standard deviations; integer offsets
    // keep mirrored cells exact negatives of each other.
    const double w = 4.0 / k;
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
        double a = (2 * i - k) * w;
        double b = (2 * i + 2 - k) * w;
        atoms[i] = mean + sd * ((2 * i + 1 - k) * w);
        probs[i] = normal_mass(a, b);
        total += probs[i];
    }
    for (auto& p : probs) p /= total;
    return {atoms, probs};
}

} // namespace detail

/// Replaces a continuous disturbance by a finite one: a tensor product of
/// `atoms_per_dim` cell-midpoint atoms per coordinate.
inline DisturbanceDist quantize(const Quantization& q, int atoms_per_dim) {
    if (atoms_per_dim < 1) throw ValidationError("atoms_per_dim must be at least 1");
    std::size_t m = std::visit(
        [](const auto& s) -> std::size_t {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, UniformSpec>) {
                if (s.lo.size() != s.hi.size()) throw ValidationError("uniform lo/hi dimension mismatch");
                return s.lo.size();
            } else {
                if (s.mean.size() != s.std.size()) throw ValidationError("gaussian mean/std dimension mismatch");
                return s.mean.size();
            }
        },
        q);
    if (m == 0) throw ValidationError("quantization needs at least one dimension");
    std::vector<std::pair<std::vector<double>, std::vector<double>>> axes;
    for (std::size_t d = 0; d < m; ++d) axes.push_back(detail::quantize_axis(q, d, atoms_per_dim));

    std::vector<State> atoms;
    std::vector<double> probs;
    std::vector<std::size_t> idx(m, 0);
    const auto k = static_cast<std::size_t>(atoms_per_dim);
    for (;;) {
        State a(m);
        double p = 1.0;
        for (std::size_t d = 0; d < m; ++d) {
            a[d] = axes[d].first[idx[d]];
            p *= axes[d].second[idx[d]];
        }
        atoms.push_back(std::move(a));
        probs.push_back(p);
        std::size_t d = m;
        while (d > 0) {
            --d;
            if (++idx[d] < k) break;
            idx[d] = 0;
            if (d == 0) return DisturbanceDist(std::move(atoms), std::move(probs));
        }
    }
}

} // namespace sbc
