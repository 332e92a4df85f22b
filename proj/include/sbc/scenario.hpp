#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "sbc/certificate.hpp"
#include "sbc/error.hpp"
#include "sbc/grid.hpp"
#include "sbc/kernel.hpp"
#include "sbc/model.hpp"
#include "sbc/regions.hpp"

namespace sbc {

/// Every problem found while loading a scenario, one "path: message" line each.
class ScenarioError : public ValidationError {
public:
    explicit ScenarioError(std::vector<std::string> errors)
        : ValidationError(join(errors)), errors_(std::move(errors)) {}

    const std::vector<std::string>& errors() const noexcept { return errors_; }

private:
    static std::string join(const std::vector<std::string>& e) {
        std::string s = std::to_string(e.size()) + " scenario error(s):";
        for (const auto& line : e) s += "\n  " + line;
        return s;
    }
    std::vector<std::string> errors_;
};

struct McSettings {
    int horizon = 1000;
    std::size_t trials = 10000;
    double delta = 0.05;
    std::uint64_t seed = 1;
};

struct CheckSettings {
    double tolerance = 1e-6;
    std::size_t extra_points = 200;
    std::uint64_t point_seed = 7;
};

struct SynthSettings {
    ConditionKind kind = ConditionKind::RaLowerA1;
    unsigned degree = 1;
    double bound = 1e3;
    std::size_t samples = 2000;
    std::size_t validation_samples = 8000;
    double margin = 1e-3;
    std::uint64_t seed = 11;
};

struct Scenario {
    std::string name;
    std::string source; // file path, if loaded from one
    SystemModel model;
    std::vector<std::string> dynamics_text;
    std::string disturbance_label;
    RegionSpec regions;
    std::string safe_text, target_text;
    std::vector<State> x0s;
    std::optional<double> epsilon1; // claimed lower bound on the liveness probability
    std::optional<double> epsilon2; // claimed lower bound on the reach-avoid probability
    Grid grid;
    std::optional<double> gamma; // discounted kinds; searched when absent
    double pair_gamma = 0.5;     // discount of the pair condition's value function
    McSettings mc;
    CheckSettings check;
    std::optional<SynthSettings> synth;

    Box grid_box() const { return Box{grid.lower(), grid.upper()}; }
};

namespace detail {

class ScenarioReader {
public:
    std::vector<std::string> errors;

    void error(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

    static std::string where(const YAML::Node& n) {
        if (n.Mark().is_null()) return "";
        return " (line " + std::to_string(n.Mark().line + 1) + ")";
    }

    template <class T>
    std::optional<T> get(const YAML::Node& parent, const std::string& key, const std::string& path,
                         bool required) {
        const YAML::Node n = parent[key];
        if (!n) {
            if (required) error(path + "." + key, "missing");
            return std::nullopt;
        }
        try {
            return n.as<T>();
        } catch (const YAML::Exception&) {
            error(path + "." + key, "has the wrong type" + where(n));
            return std::nullopt;
        }
    }

    std::optional<std::vector<double>> vec(const YAML::Node& parent, const std::string& key, const std::string& path,
                                           bool required, std::size_t expect = 0) {
        auto v = get<std::vector<double>>(parent, key, path, required);
        if (v && expect && v->size() != expect) {
            error(path + "." + key, "expected " + std::to_string(expect) + " entries, got " + std::to_string(v->size()));
            return std::nullopt;
        }
        return v;
    }
};

} // namespace detail

/// Parses and cross-validates scenario YAML. Collects every error before
/// throwing ScenarioError; YAML syntax errors throw ParseError.
inline Scenario parse_scenario(const std::string& text, const std::string& source = "<string>") {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ParseError(source + ": line " + std::to_string(e.mark.line + 1) + ", column " +
                             std::to_string(e.mark.column + 1) + ": " + e.msg,
                         static_cast<std::size_t>(std::max(0, e.mark.pos)));
    }
    if (!root.IsMap()) throw ScenarioError({"scenario: top level must be a mapping"});

    detail::ScenarioReader r;
    Scenario sc;
    sc.source = source;
    sc.name = r.get<std::string>(root, "name", "scenario", false).value_or(std::filesystem::path(source).stem());

    // system
    const YAML::Node sys = root["system"];
    std::optional<std::size_t> n, m;
    std::optional<DisturbanceDist> dist;
    std::vector<expr::Expr> dyn;
    bool dyn_ok = false;
    if (!sys || !sys.IsMap()) {
        r.error("system", "missing or not a mapping");
    } else {
        n = r.get<std::size_t>(sys, "n", "system", true);
        m = r.get<std::size_t>(sys, "m", "system", true);
        if (n && *n == 0) r.error("system.n", "must be positive");
        if (m && *m == 0) r.error("system.m", "must be positive");
        auto texts = r.get<std::vector<std::string>>(sys, "dynamics", "system", true);
        if (texts && n && m && *n > 0 && *m > 0) {
            if (texts->size() != *n)
                r.error("system.dynamics", "expected " + std::to_string(*n) + " expressions, got " +
                                               std::to_string(texts->size()));
            dyn_ok = texts->size() == *n;
            for (std::size_t i = 0; i < texts->size(); ++i) {
                try {
                    dyn.push_back(expr::parse_expr((*texts)[i], *n, *m));
                } catch (const ParseError& e) {
                    r.error("system.dynamics[" + std::to_string(i) + "]", e.what());
                    dyn_ok = false;
                }
            }
            sc.dynamics_text = *texts;
        }
        const YAML::Node d = sys["disturbance"];
        if (!d || !d.IsMap() || d.size() != 1) {
            r.error("system.disturbance", "must hold exactly one of finite, uniform, gaussian");
        } else {
            const std::string kind = d.begin()->first.as<std::string>();
            const YAML::Node b = d.begin()->second;
            const std::string path = "system.disturbance." + kind;
            try {
                if (kind == "finite") {
                    auto atoms = r.get<std::vector<std::vector<double>>>(b, "atoms", path, true);
                    auto probs = r.get<std::vector<double>>(b, "probs", path, true);
                    if (atoms && probs) {
                        std::vector<State> a(atoms->begin(), atoms->end());
                        dist = DisturbanceDist(std::move(a), *probs);
                        sc.disturbance_label = "finite, " + std::to_string(atoms->size()) + " atoms";
                    }
                } else if (kind == "uniform" || kind == "gaussian") {
                    auto k = r.get<int>(b, "atoms", path, true);
                    std::optional<Quantization> q;
                    if (kind == "uniform") {
                        auto lo = r.vec(b, "lo", path, true), hi = r.vec(b, "hi", path, true);
                        if (lo && hi) q = UniformSpec{*lo, *hi};
                    } else {
                        auto mean = r.vec(b, "mean", path, true), sd = r.vec(b, "std", path, true);
                        if (mean && sd) q = GaussianSpec{*mean, *sd};
                    }
                    if (k && q) {
                        dist = quantize(*q, *k);
                        sc.disturbance_label = kind + " quantized to " + std::to_string(dist->size()) + " atoms";
                    }
                } else {
                    r.error("system.disturbance", "unknown kind '" + kind + "'");
                }
            } catch (const ValidationError& e) {
                r.error(path, e.what());
            }
        }
        if (dist && m && dist->dim() != *m)
            r.error("system.disturbance", "atoms have dimension " + std::to_string(dist->dim()) + ", expected " +
                                              std::to_string(*m));
    }
    const bool model_ok = dyn_ok && dist && m && dist->dim() == *m;
    if (model_ok) sc.model = SystemModel(*n, *m, std::move(dyn), std::move(*dist));

    // regions
    bool regions_ok = false;
    const YAML::Node reg = root["regions"];
    if (!reg || !reg.IsMap()) {
        r.error("regions", "missing or not a mapping");
    } else {
        auto safe = r.get<std::string>(reg, "safe", "regions", true);
        auto target = r.get<std::string>(reg, "target", "regions", true);
        if (safe && target && n && *n > 0) {
            regions_ok = true;
            expr::Predicate ps, pt;
            try {
                ps = expr::parse_predicate(*safe, *n);
            } catch (const ParseError& e) {
                r.error("regions.safe", e.what());
                regions_ok = false;
            }
            try {
                pt = expr::parse_predicate(*target, *n);
            } catch (const ParseError& e) {
                r.error("regions.target", e.what());
                regions_ok = false;
            }
            sc.regions = {ps, pt};
            sc.safe_text = *safe;
            sc.target_text = *target;
        }
    }

    // initial states
    if (auto x0 = r.get<std::vector<std::vector<double>>>(root, "initial_states", "scenario", true)) {
        if (x0->empty()) r.error("initial_states", "needs at least one state");
        for (std::size_t i = 0; i < x0->size(); ++i) {
            if (n && (*x0)[i].size() != *n)
                r.error("initial_states[" + std::to_string(i) + "]", "expected " + std::to_string(*n) + " coordinates");
            sc.x0s.emplace_back((*x0)[i].begin(), (*x0)[i].end());
        }
    }

    // thresholds
    if (const YAML::Node th = root["thresholds"]) {
        sc.epsilon1 = r.get<double>(th, "epsilon1", "thresholds", false);
        sc.epsilon2 = r.get<double>(th, "epsilon2", "thresholds", false);
        for (auto [e, key] : {std::pair{sc.epsilon1, "epsilon1"}, std::pair{sc.epsilon2, "epsilon2"}})
            if (e && !(*e >= 0.0 && *e <= 1.0)) r.error(std::string("thresholds.") + key, "must lie in [0, 1]");
    }

    // grid
    bool grid_ok = false;
    const YAML::Node g = root["grid"];
    if (!g || !g.IsMap()) {
        r.error("grid", "missing or not a mapping");
    } else {
        const std::size_t dim = n.value_or(0);
        auto lo = r.vec(g, "lower", "grid", true, dim);
        auto hi = r.vec(g, "upper", "grid", true, dim);
        auto cells = r.get<std::vector<std::size_t>>(g, "cells", "grid", true);
        if (cells && dim && cells->size() != dim) {
            r.error("grid.cells", "expected " + std::to_string(dim) + " entries");
            cells.reset();
        }
        if (lo && hi && cells) {
            try {
                sc.grid = build_grid(*lo, *hi, *cells);
                grid_ok = true;
            } catch (const ValidationError& e) {
                r.error("grid", e.what());
            }
        }
    }

    // discount factors
    sc.gamma = r.get<double>(root, "gamma", "scenario", false);
    if (sc.gamma && !(*sc.gamma > 0.0 && *sc.gamma < 1.0)) r.error("gamma", "must lie in (0, 1)");
    sc.pair_gamma = r.get<double>(root, "pair_gamma", "scenario", false).value_or(0.5);
    if (!(sc.pair_gamma > 0.0 && sc.pair_gamma < 1.0)) r.error("pair_gamma", "must lie in (0, 1)");

    // mc
    if (const YAML::Node mc = root["mc"]) {
        sc.mc.horizon = r.get<int>(mc, "horizon", "mc", false).value_or(sc.mc.horizon);
        sc.mc.trials = r.get<std::size_t>(mc, "trials", "mc", false).value_or(sc.mc.trials);
        sc.mc.delta = r.get<double>(mc, "delta", "mc", false).value_or(sc.mc.delta);
        sc.mc.seed = r.get<std::uint64_t>(mc, "seed", "mc", false).value_or(sc.mc.seed);
    }
    if (sc.mc.horizon < 1) r.error("mc.horizon", "must be at least 1");
    if (sc.mc.trials < 1) r.error("mc.trials", "must be at least 1");
    if (!(sc.mc.delta > 0.0 && sc.mc.delta < 1.0)) r.error("mc.delta", "must lie in (0, 1)");

    // check
    if (const YAML::Node ck = root["check"]) {
        sc.check.tolerance = r.get<double>(ck, "tolerance", "check", false).value_or(sc.check.tolerance);
        sc.check.extra_points = r.get<std::size_t>(ck, "extra_points", "check", false).value_or(sc.check.extra_points);
        sc.check.point_seed = r.get<std::uint64_t>(ck, "point_seed", "check", false).value_or(sc.check.point_seed);
    }
    if (!(sc.check.tolerance >= 0.0)) r.error("check.tolerance", "must be non-negative");

    // synth
    if (const YAML::Node sy = root["synth"]) {
        SynthSettings s;
        if (auto k = r.get<std::string>(sy, "kind", "synth", false)) {
            try {
                s.kind = parse_condition_kind(*k);
            } catch (const ValidationError& e) {
                r.error("synth.kind", e.what());
            }
        }
        s.degree = r.get<unsigned>(sy, "degree", "synth", false).value_or(s.degree);
        s.bound = r.get<double>(sy, "bound", "synth", false).value_or(s.bound);
        s.samples = r.get<std::size_t>(sy, "samples", "synth", false).value_or(s.samples);
        s.validation_samples =
            r.get<std::size_t>(sy, "validation_samples", "synth", false).value_or(s.validation_samples);
        s.margin = r.get<double>(sy, "margin", "synth", false).value_or(s.margin);
        s.seed = r.get<std::uint64_t>(sy, "seed", "synth", false).value_or(s.seed);
        if (s.kind == ConditionKind::RaLowerPair) r.error("synth.kind", "the pair condition cannot be synthesized");
        if (!(s.bound >= 0.0)) r.error("synth.bound", "must be non-negative");
        if (s.samples == 0 || s.validation_samples == 0) r.error("synth", "sample counts must be positive");
        sc.synth = s;
    }

    static const std::vector<std::string> known{"name",  "system", "regions", "initial_states", "thresholds", "grid",
                                                "gamma", "pair_gamma", "mc", "check", "synth"};
    for (const auto& kv : root) {
        const auto key = kv.first.as<std::string>();
        if (std::find(known.begin(), known.end(), key) == known.end()) r.error(key, "unknown key" + r.where(kv.first));
    }

    // Cross-checks by sampling once the pieces are individually valid.
    if (regions_ok && grid_ok) {
        const Box gb = sc.grid_box();
        auto inside = sample_box(gb, 20000, 12345);
        NestingReport nest = validate_nesting(sc.regions, inside, 1);
        if (!nest.passed())
            r.error("regions", "target is not inside the safe set, e.g. at " + detail::format_state(nest.witnesses[0]));
        // X within the grid box: probe a box three times as wide.
        Box wide = gb;
        for (std::size_t i = 0; i < gb.dim(); ++i) {
            const double w = gb.upper[i] - gb.lower[i];
            wide.lower[i] -= w;
            wide.upper[i] += w;
        }
        for (const auto& x : sample_box(wide, 20000, 54321)) {
            if (!gb.contains(x) && sc.regions.safe.eval(x)) {
                r.error("grid", "safe set extends beyond the grid box, e.g. at " + detail::format_state(x));
                break;
            }
        }
        for (std::size_t i = 0; i < sc.x0s.size(); ++i)
            if (sc.x0s[i].size() == gb.dim() && !gb.contains(sc.x0s[i]))
                r.error("initial_states[" + std::to_string(i) + "]", "outside the grid box");
    }

    if (!r.errors.empty()) throw ScenarioError(std::move(r.errors));
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError({path + ": cannot open file"});
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path);
}

} // namespace sbc
