#pragma once

// Command dispatch and report assembly for the sbc tool. Every command
// returns a Report: a JSON document, the same content as indented text, a
// list of files (CSV fields, trajectories, certificates) and an exit code.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sbc/certificate.hpp"
#include "sbc/kernel.hpp"
#include "sbc/mc.hpp"
#include "sbc/scenario.hpp"
#include "sbc/solve.hpp"
#include "sbc/synth.hpp"

namespace sbc {

using Json = nlohmann::ordered_json;

enum ExitCode : int { ExitOk = 0, ExitValidation = 2, ExitVerification = 3, ExitNumeric = 4 };

struct RunOptions {
    std::optional<std::string> certificate;
    std::optional<ConditionKind> condition;
    unsigned threads = 1;
};

struct OutputFile {
    std::string name;
    std::string content;
};

struct Report {
    std::string command;
    Json data = Json::object();
    std::vector<std::string> lines;
    std::vector<OutputFile> files;
    std::vector<std::string> caveats;
    int exit_code = ExitOk;

    std::string text() const {
        std::string s;
        for (const auto& l : lines) s += l + '\n';
        if (!caveats.empty()) {
            s += "caveats:\n";
            for (const auto& c : caveats) s += "  - " + c + '\n';
        }
        return s;
    }

    Json json() const {
        Json j = data;
        j["caveats"] = caveats;
        j["exit_code"] = exit_code;
        return j;
    }

    void absorb(Report&& o) {
        data[o.command] = std::move(o.data);
        for (auto& l : o.lines) lines.push_back(std::move(l));
        for (auto& f : o.files) files.push_back(std::move(f));
        for (auto& c : o.caveats) caveats.push_back(std::move(c));
        exit_code = std::max(exit_code, o.exit_code);
    }
};

namespace detail {

inline std::string fmt(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

inline Json state_json(const State& x) { return Json(std::vector<double>(x.begin(), x.end())); }

inline std::string field_csv(const ValueField& f) {
    std::ostringstream os;
    write_field_csv(os, f);
    return os.str();
}

inline std::string grid_note(const Grid& g) {
    std::string s = "grid of " + std::to_string(g.size()) + " nodes, spacing";
    for (double w : g.width()) s += " " + fmt(w, 4);
    return s + "; values between nodes are interpolated";
}

inline Json witness_json(const Witness& w) {
    Json j{{"clause", to_string(w.clause)}, {"point", state_json(w.point)}, {"lhs", w.lhs}, {"rhs", w.rhs},
           {"slack", w.slack}};
    if (!w.note.empty()) j["note"] = w.note;
    return j;
}

inline Json check_json(const CheckReport& r) {
    Json clauses = Json::object();
    for (std::size_t c = 0; c < clause_count; ++c) {
        if (r.clauses[c].count == 0) continue;
        clauses[to_string(static_cast<Clause>(c))] = {{"count", r.clauses[c].count}, {"worst_slack", r.clauses[c].worst}};
    }
    Json ws = Json::array();
    for (const auto& w : r.witnesses) ws.push_back(witness_json(w));
    return {{"passed", r.passed},       {"method", r.method()},       {"tolerance", r.tolerance},
            {"violations", r.violations}, {"points_skipped", r.points_skipped}, {"clauses", clauses},
            {"witnesses", ws},           {"caveats", r.caveats}};
}

inline void check_lines(const CheckReport& r, std::vector<std::string>& out, const std::string& indent) {
    out.push_back(indent + (r.passed ? "PASS" : "FAIL") + " (" + r.method() + ", tolerance " + fmt(r.tolerance) +
                  ")");
    for (std::size_t c = 0; c < clause_count; ++c) {
        if (r.clauses[c].count == 0) continue;
        out.push_back(indent + "  " + to_string(static_cast<Clause>(c)) + ": " + std::to_string(r.clauses[c].count) +
                      " evaluations, worst slack " + fmt(r.clauses[c].worst));
    }
    for (const auto& w : r.witnesses)
        out.push_back(indent + "  violated " + to_string(w.clause) + " at " + format_state(w.point) + ": lhs " +
                      fmt(w.lhs) + ", rhs " + fmt(w.rhs) + ", slack " + fmt(w.slack) +
                      (w.note.empty() ? "" : " (" + w.note + ")"));
}

inline OmegaSource omega_source(ConditionKind k) { return uses_target(k) ? OmegaSource::Transient : OmegaSource::Safe; }

} // namespace detail

/// Points used to check a certificate against a scenario. Grid-form
/// certificates are checked on the grid point set of their own grid.
/// Other forms are only constrained on X and its one-step images, so they
/// get the scenario grid's nodes in X with their images plus random states
/// of X with theirs. Both add random points of the reachable box outside
/// the grid.
inline PointSet verification_points(const Scenario& sc, const Certificate& cert) {
    const ConditionKind kind = cert.cond.kind;
    const bool absorbs = uses_target(kind);
    const Grid* g = &sc.grid;
    if (const auto* f = std::get_if<ValueField>(&cert.v)) g = &f->grid;
    if (const auto* f = std::get_if<PinnedField>(&cert.v)) g = &f->field.grid;
    const bool grid_form = std::holds_alternative<ValueField>(cert.v) || std::holds_alternative<PinnedField>(cert.v);
    PointSet ps = grid_form ? grid_point_set(sc.model, sc.regions, *g, absorbs)
                            : node_point_set(sc.model, sc.regions, *g, absorbs);
    if (!grid_form && sc.check.extra_points > 0) {
        PointSet s = sampled_point_set(sc.model, sc.regions, sc.grid_box(), absorbs, sc.check.extra_points,
                                       sc.check.point_seed);
        ps.points.insert(ps.points.end(), s.points.begin(), s.points.end());
        ps.label += ", " + s.label;
    }
    if (sc.check.extra_points > 0) {
        try {
            Box omega = compute_omega(sc.model, sc.regions, sample_box(sc.grid_box(), 5000, sc.check.point_seed + 1),
                                      detail::omega_source(kind));
            add_points_outside(ps, omega, g->box(), sc.check.extra_points, sc.check.point_seed + 2);
        } catch (const EvalError&) {
            ps.label += ", no outside points (image evaluation failed)";
        }
    }
    return ps;
}

namespace detail {

inline Report cmd_simulate(const Scenario& sc) {
    Report r;
    r.command = "simulate";
    r.lines.push_back("simulate: " + sc.name + " (horizon " + std::to_string(sc.mc.horizon) + ", seed " +
                      std::to_string(sc.mc.seed) + ")");
    Json runs = Json::array();
    for (std::size_t i = 0; i < sc.x0s.size(); ++i) {
        Trajectory t = simulate(sc.model, sc.x0s[i], sc.mc.horizon, Rng::derive(sc.mc.seed, i));
        std::optional<std::size_t> exit_step, target_step;
        std::ostringstream csv;
        csv.precision(17);
        csv << "step";
        for (std::size_t j = 0; j < sc.model.state_dim(); ++j) csv << ",x" << (j + 1);
        for (std::size_t j = 0; j < sc.model.disturbance_dim(); ++j) csv << ",th" << (j + 1);
        csv << ",class\n";
        for (std::size_t s = 0; s < t.states.size(); ++s) {
            StateClass c = classify(sc.regions, t.states[s]);
            if (c == StateClass::Unsafe && !exit_step) exit_step = s;
            if (c == StateClass::Target && !target_step) target_step = s;
            csv << s;
            for (double v : t.states[s]) csv << ',' << v;
            for (std::size_t j = 0; j < sc.model.disturbance_dim(); ++j)
                csv << ',' << (s < t.disturbances.size() ? std::to_string(t.disturbances[s][j]) : "");
            csv << ',' << to_string(c) << '\n';
        }
        const std::string file = "trajectory_" + std::to_string(i) + ".csv";
        r.files.push_back({file, csv.str()});
        Json j{{"x0", state_json(sc.x0s[i])},
               {"steps", t.states.size() - 1},
               {"final_state", state_json(t.states.back())},
               {"first_exit_step", exit_step ? Json(*exit_step) : Json(nullptr)},
               {"first_target_step", target_step ? Json(*target_step) : Json(nullptr)},
               {"file", file}};
        if (t.error) {
            j["error"] = *t.error;
            r.caveats.push_back("trajectory " + std::to_string(i) + " stopped: " + *t.error);
        }
        runs.push_back(j);
        r.lines.push_back("  x0 " + format_state(sc.x0s[i]) + ": " + std::to_string(t.states.size() - 1) +
                          " steps, first exit " + (exit_step ? std::to_string(*exit_step) : "none") +
                          ", first target hit " + (target_step ? std::to_string(*target_step) : "none") + " -> " +
                          file);
    }
    r.data = {{"scenario", sc.name}, {"trajectories", runs}};
    return r;
}

struct SolveResult {
    Report report;
    ValueField reach, exit;
};

inline SolveResult cmd_solve(const Scenario& sc, const RunOptions& opt) {
    SolveResult out;
    Report& r = out.report;
    r.command = "solve";
    TransitionKernel k = build_kernel(sc.model, sc.grid, sc.regions, opt.threads);
    TransitionKernel ke = build_exit_kernel(sc.model, sc.grid, sc.regions, opt.threads);
    Solution ra = solve_reach_avoid(k);
    Solution ex = solve_safety_exit(ke);
    std::optional<Solution> disc;
    if (sc.gamma) disc = solve_discounted(k, *sc.gamma);
    for (const auto* s : {&ra, &ex})
        if (!s->converged)
            r.caveats.push_back("value iteration stopped after " + std::to_string(s->iterations) +
                                " sweeps with change " + fmt(s->last_change));
    std::optional<ValueField> exact;
    std::string exact_note;
    try {
        exact = solve_exact_small(k, Objective::ReachAvoid);
    } catch (const Error& e) {
        exact_note = e.what();
    }
    const std::string method = "DP (value iteration, " + grid_note(sc.grid) + ")";
    r.lines.push_back("solve: " + sc.name + " [" + method + "]");
    Json per = Json::array();
    for (const auto& x0 : sc.x0s) {
        const double v = ra.field.at(x0), u = ex.field.at(x0);
        Json j{{"x0", state_json(x0)}, {"reach_avoid", v}, {"exit", u}, {"liveness", 1.0 - u}};
        std::string line = "  x0 " + format_state(x0) + ": reach-avoid " + fmt(v, 9) + ", exit " + fmt(u, 9) +
                           ", liveness " + fmt(1.0 - u, 9);
        if (disc) {
            j["discounted"] = disc->field.at(x0);
            line += ", discounted(" + fmt(*sc.gamma) + ") " + fmt(disc->field.at(x0), 9);
        }
        if (exact) {
            j["reach_avoid_exact"] = exact->at(x0);
            line += ", exact solve " + fmt(exact->at(x0), 12);
        }
        per.push_back(j);
        r.lines.push_back(line);
    }
    if (!exact) r.lines.push_back("  exact solve unavailable: " + exact_note);
    r.data = {{"scenario", sc.name},
              {"method", method},
              {"iterations", {{"reach_avoid", ra.iterations}, {"exit", ex.iterations}}},
              {"values", per}};
    if (!exact) r.data["exact_solve"] = exact_note;
    r.files.push_back({"field_reach_avoid.csv", field_csv(ra.field)});
    r.files.push_back({"field_exit.csv", field_csv(ex.field)});
    if (disc) r.files.push_back({"field_discounted.csv", field_csv(disc->field)});
    out.reach = std::move(ra.field);
    out.exit = std::move(ex.field);
    return out;
}

struct EstimateResult {
    Report report;
    std::vector<McEstimate> liveness, reach;
};

inline EstimateResult cmd_estimate(const Scenario& sc, const RunOptions& opt) {
    EstimateResult out;
    Report& r = out.report;
    r.command = "estimate";
    const auto& mc = sc.mc;
    const std::string method = "MC (" + std::to_string(mc.trials) + " trials, horizon " + std::to_string(mc.horizon) +
                               ", Hoeffding delta " + fmt(mc.delta) + ")";
    r.lines.push_back("estimate: " + sc.name + " [" + method + "]");
    Json per = Json::array();
    for (std::size_t i = 0; i < sc.x0s.size(); ++i) {
        const State& x0 = sc.x0s[i];
        McEstimate live = estimate_liveness(sc.model, sc.regions, x0, mc.horizon, mc.trials, mc.delta,
                                            Rng::derive(mc.seed, 2 * i), opt.threads);
        McEstimate reach = estimate_reach_avoid(sc.model, sc.regions, x0, mc.horizon, mc.trials, mc.delta,
                                                Rng::derive(mc.seed, 2 * i + 1), opt.threads);
        auto js = [](const McEstimate& e) {
            Json j{{"p_hat", e.p_hat},   {"half_width", e.half_width}, {"lower", e.lower()},
                   {"upper", e.upper()}, {"trials", e.n_trials},       {"bias", to_string(e.bias)}};
            if (e.error) j["error"] = *e.error;
            return j;
        };
        per.push_back({{"x0", state_json(x0)}, {"liveness", js(live)}, {"reach_avoid", js(reach)}});
        r.lines.push_back("  x0 " + format_state(x0) + ": liveness " + fmt(live.p_hat) + " +/- " +
                          fmt(live.half_width) + " (" + to_string(live.bias) + "), reach-avoid " + fmt(reach.p_hat) +
                          " +/- " + fmt(reach.half_width) + " (" + to_string(reach.bias) + ")");
        for (const auto* e : {&live, &reach})
            if (e->error) r.caveats.push_back("MC stopped early at x0 " + format_state(x0) + ": " + *e->error);
        out.liveness.push_back(live);
        out.reach.push_back(reach);
    }
    r.data = {{"scenario", sc.name}, {"method", method}, {"estimates", per}};
    return out;
}

inline Certificate apply_claims(const Scenario& sc, Certificate cert, std::string& note) {
    const ConditionKind k = cert.cond.kind;
    if (k == ConditionKind::SafetyLower && sc.epsilon1) {
        cert.cond.epsilon = *sc.epsilon1;
        note = "threshold epsilon1 from the scenario";
    } else if (uses_target(k) && k != ConditionKind::UnsafeReachUpper && sc.epsilon2) {
        cert.cond.epsilon = *sc.epsilon2;
        note = "threshold epsilon2 from the scenario";
    } else {
        note = "threshold from the certificate file";
    }
    return cert;
}

inline Report cmd_verify(const Scenario& sc, const RunOptions& opt) {
    if (!opt.certificate) throw ValidationError("verify needs --certificate");
    std::ifstream in(*opt.certificate);
    if (!in) throw ValidationError("cannot open certificate file " + *opt.certificate);
    Certificate cert = read_certificate(in);
    if (opt.condition) cert.cond.kind = *opt.condition;
    if (cert.cond.kind == ConditionKind::RaLowerPair && !cert.w)
        throw ValidationError("the pair condition needs a certificate file with a 'w' function");
    std::string note;
    cert = apply_claims(sc, std::move(cert), note);
    PointSet ps = verification_points(sc, cert);
    CheckOptions co;
    co.tolerance = sc.check.tolerance;
    co.threads = opt.threads;
    CheckReport rep = check_condition(sc.model, sc.regions, cert, sc.x0s, ps, co);

    Report r;
    r.command = "verify";
    r.lines.push_back("verify: " + sc.name + ", " + to_string(cert.cond.kind) + " at epsilon " +
                      fmt(cert.cond.epsilon) + " (" + note + ")");
    r.lines.push_back("  points: " + ps.label);
    check_lines(rep, r.lines, "  ");
    r.data = {{"scenario", sc.name},
              {"certificate", *opt.certificate},
              {"condition", to_string(cert.cond.kind)},
              {"epsilon", cert.cond.epsilon},
              {"threshold_source", note},
              {"points", ps.label},
              {"check", check_json(rep)}};
    try {
        double best = best_threshold(sc.model, sc.regions, cert, sc.x0s, ps, co);
        r.data["best_threshold"] = best;
        r.lines.push_back("  tightest threshold the certificate supports: " + fmt(best, 9));
    } catch (const VerificationError&) {
        r.data["best_threshold"] = nullptr;
    }
    for (const auto& c : rep.caveats) r.caveats.push_back(c);
    r.exit_code = rep.passed ? ExitOk : ExitVerification;
    return r;
}

inline Report cmd_extract(const Scenario& sc, const RunOptions& opt, bool all_kinds) {
    Report r;
    r.command = "extract";
    r.lines.push_back("extract: " + sc.name);
    std::vector<ConditionKind> kinds;
    if (!all_kinds && opt.condition) kinds = {*opt.condition};
    else kinds.assign(all_condition_kinds.begin(), all_condition_kinds.end());
    Json items = Json::array();
    CheckOptions co;
    co.tolerance = sc.check.tolerance;
    co.threads = opt.threads;
    for (ConditionKind kind : kinds) {
        ExtractOptions eo;
        eo.threads = opt.threads;
        eo.gamma = kind == ConditionKind::RaLowerPair ? std::optional<double>(sc.pair_gamma) : sc.gamma;
        Json j{{"condition", to_string(kind)}};
        try {
            Extraction ex = extract_certificate(sc.model, sc.regions, sc.grid, kind, sc.x0s, eo);
            const std::string file = std::string(to_string(kind)) + ".cert";
            r.files.push_back({file, certificate_to_string(ex.cert)});
            CheckReport rep = check_condition(sc.model, sc.regions, ex.cert, sc.x0s, verification_points(sc, ex.cert), co);
            j["epsilon"] = ex.cert.cond.epsilon;
            if (has_gamma(kind)) j["gamma"] = ex.cert.cond.gamma;
            if (ex.gamma1) j["gamma1"] = *ex.gamma1;
            j["source"] = ex.source;
            j["file"] = file;
            j["check"] = check_json(rep);
            std::string line = "  " + std::string(to_string(kind)) + ": epsilon " + fmt(ex.cert.cond.epsilon, 9) +
                               " from " + ex.source;
            if (ex.gamma1) line += ", gamma1 " + fmt(*ex.gamma1);
            line += std::string(", check ") + (rep.passed ? "PASS" : "FAIL") + " -> " + file;
            r.lines.push_back(line);
            if (!rep.passed) {
                check_lines(rep, r.lines, "    ");
                r.exit_code = ExitVerification;
            }
        } catch (const VerificationError& e) {
            j["refused"] = e.what();
            r.lines.push_back("  " + std::string(to_string(kind)) + ": " + e.what());
            if (!all_kinds) r.exit_code = ExitVerification;
            else r.caveats.push_back(std::string(to_string(kind)) + " not extracted: " + e.what());
        }
        items.push_back(j);
    }
    r.data = {{"scenario", sc.name}, {"method", "extraction from DP value functions, pointwise check"},
              {"certificates", items}};
    return r;
}

inline Report cmd_synthesize(const Scenario& sc, const RunOptions& opt) {
    SynthSettings st = sc.synth.value_or(SynthSettings{});
    if (opt.condition) st.kind = *opt.condition;
    const bool absorbs = uses_target(st.kind);
    Template tmpl = Template::up_to_degree(sc.model.state_dim(), st.degree, st.bound);
    PointSet samples = node_point_set(sc.model, sc.regions, sc.grid, absorbs);
    {
        PointSet s = sampled_point_set(sc.model, sc.regions, sc.grid_box(), absorbs, st.samples, st.seed);
        samples.points.insert(samples.points.end(), s.points.begin(), s.points.end());
        samples.label += ", " + s.label;
    }
    PointSet check = sampled_point_set(sc.model, sc.regions, sc.grid_box(), absorbs, st.validation_samples, st.seed + 1);
    SynthOptions so;
    so.margin = st.margin;
    so.threads = opt.threads;
    so.check.tolerance = sc.check.tolerance;
    so.check.threads = opt.threads;
    if (has_gamma(st.kind)) {
        if (!sc.gamma) throw ValidationError("synthesis of a discounted condition needs 'gamma' in the scenario");
        so.gamma = sc.gamma;
    }
    SynthResult res = synthesize(sc.model, sc.regions, st.kind, tmpl, samples, sc.x0s, check, so);

    Report r;
    r.command = "synthesize";
    r.lines.push_back("synthesize: " + sc.name + ", " + to_string(st.kind) + ", degree " + std::to_string(st.degree) +
                      " template (" + std::to_string(tmpl.size()) + " coefficients, bound " + fmt(st.bound) + ")");
    r.lines.push_back("  LP: " + std::to_string(res.lp_rows) + " rows from " + samples.label + "; " +
                      std::to_string(res.lp_rows_loaded) + " loaded, " + std::to_string(res.lp_iterations) +
                      " pivots");
    Json j{{"scenario", sc.name},
           {"condition", to_string(st.kind)},
           {"degree", st.degree},
           {"bound", st.bound},
           {"status", to_string(res.status)},
           {"message", res.message},
           {"lp_rows", res.lp_rows},
           {"lp_rows_loaded", res.lp_rows_loaded},
           {"lp_iterations", res.lp_iterations},
           {"points_dropped", res.points_dropped}};
    if (res.cert) {
        const auto& p = std::get<Polynomial>(res.cert->v);
        j["threshold"] = res.threshold;
        j["margin_used"] = res.margin_used;
        j["coefficients"] = p.coeffs;
        j["exponents"] = p.exponents;
        j["file"] = "synthesized.cert";
        r.files.push_back({"synthesized.cert", certificate_to_string(*res.cert)});
        r.lines.push_back("  status " + std::string(to_string(res.status)) + ": epsilon " + fmt(res.threshold, 9) +
                          " (" + res.message + ") -> synthesized.cert");
    } else {
        r.lines.push_back("  status " + std::string(to_string(res.status)) + ": " + res.message);
    }
    if (res.validation) {
        j["validation"] = check_json(*res.validation);
        check_lines(*res.validation, r.lines, "  ");
        for (const auto& c : res.validation->caveats) r.caveats.push_back(c);
    }
    r.data = j;
    r.exit_code = res.status == SynthStatus::Validated ? ExitOk : ExitVerification;
    return r;
}

inline Report cmd_assumption1(const Scenario& sc, const RunOptions& opt) {
    TransitionKernel k = build_kernel(sc.model, sc.grid, sc.regions, opt.threads);
    StayResult s = check_assumption1(k);
    Report r;
    r.command = "assumption1";
    const std::string node = k.transient.empty() ? "none" : argmax_node(s.stay);
    if (s.holds)
        r.lines.push_back("assumption1: " + sc.name + ": holds, sup stay-probability = " + fmt(s.sup_stay_prob) +
                          " [DP on " + std::to_string(k.transient.size()) + " transient nodes]");
    else
        r.lines.push_back("assumption1: " + sc.name + ": fails, sup stay-probability = " + fmt(s.sup_stay_prob) +
                          " at node " + node + " [DP on " + std::to_string(k.transient.size()) + " transient nodes]");
    r.data = {{"scenario", sc.name},         {"holds", s.holds},     {"sup_stay_probability", s.sup_stay_prob},
              {"worst_node", node},          {"iterations", s.iterations},
              {"method", "DP (stay-forever iteration on the grid kernel)"}};
    return r;
}

// DP against MC: the infinite-horizon DP value must fall inside the MC
// interval widened on the side the finite horizon biases.
inline Report cross_check(const Scenario& sc, const SolveResult& dp, const EstimateResult& mc) {
    Report r;
    r.command = "cross_check";
    r.lines.push_back("DP vs MC agreement (horizon " + std::to_string(sc.mc.horizon) + "):");
    TransitionKernel k = build_kernel(sc.model, sc.grid, sc.regions);
    TransitionKernel ke = build_exit_kernel(sc.model, sc.grid, sc.regions);
    const auto steps = static_cast<std::size_t>(sc.mc.horizon);
    ValueField reach_k = finite_horizon(k, Objective::ReachAvoid, steps);
    ValueField exit_k = finite_horizon(ke, Objective::SafetyExit, steps);
    const double tol = 1e-6;
    Json rows = Json::array();
    bool all = true;
    for (std::size_t i = 0; i < sc.x0s.size(); ++i) {
        const State& x0 = sc.x0s[i];
        // reach-avoid: MC estimates P(hit within K) <= P(hit)
        const double v = dp.reach.at(x0), vk = reach_k.at(x0);
        const double rs = std::max(0.0, v - vk);
        const McEstimate& er = mc.reach[i];
        const bool ok_r = v >= er.p_hat - er.half_width - tol && v <= er.p_hat + er.half_width + rs + tol;
        // liveness: MC estimates P(stay K steps) >= P(stay forever)
        const double l = 1.0 - dp.exit.at(x0), lk = 1.0 - exit_k.at(x0);
        const double ls = std::max(0.0, lk - l);
        const McEstimate& el = mc.liveness[i];
        const bool ok_l = l >= el.p_hat - el.half_width - ls - tol && l <= el.p_hat + el.half_width + tol;
        all = all && ok_r && ok_l;
        for (auto [name, dpv, e, slack, ok] :
             {std::tuple{"reach-avoid", v, &er, rs, ok_r}, std::tuple{"liveness", l, &el, ls, ok_l}}) {
            rows.push_back({{"x0", state_json(x0)},
                            {"objective", name},
                            {"dp", dpv},
                            {"mc", e->p_hat},
                            {"half_width", e->half_width},
                            {"truncation_slack", slack},
                            {"agree", ok}});
            r.lines.push_back("  x0 " + format_state(x0) + " " + name + ": DP " + fmt(dpv, 9) + ", MC " +
                              fmt(e->p_hat) + " +/- " + fmt(e->half_width) + ", truncation slack " + fmt(slack, 3) +
                              (ok ? "  agree" : "  DISAGREE"));
        }
    }
    r.data = {{"rows", rows}, {"all_agree", all}};
    if (!all) {
        r.exit_code = ExitVerification;
        r.caveats.push_back("DP and MC disagree beyond the Hoeffding interval and truncation slack");
    }
    return r;
}

} // namespace detail

inline const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"simulate", "solve",      "estimate",    "verify",
                                                "extract",  "synthesize", "assumption1", "report-all"};
    return names;
}

inline Report run(const std::string& command, const Scenario& sc, const RunOptions& opt = {}) {
    if (command == "simulate") return detail::cmd_simulate(sc);
    if (command == "solve") return detail::cmd_solve(sc, opt).report;
    if (command == "estimate") return detail::cmd_estimate(sc, opt).report;
    if (command == "verify") return detail::cmd_verify(sc, opt);
    if (command == "extract") return detail::cmd_extract(sc, opt, false);
    if (command == "synthesize") return detail::cmd_synthesize(sc, opt);
    if (command == "assumption1") return detail::cmd_assumption1(sc, opt);
    if (command == "report-all") {
        Report r;
        r.command = "report-all";
        r.data["scenario"] = sc.name;
        r.data["system"] = {{"n", sc.model.state_dim()},
                            {"m", sc.model.disturbance_dim()},
                            {"dynamics", sc.dynamics_text},
                            {"disturbance", sc.disturbance_label},
                            {"safe", sc.safe_text},
                            {"target", sc.target_text}};
        r.lines.push_back("report-all: " + sc.name + " (n=" + std::to_string(sc.model.state_dim()) + ", " +
                          sc.disturbance_label + ", " + std::to_string(sc.grid.size()) + "-node grid)");
        detail::SolveResult dp = detail::cmd_solve(sc, opt);
        detail::EstimateResult mc = detail::cmd_estimate(sc, opt);
        Report cc = detail::cross_check(sc, dp, mc);
        r.absorb(std::move(dp.report));
        r.absorb(std::move(mc.report));
        r.absorb(std::move(cc));
        r.absorb(detail::cmd_assumption1(sc, opt));
        r.absorb(detail::cmd_extract(sc, opt, true));
        if (sc.synth) r.absorb(detail::cmd_synthesize(sc, opt));
        return r;
    }
    throw ValidationError("unknown command '" + command + "'");
}

} // namespace sbc
