#pragma once

// Scenario execution and artifact persistence for the ksctl front end.
// Everything written except timings.json is a pure function of config + seed.

#include "biorthogonal.hpp"
#include "config.hpp"
#include "control_1d.hpp"
#include "errors.hpp"
#include "lr.hpp"
#include "modal.hpp"
#include "nonlinear.hpp"
#include "pointwise.hpp"
#include "spectral.hpp"

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace ksc {

namespace fs = std::filesystem;

enum ExitCode : int {
    kExitOk = 0,
    kExitOther = 1,
    kExitConfig = 2,
    kExitCritical = 3,
    kExitBelowMinimalTime = 4,
    kExitIllConditioned = 5,
    kExitNoContraction = 6,
    kExitRationalPoint = 7,
    kExitGramianSingular = 8,
};

inline int exit_code_for(ErrorCode c) {
    switch (c) {
        case ErrorCode::Config: return kExitConfig;
        case ErrorCode::CriticalParameter: return kExitCritical;
        case ErrorCode::BelowMinimalTime: return kExitBelowMinimalTime;
        case ErrorCode::IllConditioned: return kExitIllConditioned;
        case ErrorCode::NoContraction: return kExitNoContraction;
        case ErrorCode::RationalPoint: return kExitRationalPoint;
        case ErrorCode::GramianSingular: return kExitGramianSingular;
        default: return kExitOther;
    }
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// JSON has no inf/nan; they are written as strings so manifests stay loadable.
inline Json jnum(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string run_hash(const Scenario& sc) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a(task_name(sc.task) + "\n" + sc.source_text + "\n" + std::to_string(sc.seed)));
    return std::string(buf).substr(0, 8);
}

inline std::string utc_stamp() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

class RunDir {
public:
    explicit RunDir(const Scenario& sc, const std::string& out_root) {
        const std::string base = "run-" + utc_stamp() + "-" + run_hash(sc);
        dir_ = fs::path(out_root) / base;
        for (int n = 2; fs::exists(dir_); ++n) dir_ = fs::path(out_root) / (base + "-" + std::to_string(n));
        fs::create_directories(dir_);
        manifest_["task"] = task_name(sc.task);
        manifest_["seed"] = sc.seed;
        manifest_["config"] = Json::parse(sc.source_text);
        manifest_["config_hash"] = run_hash(sc);
        manifest_["schema_version"] = 1;
        manifest_["artifacts"] = Json::array();
        start_ = std::chrono::steady_clock::now();
    }

    const fs::path& path() const { return dir_; }
    Json& manifest() { return manifest_; }
    Json& results() { return manifest_["results"]; }

    // CSVs are written and closed immediately so they survive a later error exit.
    void csv(const std::string& name, const std::string& header, const std::vector<std::vector<double>>& rows) {
        std::ofstream out(dir_ / name);
        out << header << '\n';
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << fmt(r[i]);
            out << '\n';
        }
        manifest_["artifacts"].push_back(name);
    }

    void json(const std::string& name, const Json& j) {
        std::ofstream(dir_ / name) << j.dump(2) << '\n';
        manifest_["artifacts"].push_back(name);
    }

    void phase(const std::string& name) {
        auto now = std::chrono::steady_clock::now();
        timings_[name] = std::chrono::duration<double>(now - last_).count();
        last_ = now;
    }

    void finish(const std::string& status, int exit_code, const std::string& message = "") {
        manifest_["status"] = status;
        manifest_["exit_code"] = exit_code;
        if (!message.empty()) manifest_["error"] = message;
        std::ofstream(dir_ / "manifest.json") << manifest_.dump(2) << '\n';
        timings_["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        timings_["started_utc"] = started_;
        std::ofstream(dir_ / "timings.json") << timings_.dump(2) << '\n';
    }

private:
    fs::path dir_;
    Json manifest_;
    Json timings_ = Json::object();
    std::string started_ = utc_stamp();
    std::chrono::steady_clock::time_point start_, last_ = std::chrono::steady_clock::now();
};

// Portable uniform draws in [-1, 1): only the 64-bit engine output is relied on.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    double symmetric() { return 2.0 * (static_cast<double>(eng_() >> 11) * 0x1.0p-53) - 1.0; }

private:
    std::mt19937_64 eng_;
};

inline ModalState make_initial(const InitialSpec& in, int K, int J, std::uint64_t seed) {
    ModalState s = ModalState::zeros(K, J);
    switch (in.kind) {
        case InitialSpec::Kind::Mode:
            if (in.k < 1 || in.k > K || in.j < 1 || in.j > J)
                fail(ErrorCode::Config, "initial: mode (k, j) lies outside the truncation");
            s.coeffs(in.k - 1, in.j - 1) = in.amplitude;
            break;
        case InitialSpec::Kind::Random: {
            Rng rng(seed);
            for (int k = 0; k < K; ++k)
                for (int j = 0; j < J; ++j)
                    s.coeffs(k, j) = in.amplitude * rng.symmetric() /
                                     std::pow(1.0 + (k + 1) * (k + 1) + (j + 1) * (j + 1), in.decay / 2);
            break;
        }
        case InitialSpec::Kind::Coeffs:
            for (const auto& [k, j, v] : in.coeffs) {
                if (k < 1 || k > K || j < 1 || j > J) fail(ErrorCode::Config, "initial.coeffs: index outside the truncation");
                s.coeffs(k - 1, j - 1) = v;
            }
            break;
    }
    return s;
}

inline Eigen::VectorXd make_initial_1d(const InitialSpec& in, int K, std::uint64_t seed) {
    InitialSpec flat = in;
    flat.j = 1;
    for (auto& c : flat.coeffs) std::get<1>(c) = 1;
    return make_initial(flat, K, 1, seed).coeffs.col(0);
}

inline std::vector<double> uniform_grid(double T, int n) {
    std::vector<double> t(n);
    for (int i = 0; i < n; ++i) t[i] = T * i / double(n - 1);
    t.back() = T;
    return t;
}

inline Json verdict_json(const CriticalVerdict& v) {
    Json j;
    j["verdict"] = v.label();
    if (!v.clear()) {
        j["j"] = v.j;
        j["k"] = v.k;
        j["l"] = v.l;
    }
    j["distance"] = jnum(v.distance);
    return j;
}

namespace tasks {

inline void spectrum(const Scenario& sc, RunDir& out) {
    const auto& spec = *sc.spec;
    auto& r = out.results();
    r["critical"] = verdict_json(critical_set_check(spec));
    r["N"] = spec.N();
    try {
        r["n0"] = n0_index(spec);
        r["K0"] = K0_index(spec);
    } catch (const Error& e) {
        r["threshold_error"] = e.what();
    }
    const int J = std::min(spec.J_y(), spec.available_mu());
    std::vector<std::vector<double>> rows;
    for (int j = 1; j <= J; ++j)
        for (int k = 1; k <= spec.K_x(); ++k)
            rows.push_back({double(k), double(j), spec.lambda_x(k, j), spec.lambda_y_shift(j), spec.rate(k, j)});
    out.csv("spectrum.csv", "k,j,lambda_x,lambda_y_shift,rate", rows);
    if (r.contains("n0")) {
        auto cnt = bound_check(spec);
        r["counting"] = {{"violations", cnt.violations}, {"points", cnt.points},
                         {"smallest_constant", cnt.smallest_constant}, {"bound_constant", cnt.paper_constant}};
        Json gaps = Json::array();
        for (int j = r["n0"].get<int>(); j <= J; ++j) {
            auto g = gap_check(slice_rates(spec, j, spec.K_x()));
            gaps.push_back({{"j", j}, {"rho_hat", g.rho_hat}, {"linear_gap", g.linear_gap}});
        }
        r["gaps"] = gaps;
    }
    r["weyl_slope"] = jnum(J >= 2 ? weyl_slope(spec) : NAN);
}

inline void critical_set(const Scenario& sc, RunDir& out) {
    const auto& spec = *sc.spec;
    auto v = critical_set_check(spec);
    out.results()["critical"] = verdict_json(v);
    if (v.clear()) return;
    auto ce = critical_counterexample(spec, sc.c1_T, std::max(sc.samples, 2));
    auto& r = out.results()["counterexample"];
    r = {{"j", ce.j},
         {"k0", ce.k0},
         {"l0", ce.l0},
         {"rate_k0", ce.rate_k0},
         {"rate_l0", ce.rate_l0},
         {"rates_equal_exact", ce.rates_equal_exact},
         {"max_boundary_obs", ce.max_boundary_obs},
         {"max_point_obs", ce.max_point_obs},
         {"growth_rate", ce.growth_rate},
         {"norm_ratio_T", ce.norm_ratio_T},
         {"x0", ce.x0}};
    std::vector<std::vector<double>> rows;
    auto sys = ModalSystem::slice(spec, ce.j, ce.l0);
    for (std::size_t i = 0; i < ce.t.size(); ++i)
        rows.push_back({ce.t[i], evolve_free(sys, ModalState{ce.u0, 0.0}, ce.t[i]).norm(), ce.obs[i]});
    out.csv("counterexample.csv", "t,norm,obs_boundary", rows);
}

inline void biortho(const Scenario& sc, RunDir& out) {
    const auto& spec = *sc.spec;
    std::vector<double> exps = sc.bio_exponents;
    double c0 = 0;
    if (exps.empty()) {
        auto lam = std::vector<double>();
        for (int k = 1; k <= sc.bio_K; ++k) lam.push_back(spec.lambda_x(k, sc.bio_j));
        c0 = sc.bio_j < n0_index(spec) ? positivity_shift(lam) : 0.0;
        for (double l : lam) exps.push_back(-l + c0);
    }
    auto& r = out.results();
    r["exponents"] = exps;
    r["shift"] = c0;
    Json fams = Json::array();
    std::vector<std::vector<double>> rows;
    for (double T : sc.bio_T) {
        auto fam = build_family(exps, T);
        fams.push_back({{"T", T},
                        {"moment_residual", fam.residual_max},
                        {"gram_condition", fam.gram_condition},
                        {"precision", fam.precision}});
        for (std::size_t m = 0; m < exps.size(); ++m) rows.push_back({T, double(m + 1), exps[m], family_norm(fam, m)});
    }
    r["families"] = fams;
    out.csv("family_norms.csv", "T,m,exponent,norm", rows);
    std::vector<double> fitT;
    for (double T : sc.bio_T)
        if (T >= 0.05 && T <= 2.0) fitT.push_back(T);
    if (fitT.size() >= 2) {
        auto fit = cost_fit(exps, fitT, sc.bio_eps);
        r["cost_fit"] = {{"log_K_hat", fit.log_K_hat},
                         {"slope_exponent_quarter", fit.slope_lambda},
                         {"slope_T_third", fit.slope_T},
                         {"rms_residual", fit.rms_residual}};
    }
}

inline void write_trace_1d(RunDir& out, const ModalSystem& sys, const std::vector<ModalState>& tr, double x0,
                           const ControlSignal& c) {
    auto ob = observe(sys, tr, x0);
    std::vector<std::vector<double>> trace_rows, q_rows, state_rows;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        trace_rows.push_back({ob.t[i], ob.norm[i], ob.boundary[i](0), ob.point[i](0)});
        q_rows.push_back({ob.t[i], c.value(0, ob.t[i])});
        for (int k = 0; k < sys.K; ++k) state_rows.push_back({ob.t[i], double(k + 1), 1.0, tr[i].coeffs(k, 0)});
    }
    out.csv("trace.csv", "t,norm,obs_boundary,obs_point", trace_rows);
    out.csv("control.csv", "t,q", q_rows);
    out.csv("states.csv", "t,k,j,coeff", state_rows);
}

inline void control_1d(const Scenario& sc, RunDir& out) {
    const auto& spec = *sc.spec;
    auto u0 = make_initial_1d(sc.initial, sc.c1_K, sc.seed);
    auto res = synthesize_boundary_control(u0, sc.c1_T, spec, sc.c1_j, sc.c1_K);
    auto chk = verify_null(u0, res.control, sc.c1_T, spec, sc.c1_j);
    auto& r = out.results();
    r["control_norm"] = res.report.control_norm;
    r["moment_residual"] = res.report.moment_residual;
    r["gram_condition"] = res.report.gram_condition;
    r["shift"] = res.report.c0;
    r["active_horizon"] = res.report.horizon;
    r["final_relative"] = chk.final_relative;
    r["null_within_1e-6"] = chk.final_relative <= 1e-6;
    auto sys = ModalSystem::slice(spec, sc.c1_j, sc.c1_K);
    auto tr = trace(sys, ModalState{u0, 0.0}, uniform_grid(sc.c1_T, sc.samples), &res.control);
    write_trace_1d(out, sys, tr, -1.0, res.control);
    out.phase("control");
    if (!sc.scan_j.empty() && !sc.scan_T.empty()) {
        auto tab = cost_scan(spec, sc.scan_j, sc.scan_T, sc.c1_K);
        std::vector<std::vector<double>> rows;
        for (std::size_t a = 0; a < tab.j_list.size(); ++a)
            for (std::size_t b = 0; b < tab.T_list.size(); ++b)
                rows.push_back({double(tab.j_list[a]), tab.T_list[b], tab.cost(Eigen::Index(a), Eigen::Index(b))});
        out.csv("cost_scan.csv", "j,T,cost", rows);
        r["cost_fit"] = {{"intercept", tab.fit_intercept}, {"slope", tab.fit_slope}, {"rms", tab.fit_rms}};
        out.phase("cost_scan");
    }
}

inline void write_minimal_time(RunDir& out, const MinimalTimeEstimate& est) {
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < est.s.size(); ++k) rows.push_back({double(k + 1), est.s[k]});
    out.csv("minimal_time.csv", "k,s_k", rows);
    out.results()["minimal_time"] = {{"T0_hat", est.T0_hat},
                                     {"argmax_tail", est.argmax_tail},
                                     {"argmax_depth", est.argmax_depth},
                                     {"still_growing", est.still_growing}};
}

inline void control_point(const Scenario& sc, RunDir& out) {
    const auto& spec = *sc.spec;
    auto point = sc.point.build();
    auto est = minimal_time_estimate(point, spec.a());
    write_minimal_time(out, est);
    out.phase("minimal_time");
    auto u0 = make_initial_1d(sc.initial, sc.pc_K, sc.seed);
    auto res = synthesize_point_control(u0, sc.pc_T, point, spec, sc.pc_j, sc.pc_K, &est, sc.pc_margin);
    auto chk = verify_null(u0, res.control, sc.pc_T, spec, sc.pc_j);
    auto& r = out.results();
    r["x0"] = res.control.x0;
    r["control_norm"] = res.report.control_norm;
    r["moment_residual"] = res.report.moment_residual;
    r["gram_condition"] = res.report.gram_condition;
    r["final_relative"] = chk.final_relative;
    r["null_within_1e-6"] = chk.final_relative <= 1e-6;
    auto sys = ModalSystem::slice(spec, sc.pc_j, sc.pc_K);
    auto tr = trace(sys, ModalState{u0, 0.0}, uniform_grid(sc.pc_T, sc.samples), &res.control);
    write_trace_1d(out, sys, tr, res.control.x0, res.control);
    out.phase("control");
}

inline void minimal_time(const Scenario& sc, RunDir& out) {
    const auto& spec = *sc.spec;
    auto point = sc.point.build();
    auto est = minimal_time_estimate(point, spec.a());
    write_minimal_time(out, est);
    double T = sc.witness_T.value_or(est.T0_hat / 2);
    if (T > 0) {
        try {
            auto w = negative_certificate(point, spec, sc.pc_j, T, est);
            out.results()["witness"] = {{"T", T},
                                        {"count", w.witnesses.size()},
                                        {"max_log10_ratio", w.max_log10_ratio},
                                        {"argmax_k", w.argmax_k},
                                        {"spike_ratios_increasing", w.spike_ratios_increasing}};
            std::vector<std::vector<double>> rows;
            for (const auto& s : w.spikes) rows.push_back({double(s.k), s.s_k, s.abs_sin, s.log10_ratio});
            out.csv("witness_spikes.csv", "k,s_k,abs_sin,log10_ratio", rows);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NoWitnessFound) throw;
            out.results()["witness"] = {{"T", T}, {"count", 0}, {"note", e.what()}};
        }
    }
}

inline LRGeometry geometry_of(const Scenario& sc) {
    LRGeometry g;
    g.kind = sc.lr_geometry == "point" ? LRGeometry::Kind::InternalPoint : LRGeometry::Kind::BoundaryGamma;
    g.omega = sc.lr_omega;
    g.gramian_theta = sc.lr_theta;
    g.point_margin = sc.pc_margin;
    if (g.kind == LRGeometry::Kind::InternalPoint) g.point = sc.point.build();
    return g;
}

inline void write_nd_trace(RunDir& out, const std::vector<ModalState>& tr, const ControlSignal* c) {
    std::vector<std::vector<double>> norm_rows, state_rows, q_rows;
    for (const auto& s : tr) {
        norm_rows.push_back({s.time, s.norm()});
        for (int k = 0; k < s.coeffs.rows(); ++k)
            for (int j = 0; j < s.coeffs.cols(); ++j)
                if (s.coeffs(k, j) != 0.0) state_rows.push_back({s.time, double(k + 1), double(j + 1), s.coeffs(k, j)});
        if (c)
            for (int j = 0; j < c->rows; ++j) q_rows.push_back({s.time, double(j + 1), c->value(j, s.time)});
    }
    out.csv("trace.csv", "t,norm", norm_rows);
    out.csv("states.csv", "t,k,j,coeff", state_rows);
    if (c) out.csv("control.csv", "t,j,value", q_rows);
}

inline void control_nd(const Scenario& sc, RunDir& out) {
    const auto& spec = *sc.spec;
    auto u0 = make_initial(sc.initial, spec.K_x(), spec.J_y(), sc.seed);
    const double beta = sc.lr_beta.value_or(default_beta(spec));
    auto res = run_lr(u0, sc.lr_T, spec, geometry_of(sc), sc.lr_rho, beta);
    out.phase("lr");
    auto& r = out.results();
    r["alpha"] = res.schedule.alpha;
    r["beta"] = beta;
    r["rho"] = sc.lr_rho;
    r["gramian"] = res.gramian;
    r["final_relative"] = res.final_relative;
    r["null_within_1e-6"] = res.final_relative <= 1e-6;
    r["control_norm"] = res.total_control_norm;
    r["eventually_decreasing"] = res.eventually_decreasing;
    r["decay_fit_slope"] = res.decay_fit_slope;
    r["telescoping_error"] = res.schedule.telescoping_error;
    r["coast_start"] = res.schedule.coast_start;
    if (res.T0_hat > 0) r["T0_hat"] = res.T0_hat;
    std::vector<std::vector<double>> rows;
    for (const auto& w : res.windows)
        rows.push_back({w.window.a_k, w.window.T_k, double(w.window.gamma), double(w.window.cutoff), w.norm_start,
                        w.active.control_norm, w.active.kill_residual, w.active.max_moment_residual,
                        w.active.max_gram_condition, double(w.active.steered_modes), w.active.gramian_min_eig,
                        w.active.gramian_max_eig, w.active.gramian_scaled_min_eig, w.passive.ratio});
    out.csv("windows.csv",
            "a_k,T_k,gamma,cutoff,norm_start,control_norm,kill_residual,moment_residual,gram_condition,"
            "steered_modes,gramian_min_eig,gramian_max_eig,gramian_scaled_ratio,passive_ratio",
            rows);
    auto tr = lr_trace(spec, res, uniform_grid(sc.lr_T, sc.samples));
    write_nd_trace(out, tr, &res.control);
    out.phase("trace");
}

inline void nonlinear(const Scenario& sc, RunDir& out) {
    const auto& spec = *sc.spec;
    auto u0 = make_initial(sc.initial, spec.K_x(), spec.J_y(), sc.seed);
    NonlinearSetup setup;
    setup.geometry = geometry_of(sc);
    setup.rho = sc.lr_rho;
    setup.beta = sc.lr_beta.value_or(default_beta(spec));
    setup.tol = sc.nl_tol;
    setup.max_iter = sc.nl_max_iter;
    setup.nodes_per_phase = sc.nl_nodes;
    setup.coast_nodes = sc.nl_coast;
    setup.rhs_resolution = sc.nl_resolution;
    auto& r = out.results();
    double C = 0;
    if (sc.nl_C) {
        C = *sc.nl_C;
        r["C_cost_source"] = "config";
    } else {
        auto fit = empirical_cost_constant(spec, setup.geometry, setup.rho, setup.beta, sc.nl_fit_T);
        C = fit.C;
        r["C_cost_source"] = "lr_fit";
        r["C_cost_fit"] = {{"T", fit.T}, {"cost", fit.cost}};
        out.phase("cost_fit");
    }
    setup.weights = WeightPair::make(sc.nl_T, C, sc.nl_q, sc.nl_p);
    r["weights"] = {{"C_cost", C}, {"p", setup.weights.p}, {"q_w", setup.weights.q_w}};
    std::vector<IterationRecord> log;
    auto write_log = [&] {
        std::vector<std::vector<double>> rows;
        for (const auto& l : log) rows.push_back({double(l.n), l.df_norm, l.ratio});
        out.csv("iterations.csv", "n,df_norm,ratio", rows);
    };
    FixedPointResult fp;
    try {
        fp = fixed_point(u0, sc.nl_T, spec, setup, &log);
    } catch (...) {
        write_log();
        throw;
    }
    write_log();
    out.phase("fixed_point");
    r["iterations"] = fp.log.size();
    r["converged"] = fp.converged;
    r["linear_final_relative"] = fp.linear_final_relative;
    r["weighted_norms_log"] = {{"u_C0L2", jnum(fp.norms.log_u_C0L2)},
                               {"u_L2H", jnum(fp.norms.log_u_L2H)},
                               {"q", jnum(fp.norms.log_q)},
                               {"f", jnum(fp.norms.log_f)},
                               {"t_cut", fp.norms.t_cut}};
    write_nd_trace(out, fp.trace, &fp.control);
    if (sc.nl_verify) {
        auto sim = nonlinear_simulate(u0, &fp.control, sc.nl_T, spec, sc.nl_resolution);
        const double rel = u0.norm() > 0 ? sim.final_norm / u0.norm() : sim.final_norm;
        Json v = {{"final_norm", sim.final_norm},
                  {"final_relative", rel},
                  {"halving_change", sim.halving_change},
                  {"steps", sim.steps},
                  {"within_1e-5", rel <= 1e-5}};
        out.json("verification.json", v);
        r["verification"] = v;
        out.phase("verify");
    }
    if (sc.nl_R_guess) {
        ModalState profile = u0.norm() > 0 ? u0 : make_initial(InitialSpec{}, spec.K_x(), spec.J_y(), 0);
        profile.coeffs /= profile.norm();
        r["R_guess"] = find_R_guess(profile, sc.nl_T, spec, setup, 1e-4, 100.0);
        out.phase("R_guess");
    }
}

inline void simulate(const Scenario& sc, RunDir& out) {
    const auto& spec = *sc.spec;
    auto u0 = make_initial(sc.initial, spec.K_x(), spec.J_y(), sc.seed);
    auto grid = uniform_grid(sc.sim_T, sc.sim_samples);
    std::vector<ModalState> tr;
    auto sys = ModalSystem::tensor(spec);
    if (sc.sim_nonlinear) {
        auto sim = nonlinear_simulate(u0, nullptr, sc.sim_T, spec, sc.nl_resolution);
        tr = sim.trace;
        out.results()["halving_change"] = sim.halving_change;
    } else {
        tr = trace(sys, u0, grid);
    }
    write_nd_trace(out, tr, nullptr);
    // Free decay: the late-time log-norm slope against the slowest excited rate.
    double slow = -INFINITY;
    for (int k = 0; k < sys.K; ++k)
        for (int j = 0; j < sys.J; ++j)
            if (u0.coeffs(k, j) != 0.0) slow = std::max(slow, sys.rates(k, j));
    const auto& a = tr[tr.size() / 2];
    const auto& b = tr.back();
    double slope = (a.norm() > 0 && b.norm() > 0) ? std::log(b.norm() / a.norm()) / (b.time - a.time) : NAN;
    out.results()["decay_slope"] = jnum(slope);
    out.results()["slowest_excited_rate"] = jnum(slow);
}

}  // namespace tasks

struct RunOutcome {
    int exit_code = 0;
    fs::path dir;
    std::string message;
};

inline RunOutcome run_scenario(const Scenario& sc, const std::string& out_root) {
    RunDir out(sc, out_root);
    RunOutcome res;
    res.dir = out.path();
    try {
        switch (sc.task) {
            case Task::Spectrum: tasks::spectrum(sc, out); break;
            case Task::CriticalSet: tasks::critical_set(sc, out); break;
            case Task::Biortho: tasks::biortho(sc, out); break;
            case Task::Control1D: tasks::control_1d(sc, out); break;
            case Task::ControlPoint: tasks::control_point(sc, out); break;
            case Task::MinimalTime: tasks::minimal_time(sc, out); break;
            case Task::ControlND: tasks::control_nd(sc, out); break;
            case Task::Nonlinear: tasks::nonlinear(sc, out); break;
            case Task::Simulate: tasks::simulate(sc, out); break;
        }
        out.finish("ok", kExitOk);
    } catch (const Error& e) {
        res.exit_code = exit_code_for(e.code());
        res.message = e.what();
        out.finish(to_string(e.code()), res.exit_code, e.what());
    } catch (const std::exception& e) {
        res.exit_code = kExitOther;
        res.message = e.what();
        out.finish("error", res.exit_code, e.what());
    }
    return res;
}

}  // namespace ksc
