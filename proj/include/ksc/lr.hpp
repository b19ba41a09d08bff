#pragma once

// Frequency-splitting null control on the box cylinder (0,a) x Omega_y:
// active windows steer the first gamma_k cross-section slices to zero,
// passive windows let the remaining modes dissipate.

#include "biorthogonal.hpp"
#include "control.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "modal.hpp"
#include "parallel.hpp"
#include "pointwise.hpp"
#include "spectral.hpp"
#include "steer.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

namespace ksc {

struct LRWindow {
    double a_k = 0, T_k = 0;
    int gamma = 0;      // beta 2^k
    int cutoff = 0;     // min(gamma, J_y): slices actually steered
};

struct LRSchedule {
    double T = 0, rho = 0, beta = 0, alpha = 0;
    std::vector<LRWindow> windows;
    double coast_start = 0;       // end of the last passive window
    double realized_fraction = 0; // sum 2 T_k / T over realized windows
    double telescoping_error = 0; // |sum_{k>=0} 2 T_k - T| from the closed form
};

inline LRSchedule build_schedule(double T, double rho, double beta, const SpectrumSpec& spec) {
    require(T > 0, ErrorCode::InvalidArgument, "horizon must be positive");
    const int dim = std::max(1, spec.N() - 1);
    if (!(rho > 0 && rho < 1.0 / dim)) fail(ErrorCode::BadRho, "rho must lie in (0, 1/(N-1))");
    const int K0 = K0_index(spec);
    if (!(beta > K0)) fail(ErrorCode::BetaTooSmall, "gamma_0 = beta must exceed K0 = " + std::to_string(K0));
    LRSchedule s;
    s.T = T;
    s.rho = rho;
    s.beta = beta;
    s.alpha = beta * T * (1 - std::pow(2.0, -rho)) / 2;
    // closed form: 2 sum_k (alpha/beta) 2^{-k rho} = 2 (alpha/beta) / (1 - 2^{-rho})
    s.telescoping_error = std::abs(2 * (s.alpha / beta) / (1 - std::pow(2.0, -rho)) - T);
    double a = 0;
    for (int k = 0;; ++k) {
        LRWindow w;
        w.a_k = a;
        w.T_k = (s.alpha / beta) * std::pow(2.0, -k * rho);
        double g = beta * std::pow(2.0, k);
        w.gamma = static_cast<int>(std::lround(g));
        w.cutoff = std::min(w.gamma, spec.J_y());
        s.windows.push_back(w);
        a += 2 * w.T_k;
        if (w.gamma >= spec.J_y()) break;
    }
    s.coast_start = a;
    s.realized_fraction = a / T;
    return s;
}

struct LRGeometry {
    enum class Kind { BoundaryGamma, InternalPoint };
    Kind kind = Kind::BoundaryGamma;
    // omega as one interval per cross-section axis; empty means the whole cross-section
    std::vector<std::pair<double, double>> omega;
    std::optional<PointSpec> point;  // InternalPoint: x0/a
    double gramian_theta = 0.5;      // fraction of an active window carrying control (Gramian phases)
    double point_margin = 0.1;

    bool whole_section() const { return omega.empty(); }
    ControlKind control_kind() const {
        return kind == Kind::BoundaryGamma ? ControlKind::BoundaryND : ControlKind::PointwiseND;
    }
};

// M(j, l) = <Psi_j, Psi_l>_{L^2(omega)} from closed-form sine integrals.
inline Eigen::MatrixXd omega_mass_matrix(const SpectrumSpec& spec, const std::vector<std::pair<double, double>>& omega) {
    const auto& cs = spec.cross_section();
    require(cs.kind == CrossSection::Kind::Box, ErrorCode::InvalidArgument,
            "a sub-domain omega needs a box cross-section (external spectra have no eigenfunctions)");
    require(omega.size() == cs.dims.size(), ErrorCode::InvalidArgument, "omega needs one interval per axis");
    auto axis = [](int m, int n, double b, double lo, double hi) {
        auto sin_int = [&](int p) {  // int_lo^hi cos(p pi y / b) dy
            if (p == 0) return hi - lo;
            double w = p * kPi / b;
            return (std::sin(w * hi) - std::sin(w * lo)) / w;
        };
        return (sin_int(m - n) - sin_int(m + n)) / b;
    };
    const int J = spec.J_y();
    Eigen::MatrixXd M(J, J);
    for (int j = 0; j < J; ++j)
        for (int l = 0; l < J; ++l) {
            double v = 1.0;
            for (std::size_t i = 0; i < cs.dims.size(); ++i) {
                const double b = cs.dims[i].value();
                require(omega[i].first >= 0 && omega[i].second <= b && omega[i].first < omega[i].second,
                        ErrorCode::InvalidArgument, "omega must be a nonempty sub-interval of the cross-section");
                v *= axis(spec.ymodes()[j].m[i], spec.ymodes()[l].m[i], b, omega[i].first, omega[i].second);
            }
            M(j, l) = v;
        }
    return M;
}

struct ActiveReport {
    double control_norm = 0;
    double kill_residual = 0;       // |Pi_E u(end)| / reference
    double max_moment_residual = 0; // tensor phases
    double max_gram_condition = 0;
    std::vector<double> slice_norms;  // tensor phases: |q_j|
    // Gramian phases
    int steered_modes = 0;
    double gramian_min_eig = 0, gramian_max_eig = 0, gramian_scaled_min_eig = 0;
};

struct ActiveResult {
    ControlSignal control;
    ModalState end;  // exact state at the end of the active window
    ActiveReport report;
};

namespace detail {

// Exact uncontrolled end state of an interval (free flow plus source).
inline std::vector<HP> uncontrolled_end(const ModalSystem& sys, const ModalState& s, double t0, double t1,
                                        const SourceTrace* src) {
    return propagate<HP>(sys, to_field<HP>(s.coeffs), t0, t1, nullptr, src);
}

inline double projected_norm(const Eigen::MatrixXd& c, int cutoff) { return c.leftCols(cutoff).norm(); }

inline std::vector<double> x_gains_for(const ModalSystem& sys, const LRGeometry& geo, double x0) {
    std::vector<double> g(sys.K);
    for (int k = 1; k <= sys.K; ++k)
        g[k - 1] = geo.kind == LRGeometry::Kind::BoundaryGamma ? sys.boundary_gain(k) : sys.point_gain(k, x0);
    return g;
}

}  // namespace detail

inline double geometry_x0(const LRGeometry& geo, const SpectrumSpec& spec) {
    if (geo.kind != LRGeometry::Kind::InternalPoint) return 0.0;
    require(geo.point.has_value(), ErrorCode::InvalidArgument, "internal geometry needs a point");
    return static_cast<double>(geo.point->value_hp) * spec.a();
}

// Per-slice synthesis (omega is the whole cross-section, the slices decouple).
inline ActiveResult active_phase_tensor(const ModalSystem& sys, const ModalState& state, const LRWindow& win,
                                        const SpectrumSpec& spec, const LRGeometry& geo, const SourceTrace* src = nullptr,
                                        FamilyCache* cache = nullptr, const MinimalTimeEstimate* est = nullptr) {
    require(geo.whole_section(), ErrorCode::InvalidArgument, "tensor phase needs omega = Omega_y");
    require_clear(spec);
    const double t0 = win.a_k, Tw = win.T_k, t1 = t0 + Tw;
    const double x0 = geometry_x0(geo, spec);
    if (geo.kind == LRGeometry::Kind::InternalPoint) {
        require(est != nullptr, ErrorCode::InvalidArgument, "internal control needs a minimal-time estimate");
        require_above_minimal_time(Tw, est->T0_hat, geo.point_margin);
    }
    auto gains = detail::x_gains_for(sys, geo, x0);
    auto U = detail::uncontrolled_end(sys, state, t0, t1, src);
    ActiveResult res;
    res.control = ControlSignal::zero(geo.control_kind(), win.cutoff, t0, t1);
    res.control.x0 = x0;
    ExpSegment seg{t0, t1, std::vector<std::vector<ExpTerm>>(win.cutoff)};
    // Each slice is steered in its own tensor rates. Removing the cross-section
    // decay first would inflate targets by e^{mu_j^2 T_w} on high slices.
    std::vector<double> mom(win.cutoff, 0.0), cond(win.cutoff, 0.0);
    parallel_for(win.cutoff, [&](int jj) {
        const int j = jj + 1;
        std::vector<double> lam(sys.K);
        std::vector<HP> w(sys.K);
        double top = -INFINITY;
        for (int k = 0; k < sys.K; ++k) {
            lam[k] = sys.rates(k, j - 1);
            w[k] = U[k * sys.J + (j - 1)];
            top = std::max(top, lam[k]);
        }
        auto st = steer_slice(lam, gains, w, Tw, top > -1.0, cache);
        seg.rows[jj] = st.terms;
        mom[jj] = st.moment_residual;
        if (st.family) cond[jj] = st.family->gram_condition;
    });
    for (int jj = 0; jj < win.cutoff; ++jj) {
        res.report.max_moment_residual = std::max(res.report.max_moment_residual, mom[jj]);
        res.report.max_gram_condition = std::max(res.report.max_gram_condition, cond[jj]);
    }
    res.control.segments.push_back(seg);
    for (int j = 1; j <= win.cutoff; ++j) {
        ControlSignal one = ControlSignal::zero(geo.control_kind(), 1, t0, t1);
        one.segments.push_back(ExpSegment{t0, t1, {seg.rows[j - 1]}});
        res.report.slice_norms.push_back(one.l2_norm());
    }
    res.report.control_norm = res.control.l2_norm();
    res.end = evolve_controlled(sys, state, res.control, t1, src);
    double ref = state.norm();
    double ref_src = 0;
    if (src && !src->empty()) ref_src = detail::from_field(U, sys.K, sys.J).norm();
    ref = std::max(ref, ref_src);
    double pn = detail::projected_norm(res.end.coeffs, win.cutoff);
    res.report.kill_residual = ref > 0 ? pn / ref : pn;
    return res;
}

// Minimum-norm steering of E_gamma through the coupled input q = 1_omega sum_l g_l Psi_l.
// Control acts on the first theta fraction of the window; only modes that would
// not decay below e^{-50} during the rest of the window are steered.
inline ActiveResult active_phase_gramian(const ModalSystem& sys, const ModalState& state, const LRWindow& win,
                                         const SpectrumSpec& spec, const LRGeometry& geo, const Eigen::MatrixXd& M,
                                         const SourceTrace* src = nullptr) {
    require_clear(spec);
    const double t0 = win.a_k, Tw = win.T_k, t1 = t0 + Tw;
    const double Tc = geo.gramian_theta * Tw;
    const double x0 = geometry_x0(geo, spec);
    auto gains = detail::x_gains_for(sys, geo, x0);
    auto U = detail::uncontrolled_end(sys, state, t0, t1, src);

    struct Mode {
        int k, j;
        double lam;
    };
    std::vector<Mode> S;
    for (int j = 0; j < win.cutoff; ++j)
        for (int k = 0; k < sys.K; ++k) {
            double lam = sys.rates(k, j);
            if (lam * (Tw - Tc) > -50.0 && gains[k] != 0.0) S.push_back({k, j, lam});
        }
    const std::size_t n = S.size();
    ActiveResult res;
    res.control = ControlSignal::zero(geo.control_kind(), win.cutoff, t0, t0 + Tc);
    res.control.x0 = x0;
    res.control.mix = M;
    res.report.steered_modes = static_cast<int>(n);
    ExpSegment seg{t0, t0 + Tc, std::vector<std::vector<ExpTerm>>(win.cutoff)};
    if (n > 0) {
        using MatHP = Eigen::Matrix<HP, Eigen::Dynamic, Eigen::Dynamic>;
        MatHP Wm(n, n);
        const HP lo(Tw - Tc), hi(Tw);
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p; q < n; ++q) {
                double m = M(S[p].j, S[q].j);
                HP v(0);
                if (m != 0.0)
                    v = HP(gains[S[p].k] * gains[S[q].k] * m) * exp_segment(HP(HP(S[p].lam) + HP(S[q].lam)), lo, hi);
                Wm(p, q) = v;
                Wm(q, p) = v;
            }
        // Raw eigenvalues mix gain and decay scales; the singularity test uses
        // the Jacobi-equilibrated Gramian, which is invariant under mode rescaling.
        Eigen::SelfAdjointEigenSolver<MatHP> es(Wm, Eigen::EigenvaluesOnly);
        res.report.gramian_min_eig = static_cast<double>(es.eigenvalues().minCoeff());
        res.report.gramian_max_eig = static_cast<double>(es.eigenvalues().maxCoeff());
        Eigen::Matrix<HP, Eigen::Dynamic, 1> dinv(n);
        for (std::size_t p = 0; p < n; ++p) {
            if (!(Wm(p, p) > 0)) fail(ErrorCode::GramianSingular, "a steered mode is not reached by omega");
            dinv(p) = 1 / sqrt(Wm(p, p));
        }
        MatHP Ws = dinv.asDiagonal() * Wm * dinv.asDiagonal();
        Eigen::SelfAdjointEigenSolver<MatHP> ess(Ws, Eigen::EigenvaluesOnly);
        const HP smin = ess.eigenvalues().minCoeff(), smax = ess.eigenvalues().maxCoeff();
        res.report.gramian_scaled_min_eig = static_cast<double>(smin / smax);
        if (!(smin >= HP(1e-13) * smax))
            fail(ErrorCode::GramianSingular,
                 "equilibrated Gramian eigenvalue ratio " + std::to_string(res.report.gramian_scaled_min_eig));
        DenseMatrix<HP> W(n, n);
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = 0; q < n; ++q) W(p, q) = Wm(p, q);
        std::vector<HP> rhs(n);
        for (std::size_t p = 0; p < n; ++p) rhs[p] = -U[S[p].k * sys.J + S[p].j];
        LU<HP> lu(W);
        if (lu.singular()) fail(ErrorCode::GramianSingular, "controllability Gramian is singular");
        auto eta = lu.solve(rhs);
        for (std::size_t p = 0; p < n; ++p) {
            if (eta[p] == 0) continue;
            const HP lam(S[p].lam);
            // g_j(s) gets eta_p b_k e^{lam (Tw - s)}, s measured from t0
            seg.rows[S[p].j].push_back({eta[p] * HP(gains[S[p].k]) * exp(lam * HP(Tw)), -lam});
        }
    }
    res.control.segments.push_back(seg);
    res.report.control_norm = res.control.l2_norm();
    res.end = evolve_controlled(sys, state, res.control, t1, src);
    double ref = state.norm();
    if (src && !src->empty()) ref = std::max(ref, detail::from_field(U, sys.K, sys.J).norm());
    double pn = detail::projected_norm(res.end.coeffs, win.cutoff);
    res.report.kill_residual = ref > 0 ? pn / ref : pn;
    return res;
}

struct PassiveReport {
    double bound_rate = 0;       // lambda^{Omega_y}_{gamma+1}
    double ratio = 0;            // |(I-Pi)u(after)| / (e^{rate T} |(I-Pi)u(before)|)
    double residual_in_E = 0;    // |Pi u(after)|
    bool checked = false;
};

// Free flow over the passive window; the dissipation estimate is asserted on
// the component outside E_gamma (the admissible part of the state).
inline ModalState passive_phase(const ModalSystem& sys, const ModalState& state, double Tk, const SpectrumSpec& spec,
                                int cutoff, const SourceTrace* src = nullptr, PassiveReport* rep = nullptr) {
    ModalState out;
    if (src && !src->empty()) {
        auto u = propagate<HP>(sys, detail::to_field<HP>(state.coeffs), state.time, state.time + Tk, nullptr, src);
        out = {detail::from_field(u, sys.K, sys.J), state.time + Tk};
    } else {
        out = evolve_free(sys, state, Tk);
    }
    PassiveReport local;
    local.residual_in_E = detail::projected_norm(out.coeffs, cutoff);
    if (cutoff < sys.J && cutoff + 1 <= spec.available_mu() && !(src && !src->empty())) {
        require(cutoff >= K0_index(spec), ErrorCode::InvalidArgument, "passive phase needs gamma >= K0");
        double m = spec.mu(cutoff + 1);
        local.bound_rate = -(m * m - spec.nu() * m);
        double before = state.coeffs.rightCols(sys.J - cutoff).norm();
        double after = out.coeffs.rightCols(sys.J - cutoff).norm();
        double bound = std::exp(local.bound_rate * Tk) * before;
        local.ratio = bound > 0 ? after / bound : 0.0;
        local.checked = true;
        if (after > bound * (1 + 1e-10))
            fail(ErrorCode::DissipationViolated, "passive decay exceeded the cross-section bound");
    }
    if (rep) *rep = local;
    return out;
}

struct LRWindowRecord {
    LRWindow window;
    double norm_start = 0;  // |u(a_k)|
    ActiveReport active;
    PassiveReport passive;
};

struct LRResult {
    LRSchedule schedule;
    std::vector<LRWindowRecord> windows;
    ControlSignal control;
    std::vector<ModalState> checkpoints;  // exact states at every phase boundary, in time order
    ModalState final_state;
    double initial_norm = 0;
    double final_relative = 0;
    double total_control_norm = 0;
    double decay_fit_slope = 0;      // log|u(a_{k+1})| against 2^{k(4/(N-1) - rho)}
    bool eventually_decreasing = false;
    bool gramian = false;
    double T0_hat = 0;               // internal geometries
};

inline LRResult run_lr(const ModalState& u0, double T, const SpectrumSpec& spec, const LRGeometry& geo, double rho,
                       double beta, const SourceTrace* src = nullptr, FamilyCache* cache = nullptr) {
    require_clear(spec);
    LRResult out;
    out.schedule = build_schedule(T, rho, beta, spec);
    const ModalSystem sys = ModalSystem::tensor(spec);
    require(u0.coeffs.rows() == sys.K && u0.coeffs.cols() == sys.J, ErrorCode::InvalidArgument,
            "initial state does not match the truncation");
    FamilyCache local_cache;
    if (!cache) cache = &local_cache;
    std::optional<MinimalTimeEstimate> est;
    if (geo.kind == LRGeometry::Kind::InternalPoint) {
        require(geo.point.has_value(), ErrorCode::InvalidArgument, "internal geometry needs a point");
        est = minimal_time_estimate(*geo.point, spec.a());
        out.T0_hat = est->T0_hat;
        if (geo.whole_section()) require_above_minimal_time(T, est->T0_hat, geo.point_margin);
    }
    out.gramian = !geo.whole_section();
    Eigen::MatrixXd M;
    if (out.gramian) M = omega_mass_matrix(spec, geo.omega);

    ModalState s = u0;
    s.time = 0.0;
    out.initial_norm = s.norm();
    out.checkpoints.push_back(s);
    out.control = ControlSignal::zero(geo.control_kind(), 0, 0.0, T);
    out.control.x0 = geometry_x0(geo, spec);
    if (out.gramian) out.control.mix = M;
    for (const auto& w : out.schedule.windows) {
        LRWindowRecord rec;
        rec.window = w;
        rec.norm_start = s.norm();
        ActiveResult act = out.gramian ? active_phase_gramian(sys, s, w, spec, geo, M, src)
                                       : active_phase_tensor(sys, s, w, spec, geo, src, cache, est ? &*est : nullptr);
        rec.active = act.report;
        out.control.append(act.control);
        s = act.end;
        out.checkpoints.push_back(s);
        s = passive_phase(sys, s, w.T_k, spec, w.cutoff, src, &rec.passive);
        out.checkpoints.push_back(s);
        out.windows.push_back(rec);
    }
    out.control.t_begin = 0.0;
    out.control.t_end = T;
    if (T > s.time) {
        if (src && !src->empty()) {
            auto u = propagate<HP>(sys, detail::to_field<HP>(s.coeffs), s.time, T, nullptr, src);
            s = {detail::from_field(u, sys.K, sys.J), T};
        } else {
            s = evolve_free(sys, s, T - s.time);
        }
        out.checkpoints.push_back(s);
    }
    out.final_state = s;
    out.final_relative = out.initial_norm > 0 ? s.norm() / out.initial_norm : s.norm();
    out.total_control_norm = out.control.l2_norm();

    // Shape of the window-start norms.
    std::vector<double> starts;
    for (const auto& r : out.windows) starts.push_back(r.norm_start);
    starts.push_back(out.checkpoints.size() >= 2 ? out.checkpoints[2 * out.windows.size()].norm() : 0.0);
    out.eventually_decreasing = true;
    for (std::size_t k = 2; k < starts.size(); ++k)
        if (starts[k] > starts[k - 1]) out.eventually_decreasing = false;
    const int dim = std::max(1, spec.N() - 1);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (std::size_t k = 0; k + 1 < starts.size(); ++k) {
        double v = starts[k + 1];
        if (!(v > 0)) continue;
        double x = std::pow(2.0, k * (4.0 / dim - rho));
        double y = std::log(v);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    out.decay_fit_slope = n >= 2 ? (n * sxy - sx * sy) / (n * sxx - sx * sx) : 0.0;
    return out;
}

// Trace on `times`, restarting from the exact checkpoint that precedes each node.
inline std::vector<ModalState> lr_trace(const SpectrumSpec& spec, const LRResult& r, const std::vector<double>& times,
                                        const SourceTrace* src = nullptr) {
    const ModalSystem sys = ModalSystem::tensor(spec);
    std::vector<ModalState> out;
    std::size_t cp = 0;
    auto u = detail::to_field<long double>(r.checkpoints[0].coeffs);
    double t = r.checkpoints[0].time;
    for (double tn : times) {
        while (cp + 1 < r.checkpoints.size() && r.checkpoints[cp + 1].time <= tn) {
            ++cp;
            if (r.checkpoints[cp].time >= t) {
                u = detail::to_field<long double>(r.checkpoints[cp].coeffs);
                t = r.checkpoints[cp].time;
            }
        }
        u = propagate<long double>(sys, u, t, tn, &r.control, src);
        t = tn;
        out.push_back({detail::from_field(u, sys.K, sys.J), tn});
    }
    return out;
}

struct CostConstantFit {
    std::vector<double> T;
    std::vector<double> cost;   // worst |q| / |u0| over the probe modes
    double C = 0;               // max_T T log(cost), floored
};

// Empirical constant in |q| <= e^{C/T} |u0| from LR runs on the lowest basis modes.
inline CostConstantFit empirical_cost_constant(const SpectrumSpec& spec, const LRGeometry& geo, double rho, double beta,
                                               const std::vector<double>& T_list, int probe = 2, double floor = 0.1) {
    CostConstantFit fit;
    FamilyCache cache;
    for (double T : T_list) {
        double worst = 0;
        for (int k = 0; k < std::min(probe, spec.K_x()); ++k)
            for (int j = 0; j < std::min(probe, spec.J_y()); ++j) {
                ModalState u0 = ModalState::zeros(spec.K_x(), spec.J_y());
                u0.coeffs(k, j) = 1.0;
                worst = std::max(worst, run_lr(u0, T, spec, geo, rho, beta, nullptr, &cache).total_control_norm);
            }
        fit.T.push_back(T);
        fit.cost.push_back(worst);
        fit.C = std::max(fit.C, T * std::log(std::max(worst, 1.0)));
    }
    fit.C = std::max(fit.C, floor);
    return fit;
}

}  // namespace ksc
