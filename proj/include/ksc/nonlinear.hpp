#pragma once

// Local null control of the nonlinear equation u_t + Delta^2 u + nu Delta u + |grad u|^2 / 2 = 0
// by Picard iteration on the source term, plus an independent ETD2 verifier.

#include "control.hpp"
#include "errors.hpp"
#include "lr.hpp"
#include "modal.hpp"
#include "numeric.hpp"
#include "spectral.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace ksc {

// rho0(t) = exp(-p C / ((q-1)(T-t))),  rhoF(t) = exp(-(1+p) q^2 C / ((q-1)(T-t))).
struct WeightPair {
    double p = 0, q_w = 1.2, C_cost = 1.0, T = 1.0;

    static double default_p(double q) { return 1.2 * q * q / (2 - q * q); }

    static WeightPair make(double T, double C_cost, double q_w = 1.2, std::optional<double> p = std::nullopt) {
        require(q_w > 1 && q_w < std::sqrt(2.0), ErrorCode::InvalidArgument, "q_w must lie in (1, sqrt 2)");
        require(C_cost > 0, ErrorCode::InvalidArgument, "the cost constant must be positive");
        WeightPair w;
        w.q_w = q_w;
        w.p = p.value_or(default_p(q_w));
        require(w.p > q_w * q_w / (2 - q_w * q_w), ErrorCode::InvalidArgument, "p must exceed q^2/(2-q^2)");
        w.C_cost = C_cost;
        w.T = T;
        return w;
    }

    double log_rho0(double t) const {
        if (t >= T) return -std::numeric_limits<double>::infinity();
        return -p * C_cost / ((q_w - 1) * (T - t));
    }
    double log_rhoF(double t) const {
        if (t >= T) return -std::numeric_limits<double>::infinity();
        return -(1 + p) * q_w * q_w * C_cost / ((q_w - 1) * (T - t));
    }
    double rho0(double t) const { return std::exp(log_rho0(t)); }
    double rhoF(double t) const { return std::exp(log_rhoF(t)); }
};

// Norms are kept as logarithms: the weights reach e^{-100} well before T.
struct WeightedNorms {
    double log_u_C0L2 = -INFINITY;   // sup_t |u|/rho0
    double log_u_L2H = -INFINITY;    // (int |Delta u|^2 / rho0^2)^{1/2}
    double log_q = -INFINITY;        // (int |q|^2 / rho0^2)^{1/2}
    double log_f = -INFINITY;        // (int |f|^2 / rhoF^2)^{1/2}
    double t_cut = 0;

    static double value(double lg) { return std::exp(lg); }
};

namespace detail {

inline double log_add(double a, double b) {
    if (a == -INFINITY) return b;
    if (b == -INFINITY) return a;
    double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// log of the trapezoid integral of exp(2 g(t_i)) over the nodes up to t_cut, halved (an L^2 norm).
inline double log_l2_time(const std::vector<double>& t, const std::vector<double>& g, double t_cut) {
    double acc = -INFINITY;
    for (std::size_t i = 0; i + 1 < t.size() && t[i + 1] <= t_cut; ++i) {
        double h = t[i + 1] - t[i];
        if (h <= 0) continue;
        acc = log_add(acc, std::log(h / 2) + 2 * g[i]);
        acc = log_add(acc, std::log(h / 2) + 2 * g[i + 1]);
    }
    return acc == -INFINITY ? acc : acc / 2;
}

inline double safe_log(double v) { return v > 0 ? std::log(v) : -INFINITY; }

inline void check_weight(double lg, double t, double T) {
    if (t < T && !std::isfinite(lg))
        fail(ErrorCode::WeightUnderflow, "weight underflows at t = " + std::to_string(t) + " before the horizon");
}

inline Eigen::MatrixXd laplacian_eigs(const SpectrumSpec& spec, int K, int J) {
    Eigen::MatrixXd L(K, J);
    for (int k = 1; k <= K; ++k)
        for (int j = 1; j <= J; ++j) L(k - 1, j - 1) = spec.kappa(k) + spec.mu(j);
    return L;
}

}  // namespace detail

// Weighted norms over [0, t_cut]. The trace and source share the node grid;
// the control is sampled on the same nodes.
inline WeightedNorms weighted_norms(const SpectrumSpec& spec, const std::vector<ModalState>& trace,
                                    const ControlSignal* control, const SourceTrace* source, const WeightPair& w,
                                    double t_cut) {
    WeightedNorms out;
    out.t_cut = t_cut;
    if (trace.empty()) return out;
    const int K = static_cast<int>(trace.front().coeffs.rows()), J = static_cast<int>(trace.front().coeffs.cols());
    const Eigen::MatrixXd lap = detail::laplacian_eigs(spec, K, J);
    std::vector<double> t, gu, gh, gq;
    for (const auto& s : trace) {
        if (s.time > t_cut) break;
        double l0 = w.log_rho0(s.time);
        detail::check_weight(l0, s.time, w.T);
        t.push_back(s.time);
        double lu = detail::safe_log(s.norm()) - l0;
        gu.push_back(lu);
        out.log_u_C0L2 = std::max(out.log_u_C0L2, lu);
        gh.push_back(detail::safe_log(lap.cwiseProduct(s.coeffs).norm()) - l0);
        if (control) {
            Eigen::MatrixXd W = control->norm_weight();
            Eigen::VectorXd v(control->rows);
            for (int r = 0; r < control->rows; ++r) v(r) = control->value(r, s.time);
            double q2 = control->mix ? v.dot(W.topLeftCorner(control->rows, control->rows) * v) : v.squaredNorm();
            gq.push_back(0.5 * detail::safe_log(std::max(q2, 0.0)) - l0);
        }
    }
    out.log_u_L2H = detail::log_l2_time(t, gh, t_cut);
    if (control) out.log_q = detail::log_l2_time(t, gq, t_cut);
    if (source && !source->empty()) {
        std::vector<double> ts, gf;
        for (std::size_t i = 0; i < source->t.size() && source->t[i] <= t_cut; ++i) {
            double lf = w.log_rhoF(source->t[i]);
            detail::check_weight(lf, source->t[i], w.T);
            ts.push_back(source->t[i]);
            gf.push_back(detail::safe_log(source->f[i].norm()) - lf);
        }
        out.log_f = detail::log_l2_time(ts, gf, t_cut);
    }
    return out;
}

inline double log_source_distance(const SourceTrace& a, const SourceTrace& b, const WeightPair& w, double t_cut) {
    require(a.t.size() == b.t.size(), ErrorCode::InvalidArgument, "source traces live on different grids");
    std::vector<double> t, g;
    for (std::size_t i = 0; i < a.t.size() && a.t[i] <= t_cut; ++i) {
        t.push_back(a.t[i]);
        g.push_back(detail::safe_log((a.f[i] - b.f[i]).norm()) - w.log_rhoF(a.t[i]));
    }
    return detail::log_l2_time(t, g, t_cut);
}

// ---------------------------------------------------------------------------
// Pseudospectral quadratic term on a Gauss-Legendre tensor grid.

inline int default_nonlinear_resolution(int K, int J_mmax) { return 4 * std::max(K, J_mmax) + 8; }

class NonlinearRhs {
public:
    NonlinearRhs(const SpectrumSpec& spec, int K, int J, int resolution = -1) : K_(K), J_(J) {
        const auto& cs = spec.cross_section();
        require(cs.kind == CrossSection::Kind::Box, ErrorCode::InvalidArgument,
                "the nonlinear term needs box cross-section eigenfunctions");
        const std::size_t d = cs.dims.size();
        require(d == 1 || d == 2, ErrorCode::InvalidArgument, "nonlinear runs support N = 2 or 3");
        int mmax = 1;
        for (int j = 0; j < J; ++j)
            for (int m : spec.ymodes()[j].m) mmax = std::max(mmax, m);
        n_ = resolution > 0 ? resolution : default_nonlinear_resolution(K, mmax);
        require(n_ >= 2 * K && n_ >= 2 * mmax, ErrorCode::QuadratureUnderResolved,
                "grid resolution " + std::to_string(n_) + " is below twice the mode count per direction");
        const double a = spec.a();
        auto [xs, wx] = gauss_legendre(n_, 0.0, a);
        X_.resize(n_, K);
        DX_.resize(n_, K);
        for (int p = 0; p < n_; ++p)
            for (int k = 1; k <= K; ++k) {
                X_(p, k - 1) = spec.psi_x(k, xs[p]);
                DX_(p, k - 1) = spec.dpsi_x(k, xs[p]);
            }
        wx_ = Eigen::Map<Eigen::VectorXd>(wx.data(), n_);
        // cross-section tensor grid
        std::vector<std::vector<double>> ys(d), wy(d);
        for (std::size_t i = 0; i < d; ++i) std::tie(ys[i], wy[i]) = gauss_legendre(n_, 0.0, cs.dims[i].value());
        std::size_t ny = 1;
        for (std::size_t i = 0; i < d; ++i) ny *= static_cast<std::size_t>(n_);
        Y_.resize(ny, J);
        DY_.assign(d, Eigen::MatrixXd(ny, J));
        wy_.resize(ny);
        std::vector<std::size_t> idx(d, 0);
        for (std::size_t r = 0; r < ny; ++r) {
            double w = 1;
            for (std::size_t i = 0; i < d; ++i) w *= wy[i][idx[i]];
            wy_(r) = w;
            for (int j = 0; j < J; ++j) {
                const auto& m = spec.ymodes()[j].m;
                std::vector<double> f(d), df(d);
                for (std::size_t i = 0; i < d; ++i) {
                    double b = cs.dims[i].value(), y = ys[i][idx[i]], om = m[i] * kPi / b;
                    f[i] = std::sqrt(2.0 / b) * std::sin(om * y);
                    df[i] = std::sqrt(2.0 / b) * om * std::cos(om * y);
                }
                double all = 1;
                for (double v : f) all *= v;
                Y_(r, j) = all;
                for (std::size_t i = 0; i < d; ++i) {
                    double v = df[i];
                    for (std::size_t o = 0; o < d; ++o)
                        if (o != i) v *= f[o];
                    DY_[i](r, j) = v;
                }
            }
            std::size_t ax = 0;
            while (ax < d && ++idx[ax] == static_cast<std::size_t>(n_)) idx[ax++] = 0;
        }
        XtW_ = X_.transpose() * wx_.asDiagonal();
        YW_ = wy_.asDiagonal() * Y_;
    }

    int resolution() const { return n_; }

    // Modal coefficients of -|grad u|^2 / 2 on the retained basis.
    Eigen::MatrixXd operator()(const Eigen::MatrixXd& c) const {
        require(c.rows() == K_ && c.cols() == J_, ErrorCode::InvalidArgument, "state shape does not match the rhs");
        Eigen::MatrixXd ux = DX_ * c * Y_.transpose();
        Eigen::MatrixXd g = ux.cwiseAbs2();
        Eigen::MatrixXd XC = X_ * c;
        for (const auto& D : DY_) g += (XC * D.transpose()).cwiseAbs2();
        return -0.5 * (XtW_ * g * YW_);
    }

private:
    int K_, J_, n_;
    Eigen::MatrixXd X_, DX_, Y_, XtW_, YW_;
    std::vector<Eigen::MatrixXd> DY_;
    Eigen::VectorXd wx_, wy_;
};

inline Eigen::MatrixXd nonlinear_rhs(const ModalState& s, const SpectrumSpec& spec, int resolution = -1) {
    NonlinearRhs rhs(spec, static_cast<int>(s.coeffs.rows()), static_cast<int>(s.coeffs.cols()), resolution);
    return rhs(s.coeffs);
}

// ---------------------------------------------------------------------------
// Linear controlled solve with a source.

struct NonlinearSetup {
    LRGeometry geometry;
    double rho = 0.5;
    double beta = 0;             // <= 0: max(2 K0, 4)
    WeightPair weights;
    int nodes_per_phase = 48;    // time nodes in each active/passive phase (cosine graded)
    int coast_nodes = 32;
    int rhs_resolution = -1;
    double tol = 1e-10;          // relative change of the weighted source
    int max_iter = 30;
};

inline double default_beta(const SpectrumSpec& spec) { return std::max(2.0 * K0_index(spec), 4.0); }

// Nodes clustered at both ends of every phase, where the steering controls and
// the fast modes they excite vary fastest.
inline std::vector<double> phase_grid(const LRSchedule& s, int per_phase, int coast) {
    std::vector<double> t{0.0};
    auto add = [&](double lo, double hi, int n) {
        if (!(hi > lo)) return;
        for (int i = 1; i <= n; ++i) t.push_back(lo + (hi - lo) * (1 - std::cos(kPi * i / n)) / 2);
        t.back() = hi;
    };
    for (const auto& w : s.windows) {
        add(w.a_k, w.a_k + w.T_k, per_phase);
        add(w.a_k + w.T_k, w.a_k + 2 * w.T_k, per_phase);
    }
    add(s.coast_start, s.T, coast);
    return t;
}

inline double last_active_end(const LRSchedule& s) {
    const auto& w = s.windows.back();
    return w.a_k + w.T_k;
}

struct SourceSolve {
    LRResult lr;
    std::vector<ModalState> trace;   // on the source grid
    WeightedNorms norms;
};

inline SourceSolve controlled_solve_with_source(const ModalState& u0, const SourceTrace& f, double T,
                                                const SpectrumSpec& spec, const NonlinearSetup& setup,
                                                const std::vector<double>& grid, FamilyCache* cache = nullptr) {
    const double beta = setup.beta > 0 ? setup.beta : default_beta(spec);
    SourceSolve out;
    out.lr = run_lr(u0, T, spec, setup.geometry, setup.rho, beta, f.empty() ? nullptr : &f, cache);
    out.trace = lr_trace(spec, out.lr, grid, f.empty() ? nullptr : &f);
    out.norms = weighted_norms(spec, out.trace, &out.lr.control, &f, setup.weights, last_active_end(out.lr.schedule));
    return out;
}

inline SourceTrace source_from_trace(const std::vector<ModalState>& trace, const NonlinearRhs& rhs) {
    SourceTrace f;
    for (const auto& s : trace) {
        f.t.push_back(s.time);
        f.f.push_back(rhs(s.coeffs));
    }
    return f;
}

// ---------------------------------------------------------------------------
// Fixed point on the source.

struct IterationRecord {
    int n = 0;
    double df_norm = 0;      // weighted |f^{n} - f^{n-1}|
    double ratio = NAN;      // df_n / df_{n-1}
    double relative = 0;     // df_n / |f^{n}|
};

struct FixedPointResult {
    ControlSignal control;
    LRResult lr;
    std::vector<ModalState> trace;
    SourceTrace source;
    WeightedNorms norms;
    std::vector<IterationRecord> log;
    bool converged = false;
    double linear_final_relative = 0;
};

inline FixedPointResult fixed_point(const ModalState& u0, double T, const SpectrumSpec& spec, const NonlinearSetup& setup,
                                    std::vector<IterationRecord>* log_out = nullptr) {
    require_clear(spec);
    require(spec.N() == 2 || spec.N() == 3, ErrorCode::InvalidArgument, "nonlinear control supports N = 2 or 3");
    const double beta = setup.beta > 0 ? setup.beta : default_beta(spec);
    const LRSchedule sched = build_schedule(T, setup.rho, beta, spec);
    const auto grid = phase_grid(sched, setup.nodes_per_phase, setup.coast_nodes);
    const double t_cut = last_active_end(sched);
    const NonlinearRhs rhs(spec, static_cast<int>(u0.coeffs.rows()), static_cast<int>(u0.coeffs.cols()),
                           setup.rhs_resolution);
    FamilyCache cache;
    FixedPointResult res;
    SourceTrace f;  // f^0 = 0
    double prev = NAN;
    int strikes = 0;
    auto flush_log = [&] {
        if (log_out) *log_out = res.log;
    };
    for (int n = 1; n <= setup.max_iter; ++n) {
        SourceSolve s = controlled_solve_with_source(u0, f, T, spec, setup, grid, &cache);
        SourceTrace next = source_from_trace(s.trace, rhs);
        SourceTrace zero = next;
        for (auto& m : zero.f) m.setZero();
        const SourceTrace& old = f.empty() ? zero : f;
        IterationRecord rec;
        rec.n = n;
        double ld = log_source_distance(next, old, setup.weights, t_cut);
        double ln = log_source_distance(next, zero, setup.weights, t_cut);
        rec.df_norm = std::exp(ld);
        rec.relative = ld == -INFINITY ? 0.0 : std::exp(ld - ln);
        if (std::isfinite(prev)) rec.ratio = std::exp(ld - prev);
        res.log.push_back(rec);
        res.lr = std::move(s.lr);
        res.trace = std::move(s.trace);
        res.norms = s.norms;
        res.source = f;
        if (ld == -INFINITY || rec.relative < setup.tol) {
            res.converged = true;
            break;
        }
        if (!std::isfinite(ld) || (std::isfinite(rec.ratio) && rec.ratio > 0.9) || (std::isnan(rec.ratio) && n > 1))
            ++strikes;
        else
            strikes = 0;
        if (strikes >= 3) {
            flush_log();
            fail(ErrorCode::NoContraction, "source iteration ratio above 0.9 for 3 consecutive iterations");
        }
        prev = ld;
        f = std::move(next);
    }
    flush_log();
    if (!res.converged) fail(ErrorCode::NoContraction, "source iteration did not converge within max_iter");
    res.control = res.lr.control;
    res.linear_final_relative = res.lr.final_relative;
    return res;
}

// Largest scale s in [lo, hi] (log-bisection) at which fixed_point on s * profile converges.
inline double find_R_guess(const ModalState& profile, double T, const SpectrumSpec& spec, const NonlinearSetup& setup,
                           double lo = 1e-6, double hi = 1.0, int steps = 8) {
    auto ok = [&](double s) {
        ModalState u = profile;
        u.coeffs *= s;
        try {
            fixed_point(u, T, spec, setup);
            return true;
        } catch (const Error& e) {
            if (e.code() == ErrorCode::NoContraction) return false;
            throw;
        }
    };
    if (!ok(lo)) return 0.0;
    if (ok(hi)) return hi * profile.norm();
    for (int i = 0; i < steps; ++i) {
        double mid = std::sqrt(lo * hi);
        (ok(mid) ? lo : hi) = mid;
    }
    return lo * profile.norm();
}

// ---------------------------------------------------------------------------
// Independent nonlinear verifier: ETD2RK with exact control increments.

struct SimulationResult {
    std::vector<ModalState> trace;   // every `stride` steps plus the final state
    double final_norm = 0;
    double halving_change = 0;       // |final norm(h) - final norm(h/2)| / |u0|
    int steps = 0;
};

namespace detail {

inline std::vector<ModalState> etd2_run(const ModalSystem& sys, const NonlinearRhs& rhs, const ModalState& u0,
                                        const ControlSignal* control, double T, int steps, int stride) {
    const double h = T / steps;
    Eigen::MatrixXd E(sys.K, sys.J), P1(sys.K, sys.J), P2(sys.K, sys.J);
    for (int k = 0; k < sys.K; ++k)
        for (int j = 0; j < sys.J; ++j) {
            double z = sys.rates(k, j) * h;
            E(k, j) = std::exp(z);
            P1(k, j) = h * phi1(z);
            P2(k, j) = h * phi2(z);
        }
    std::vector<ModalState> out{u0};
    Eigen::MatrixXd u = u0.coeffs;
    std::vector<long double> zero(static_cast<std::size_t>(sys.K * sys.J), 0.0L);
    for (int n = 0; n < steps; ++n) {
        const double t0 = u0.time + n * h, t1 = u0.time + (n + 1) * h;
        Eigen::MatrixXd ctrl = Eigen::MatrixXd::Zero(sys.K, sys.J);
        if (control) ctrl = from_field(propagate<long double>(sys, zero, t0, t1, control), sys.K, sys.J);
        Eigen::MatrixXd N0 = rhs(u);
        Eigen::MatrixXd a = E.cwiseProduct(u) + P1.cwiseProduct(N0) + ctrl;
        Eigen::MatrixXd N1 = rhs(a);
        u = a + P2.cwiseProduct(N1 - N0);
        if (!u.allFinite()) fail(ErrorCode::StepUnconverged, "nonlinear simulation blew up");
        if ((n + 1) % stride == 0 || n + 1 == steps) out.push_back({u, t1});
    }
    return out;
}

}  // namespace detail

inline SimulationResult nonlinear_simulate(const ModalState& u0, const ControlSignal* control, double T,
                                           const SpectrumSpec& spec, int resolution = -1, int min_steps = 1000,
                                           int stride = 10) {
    require(T > 0, ErrorCode::InvalidArgument, "horizon must be positive");
    const int K = static_cast<int>(u0.coeffs.rows()), J = static_cast<int>(u0.coeffs.cols());
    const ModalSystem sys = ModalSystem::tensor(spec, K, J);
    const NonlinearRhs rhs(spec, K, J, resolution);
    const int steps = std::max(min_steps, 1000);
    ModalState start = u0;
    start.time = 0.0;
    SimulationResult res;
    res.trace = detail::etd2_run(sys, rhs, start, control, T, steps, stride);
    auto fine = detail::etd2_run(sys, rhs, start, control, T, 2 * steps, 2 * steps);
    res.steps = steps;
    res.final_norm = res.trace.back().norm();
    const double scale = std::max(start.norm(), std::numeric_limits<double>::min());
    res.halving_change = std::abs(res.final_norm - fine.back().norm()) / scale;
    if (res.halving_change > 1e-6)
        fail(ErrorCode::StepUnconverged, "step halving changed the final norm by " + std::to_string(res.halving_change));
    return res;
}

}  // namespace ksc
