#pragma once

#include "biorthogonal.hpp"
#include "control.hpp"
#include "errors.hpp"
#include "modal.hpp"
#include "spectral.hpp"
#include "steer.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace ksc {

struct Control1DReport {
    double control_norm = 0;
    double moment_residual = 0;
    double family_residual = 0;
    double gram_condition = 0;
    double tail_estimate = 0;  // free-decay bound of modes above K_trunc
    double c0 = 0;
    double horizon = 0;        // active horizon; the control is zero on (horizon, T]
    std::vector<double> targets;
};

struct Control1DResult {
    ControlSignal control;
    Control1DReport report;
};

// m_k = e^{lam_k T} <u0, Psi_k> / (sqrt(2/a) k pi / a)
inline std::vector<double> moment_targets(const Eigen::VectorXd& u0, double T, const SpectrumSpec& spec, int j) {
    require_clear(spec);
    std::vector<double> m(u0.size());
    for (Eigen::Index k = 1; k <= u0.size(); ++k) {
        double d = std::sqrt(2.0 / spec.a()) * (k * kPi / spec.a());
        m[k - 1] = std::exp(spec.lambda_x(static_cast<int>(k), j) * T) * u0(k - 1) / d;
    }
    return m;
}

namespace detail {

inline SliceSteer steer_boundary_slice(const Eigen::VectorXd& u0, double Th, const ModalSystem& sys, bool case2,
                                       FamilyCache* cache) {
    const int K = sys.K;
    std::vector<double> lam(K), gain(K);
    std::vector<HP> w(K);
    for (int k = 1; k <= K; ++k) {
        lam[k - 1] = sys.rates(k - 1, 0);
        gain[k - 1] = sys.boundary_gain(k);
        double v = k <= u0.size() ? u0(k - 1) : 0.0;
        w[k - 1] = exp(HP(lam[k - 1]) * HP(Th)) * HP(v);
    }
    return steer_slice(lam, gain, w, Th, case2, cache);
}

inline double steer_norm(const SliceSteer& st, double Th) {
    ControlSignal c = ControlSignal::zero(ControlKind::Boundary1D, 1, 0.0, Th);
    c.segments.push_back(ExpSegment{0.0, Th, {st.terms}});
    return c.l2_norm();
}

}  // namespace detail

// Steers to zero on the cheapest of the horizons T, T/2, ..., T/2^halvings and
// keeps the control at zero afterwards. A null control on a shorter window
// extended by zero is a null control on [0,T], so the reported cost can only
// drop as T doubles. With the positivity shift the single-horizon construction
// pays e^{lam T} on unstable modes, which this search avoids.
inline Control1DResult synthesize_boundary_control(const Eigen::VectorXd& u0, double T, const SpectrumSpec& spec, int j,
                                                   int K_trunc, FamilyCache* cache = nullptr, int halvings = 4) {
    require_clear(spec);
    require(T > 0, ErrorCode::InvalidArgument, "horizon must be positive");
    require(K_trunc >= 1 && K_trunc <= kKBioMax, ErrorCode::InvalidArgument, "K_trunc out of range");
    require(halvings >= 0, ErrorCode::InvalidArgument, "halvings must be nonnegative");
    const int K = K_trunc;
    auto sys = ModalSystem::slice(spec, j, K);
    const bool case2 = j < n0_index(spec);

    SliceSteer st = detail::steer_boundary_slice(u0, T, sys, case2, cache);
    double Th = T;
    double best = detail::steer_norm(st, T);
    for (int i = 1; i <= halvings; ++i) {
        const double Ti = std::ldexp(T, -i);
        try {
            SliceSteer cand = detail::steer_boundary_slice(u0, Ti, sys, case2, cache);
            double n = detail::steer_norm(cand, Ti);
            if (n < best) {
                best = n;
                st = std::move(cand);
                Th = Ti;
            }
        } catch (const Error& e) {
            // Short horizons hit the family's conditioning guard first; longer ones stand.
            if (e.code() != ErrorCode::IllConditioned) throw;
        }
    }

    Control1DResult res;
    res.control = ControlSignal::zero(ControlKind::Boundary1D, 1, 0.0, T);
    if (!st.terms.empty()) res.control.segments.push_back(ExpSegment{0.0, Th, {st.terms}});
    auto& r = res.report;
    r.control_norm = res.control.l2_norm();
    r.moment_residual = st.moment_residual;
    r.c0 = st.c0;
    r.horizon = Th;
    if (st.family) {
        r.family_residual = st.family->residual_max;
        r.gram_condition = st.family->gram_condition;
    }
    for (const auto& t : st.targets) r.targets.push_back(static_cast<double>(t));
    double tail = 0;
    for (Eigen::Index k = K + 1; k <= u0.size(); ++k) {
        double v = std::exp(spec.lambda_x(static_cast<int>(k), j) * T) * u0(k - 1);
        tail += v * v;
    }
    r.tail_estimate = std::sqrt(tail);
    return res;
}

struct NullCheck {
    double final_relative = 0;  // over retained modes
    double final_all = 0;       // over all simulated modes
    Eigen::VectorXd final_modes;
};

// Simulate the slice system with K_sim modes (default: u0's length) and report
// the end state; `retained` modes (default: all) enter final_relative.
inline NullCheck verify_null(const Eigen::VectorXd& u0, const ControlSignal& control, double T, const SpectrumSpec& spec,
                             int j, int K_sim = -1, int retained = -1) {
    const int K = K_sim > 0 ? K_sim : static_cast<int>(u0.size());
    const int R = retained > 0 ? std::min(retained, K) : K;
    auto sys = ModalSystem::slice(spec, j, K);
    ModalState s = ModalState::zeros(K, 1);
    for (int k = 0; k < std::min<int>(K, static_cast<int>(u0.size())); ++k) s.coeffs(k, 0) = u0(k);
    double n0 = s.norm();
    ModalState e = evolve_controlled(sys, s, control, T);
    NullCheck out;
    out.final_modes = e.coeffs.col(0);
    double ret = out.final_modes.head(R).norm();
    out.final_relative = n0 > 0 ? ret / n0 : ret;
    out.final_all = n0 > 0 ? out.final_modes.norm() / n0 : out.final_modes.norm();
    return out;
}

struct CostTable {
    std::vector<int> j_list;
    std::vector<double> T_list;
    Eigen::MatrixXd cost;  // rows j, cols T: worst case over basis data Psi_k, k <= K_trunc
    double fit_intercept = 0, fit_slope = 0, fit_rms = 0;  // log cost ~ c + s * j^{1/(N-1)} / T
};

inline CostTable cost_scan(const SpectrumSpec& spec, const std::vector<int>& j_list, const std::vector<double>& T_list,
                           int K_trunc) {
    require_clear(spec);
    CostTable tab;
    tab.j_list = j_list;
    tab.T_list = T_list;
    tab.cost.resize(static_cast<Eigen::Index>(j_list.size()), static_cast<Eigen::Index>(T_list.size()));
    FamilyCache cache;
    for (std::size_t a = 0; a < j_list.size(); ++a)
        for (std::size_t b = 0; b < T_list.size(); ++b) {
            double worst = 0;
            for (int k = 1; k <= K_trunc; ++k) {
                Eigen::VectorXd u0 = Eigen::VectorXd::Zero(K_trunc);
                u0(k - 1) = 1.0;
                auto r = synthesize_boundary_control(u0, T_list[b], spec, j_list[a], K_trunc, &cache);
                worst = std::max(worst, r.report.control_norm);
            }
            tab.cost(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = worst;
        }
    const int dim = std::max(1, spec.N() - 1);
    const auto n = static_cast<Eigen::Index>(j_list.size() * T_list.size());
    Eigen::MatrixXd A(n, 2);
    Eigen::VectorXd y(n);
    Eigen::Index i = 0;
    for (std::size_t a = 0; a < j_list.size(); ++a)
        for (std::size_t b = 0; b < T_list.size(); ++b, ++i) {
            A(i, 0) = 1.0;
            A(i, 1) = std::pow(double(j_list[a]), 1.0 / dim) / T_list[b];
            y(i) = std::log(tab.cost(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
        }
    Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
    tab.fit_intercept = c(0);
    tab.fit_slope = c(1);
    tab.fit_rms = std::sqrt((A * c - y).squaredNorm() / double(n));
    return tab;
}

struct Counterexample {
    int j = 0, k0 = 0, l0 = 0;
    Eigen::VectorXd u0;           // Psi_k0 - (k0/l0) Psi_l0
    double rate_k0 = 0, rate_l0 = 0;
    bool rates_equal_exact = false;
    double max_boundary_obs = 0;  // max |v_x(t,0)| on the sample grid
    double min_norm = 0;
    double growth_rate = 0;       // log(|v(T)|/|v0|)/T
    double norm_ratio_T = 0;      // |v(T)| / |v0|
    // pointwise analogue: Psi_k0 - w Psi_l0 with w = sin(k0 pi x0/a)/sin(l0 pi x0/a)
    double x0 = 0;
    Eigen::VectorXd u0_point;
    double max_point_obs = 0;
    std::vector<double> t;
    std::vector<double> obs;
};

inline Counterexample critical_counterexample(const SpectrumSpec& spec, double T, int samples = 1000, double x0 = -1) {
    auto v = critical_set_check(spec);
    if (v.clear()) fail(ErrorCode::NotCritical, "nu is not in the critical set at this truncation");
    Counterexample ce;
    ce.j = v.j;
    ce.k0 = v.k;
    ce.l0 = v.l;
    const int K = ce.l0;
    auto sys = ModalSystem::slice(spec, ce.j, K);
    ce.rate_k0 = sys.rates(ce.k0 - 1, 0);
    ce.rate_l0 = sys.rates(ce.l0 - 1, 0);
    ce.rates_equal_exact = v.kind == CriticalVerdict::Kind::Critical;
    ce.u0 = Eigen::VectorXd::Zero(K);
    ce.u0(ce.k0 - 1) = 1.0;
    ce.u0(ce.l0 - 1) = -double(ce.k0) / double(ce.l0);
    ce.x0 = x0 > 0 ? x0 : spec.a() * (std::sqrt(2.0) - 1.0);
    const double sk = std::sin(ce.k0 * kPi * ce.x0 / spec.a()), sl = std::sin(ce.l0 * kPi * ce.x0 / spec.a());
    ce.u0_point = Eigen::VectorXd::Zero(K);
    ce.u0_point(ce.k0 - 1) = 1.0;
    ce.u0_point(ce.l0 - 1) = -sk / sl;

    ModalState s{ce.u0, 0.0}, sp{ce.u0_point, 0.0};
    const double n0 = s.norm();
    ce.min_norm = n0;
    for (int i = 0; i < samples; ++i) {
        double t = T * i / double(samples - 1);
        auto st = evolve_free(sys, s, t);
        auto stp = evolve_free(sys, sp, t);
        auto ob = observe(sys, {st}, ce.x0);
        auto obp = observe(sys, {stp}, ce.x0);
        ce.t.push_back(t);
        ce.obs.push_back(ob.boundary[0](0));
        ce.max_boundary_obs = std::max(ce.max_boundary_obs, std::abs(ob.boundary[0](0)));
        ce.max_point_obs = std::max(ce.max_point_obs, std::abs(obp.point[0](0)));
        ce.min_norm = std::min(ce.min_norm, st.norm());
    }
    auto end = evolve_free(sys, s, T);
    ce.norm_ratio_T = end.norm() / n0;
    ce.growth_rate = std::log(ce.norm_ratio_T) / T;
    return ce;
}

}  // namespace ksc
