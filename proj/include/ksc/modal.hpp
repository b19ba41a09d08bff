#pragma once

// Exact-in-time evolution of the truncated diagonal system
//   u_{k,j}' = L_{k,j} u_{k,j} + xgain_k * sum_l mix(j,l) g_l(t) + f_{k,j}(t).

#include "control.hpp"
#include "errors.hpp"
#include "numeric.hpp"
#include "spectral.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <tuple>
#include <vector>

namespace ksc {

// Sign of the boundary gain. The modal form of the transposition identity
// gives u_k' = L_k u_k - sqrt(2/a)(k pi/a) q; the duality unit test guards it.
inline constexpr double kBoundarySign = -1.0;

struct ModalState {
    Eigen::MatrixXd coeffs;  // K x J
    double time = 0.0;

    double norm() const { return coeffs.norm(); }
    static ModalState zeros(int K, int J, double t = 0.0) { return {Eigen::MatrixXd::Zero(K, J), t}; }
};

// Piecewise-linear-in-time modal source.
struct SourceTrace {
    std::vector<double> t;
    std::vector<Eigen::MatrixXd> f;
    bool empty() const { return t.empty(); }
};

class ModalSystem {
public:
    int K = 0, J = 0;
    double a = 1.0;
    Eigen::MatrixXd rates;  // K x J

    static ModalSystem tensor(const SpectrumSpec& spec, int K = -1, int J = -1) {
        ModalSystem s;
        s.K = K > 0 ? K : spec.K_x();
        s.J = J > 0 ? J : spec.J_y();
        s.a = spec.a();
        s.rates.resize(s.K, s.J);
        for (int k = 1; k <= s.K; ++k)
            for (int j = 1; j <= s.J; ++j) s.rates(k - 1, j - 1) = spec.rate(k, j);
        return s;
    }

    // One y-slice j with rates lambda_x(k, j) (plus the zeroth-order shift if asked).
    static ModalSystem slice(const SpectrumSpec& spec, int j, int K, bool with_shift = false) {
        ModalSystem s;
        s.K = K;
        s.J = 1;
        s.a = spec.a();
        s.rates.resize(K, 1);
        for (int k = 1; k <= K; ++k) s.rates(k - 1, 0) = spec.lambda_x(k, j) + (with_shift ? spec.lambda_y_shift(j) : 0.0);
        return s;
    }

    double boundary_gain(int k) const { return kBoundarySign * std::sqrt(2.0 / a) * (k * kPi / a); }
    double point_gain(int k, double x0) const { return std::sqrt(2.0 / a) * std::sin(k * kPi * x0 / a); }

    std::vector<double> x_gains(const ControlSignal& c) const {
        std::vector<double> g(K);
        for (int k = 1; k <= K; ++k) g[k - 1] = is_pointwise(c.kind) ? point_gain(k, c.x0) : boundary_gain(k);
        return g;
    }
};

inline double mix_entry(const ControlSignal& c, int j, int l) {
    if (c.mix) {
        if (j >= c.mix->rows() || l >= c.mix->cols()) return 0.0;
        return (*c.mix)(j, l);
    }
    return j == l ? 1.0 : 0.0;
}

namespace detail {

template <class Real>
using Field = std::vector<Real>;  // row-major K x J

template <class Real>
Field<Real> to_field(const Eigen::MatrixXd& m) {
    Field<Real> f(static_cast<std::size_t>(m.size()));
    for (Eigen::Index k = 0; k < m.rows(); ++k)
        for (Eigen::Index j = 0; j < m.cols(); ++j) f[k * m.cols() + j] = Real(m(k, j));
    return f;
}

template <class Real>
Eigen::MatrixXd from_field(const Field<Real>& f, int K, int J) {
    Eigen::MatrixXd m(K, J);
    for (int k = 0; k < K; ++k)
        for (int j = 0; j < J; ++j) m(k, j) = static_cast<double>(f[k * J + j]);
    return m;
}

// Adds the analytic control contribution over [alpha, beta] to u(beta).
template <class Real>
void add_analytic_control(Field<Real>& u, const ModalSystem& sys, const ControlSignal& c, double alpha, double beta) {
    auto xg = sys.x_gains(c);
    for (const auto& seg : c.segments) {
        double lo = std::max(alpha, seg.t0), hi = std::min(beta, seg.t1);
        if (!(hi > lo)) continue;
        Real tau(hi - lo), tail(beta - hi), offset(lo - seg.t0);
        for (std::size_t l = 0; l < seg.rows.size(); ++l) {
            for (const auto& term : seg.rows[l]) {
                Real coef = static_cast<Real>(term.coef), r = static_cast<Real>(term.rate);
                Real start = coef * exp(r * offset);
                if (start == Real(0)) continue;
                for (int j = 0; j < sys.J; ++j) {
                    double mj = mix_entry(c, j, static_cast<int>(l));
                    if (mj == 0.0) continue;
                    for (int k = 0; k < sys.K; ++k) {
                        if (xg[k] == 0.0) continue;
                        Real lam(sys.rates(k, j));
                        Real contrib = start * exp_conv(lam, r, tau);
                        if (tail != Real(0)) contrib *= exp(lam * tail);
                        u[k * sys.J + j] += Real(xg[k] * mj) * contrib;
                    }
                }
            }
        }
    }
}

// int_{s0}^{s1} e^{L (beta - s)} (v0 + (v1 - v0)(s - s0)/(s1 - s0)) ds
inline double linear_piece(double lam, double s0, double s1, double beta, double v0, double v1) {
    double h = s1 - s0;
    if (h <= 0) return 0.0;
    double z = lam * h;
    double val = h * phi1(z) * v0 + h * phi2(z) * (v1 - v0);
    return val * std::exp(lam * (beta - s1));
}

template <class Real>
void add_sampled_control(Field<Real>& u, const ModalSystem& sys, const ControlSignal& c, double alpha, double beta) {
    auto xg = sys.x_gains(c);
    const auto& g = c.grid;
    auto first = std::upper_bound(g.begin(), g.end(), alpha);
    std::size_t start = first == g.begin() ? 0 : static_cast<std::size_t>(first - g.begin()) - 1;
    for (std::size_t i = start; i + 1 < g.size(); ++i) {
        if (g[i] >= beta) break;
        double lo = std::max(alpha, g[i]), hi = std::min(beta, g[i + 1]);
        if (!(hi > lo)) continue;
        auto interp = [&](int row, double t) {
            if (c.quadrature == Quadrature::PiecewiseConstant) return c.samples[i][row];
            double w = (t - g[i]) / (g[i + 1] - g[i]);
            return (1 - w) * c.samples[i][row] + w * c.samples[i + 1][row];
        };
        for (int l = 0; l < c.rows; ++l) {
            double v0 = interp(l, lo), v1 = interp(l, hi);
            if (v0 == 0.0 && v1 == 0.0) continue;
            for (int j = 0; j < sys.J; ++j) {
                double mj = mix_entry(c, j, l);
                if (mj == 0.0) continue;
                for (int k = 0; k < sys.K; ++k)
                    u[k * sys.J + j] += Real(xg[k] * mj * linear_piece(sys.rates(k, j), lo, hi, beta, v0, v1));
            }
        }
    }
}

template <class Real>
void add_source(Field<Real>& u, const ModalSystem& sys, const SourceTrace& f, double alpha, double beta) {
    const auto& t = f.t;
    if (t.size() < 2) return;
    auto first = std::upper_bound(t.begin(), t.end(), alpha);
    std::size_t start = first == t.begin() ? 0 : static_cast<std::size_t>(first - t.begin()) - 1;
    for (std::size_t i = start; i + 1 < t.size(); ++i) {
        if (t[i] >= beta) break;
        double lo = std::max(alpha, t[i]), hi = std::min(beta, t[i + 1]);
        if (!(hi > lo)) continue;
        double w0 = (lo - t[i]) / (t[i + 1] - t[i]), w1 = (hi - t[i]) / (t[i + 1] - t[i]);
        for (int k = 0; k < sys.K; ++k)
            for (int j = 0; j < sys.J; ++j) {
                double a0 = f.f[i](k, j), a1 = f.f[i + 1](k, j);
                double v0 = a0 + w0 * (a1 - a0), v1 = a0 + w1 * (a1 - a0);
                if (v0 == 0.0 && v1 == 0.0) continue;
                u[k * sys.J + j] += Real(linear_piece(sys.rates(k, j), lo, hi, beta, v0, v1));
            }
    }
}

}  // namespace detail

// u(beta) from u(alpha) with optional control and source, in arithmetic Real.
template <class Real>
std::vector<Real> propagate(const ModalSystem& sys, const std::vector<Real>& u_alpha, double alpha, double beta,
                            const ControlSignal* ctrl = nullptr, const SourceTrace* src = nullptr) {
    require(beta >= alpha, ErrorCode::InvalidArgument, "propagation interval must be forward in time");
    std::vector<Real> u(u_alpha.size());
    Real dt(beta - alpha);
    for (int k = 0; k < sys.K; ++k)
        for (int j = 0; j < sys.J; ++j) u[k * sys.J + j] = exp(Real(sys.rates(k, j)) * dt) * u_alpha[k * sys.J + j];
    if (ctrl) {
        if (ctrl->analytic()) detail::add_analytic_control(u, sys, *ctrl, alpha, beta);
        else detail::add_sampled_control(u, sys, *ctrl, alpha, beta);
    }
    if (src && !src->empty()) detail::add_source(u, sys, *src, alpha, beta);
    return u;
}

inline ModalState evolve_free(const ModalSystem& sys, const ModalState& s, double dt) {
    require(dt >= 0, ErrorCode::InvalidArgument, "dt must be nonnegative");
    ModalState out = s;
    for (int k = 0; k < sys.K; ++k)
        for (int j = 0; j < sys.J; ++j) out.coeffs(k, j) *= std::exp(sys.rates(k, j) * dt);
    out.time = s.time + dt;
    return out;
}

// Controlled evolution to t_to. Analytic signals and sources are integrated at
// 50 digits so that cancellations in steering controls survive.
inline ModalState evolve_controlled(const ModalSystem& sys, const ModalState& s, const ControlSignal& c, double t_to,
                                    const SourceTrace* src = nullptr) {
    require(sys.K == s.coeffs.rows() && sys.J == s.coeffs.cols(), ErrorCode::InvalidArgument,
            "state shape does not match system");
    auto u = propagate<HP>(sys, detail::to_field<HP>(s.coeffs), s.time, t_to, &c, src);
    return {detail::from_field(u, sys.K, sys.J), t_to};
}

inline ModalState evolve_boundary_controlled(const ModalSystem& sys, const ModalState& s, const ControlSignal& c,
                                             double t_to) {
    require(!is_pointwise(c.kind), ErrorCode::InvalidArgument, "expected a boundary control");
    return evolve_controlled(sys, s, c, t_to);
}

inline ModalState evolve_pointwise_controlled(const ModalSystem& sys, const ModalState& s, const ControlSignal& c,
                                              double t_to) {
    require(is_pointwise(c.kind), ErrorCode::InvalidArgument, "expected a pointwise control");
    require(c.x0 > 0 && c.x0 < sys.a, ErrorCode::InvalidArgument, "x0 must lie inside (0, a)");
    return evolve_controlled(sys, s, c, t_to);
}

// Trace on a grid; each node is reached from the previous one in long double,
// which is plenty for plotting and for feeding the nonlinear source.
inline std::vector<ModalState> trace(const ModalSystem& sys, const ModalState& s0, const std::vector<double>& times,
                                     const ControlSignal* c = nullptr, const SourceTrace* src = nullptr) {
    std::vector<ModalState> out;
    auto u = detail::to_field<long double>(s0.coeffs);
    double t = s0.time;
    for (double tn : times) {
        require(tn >= t, ErrorCode::InvalidArgument, "trace times must be nondecreasing and after the state time");
        u = propagate<long double>(sys, u, t, tn, c, src);
        t = tn;
        out.push_back({detail::from_field(u, sys.K, sys.J), tn});
    }
    return out;
}

struct AdjointSample {
    Eigen::MatrixXd phi;            // K x J
    Eigen::VectorXd boundary_obs;   // d/dx phi(t, 0, .) as y-modal row
    Eigen::VectorXd point_obs;      // phi(t, x0, .) as y-modal row
};

inline AdjointSample adjoint_solution(const ModalSystem& sys, const Eigen::MatrixXd& phi_T, double t, double T,
                                      double x0 = -1.0) {
    require(t <= T, ErrorCode::InvalidArgument, "adjoint evaluated after the horizon");
    AdjointSample s;
    s.phi = phi_T;
    for (int k = 0; k < sys.K; ++k)
        for (int j = 0; j < sys.J; ++j) s.phi(k, j) *= std::exp(sys.rates(k, j) * (T - t));
    s.boundary_obs = Eigen::VectorXd::Zero(sys.J);
    s.point_obs = Eigen::VectorXd::Zero(sys.J);
    for (int k = 0; k < sys.K; ++k) {
        double d = std::sqrt(2.0 / sys.a) * ((k + 1) * kPi / sys.a);
        double p = x0 > 0 ? sys.point_gain(k + 1, x0) : 0.0;
        for (int j = 0; j < sys.J; ++j) {
            s.boundary_obs(j) += d * s.phi(k, j);
            s.point_obs(j) += p * s.phi(k, j);
        }
    }
    return s;
}

struct ObservationSeries {
    std::vector<double> t;
    std::vector<double> norm;
    std::vector<Eigen::VectorXd> boundary;  // v_x(t, 0, .)
    std::vector<Eigen::VectorXd> point;     // v(t, x0, .)
};

inline ObservationSeries observe(const ModalSystem& sys, const std::vector<ModalState>& tr, double x0 = -1.0) {
    ObservationSeries o;
    for (const auto& s : tr) {
        Eigen::VectorXd b = Eigen::VectorXd::Zero(sys.J), p = Eigen::VectorXd::Zero(sys.J);
        for (int k = 0; k < sys.K; ++k) {
            double d = std::sqrt(2.0 / sys.a) * ((k + 1) * kPi / sys.a);
            double g = x0 > 0 ? sys.point_gain(k + 1, x0) : 0.0;
            b += d * s.coeffs.row(k).transpose();
            p += g * s.coeffs.row(k).transpose();
        }
        o.t.push_back(s.time);
        o.norm.push_back(s.norm());
        o.boundary.push_back(b);
        o.point.push_back(p);
    }
    return o;
}

// Sum over neglected modes of e^{2 L t} |u0|^2, for an initial datum given on a
// larger modal block than the simulated one.
inline double tail_bound(const SpectrumSpec& spec, const Eigen::MatrixXd& u0_big, int K_kept, int J_kept, double t) {
    double s = 0;
    for (int k = 0; k < u0_big.rows(); ++k)
        for (int j = 0; j < u0_big.cols(); ++j) {
            if (k < K_kept && j < J_kept) continue;
            double v = u0_big(k, j);
            if (v != 0.0) s += std::exp(2 * spec.rate(k + 1, j + 1) * t) * v * v;
        }
    return std::sqrt(s);
}

// Tensor Gauss-Legendre projection of u0(x, y) onto Psi_k^x Psi_j^y.
// `points` is per direction; at least 4 points per wavelength are required.
inline ModalState project_initial(const SpectrumSpec& spec, const std::function<double(double, const std::vector<double>&)>& u0,
                                  int K, int J, int points) {
    require(points >= 2 * K, ErrorCode::QuadratureUnderResolved,
            "need at least 4 points per wavelength in x (" + std::to_string(2 * K) + ")");
    const auto& cs = spec.cross_section();
    require(cs.kind == CrossSection::Kind::Box, ErrorCode::InvalidArgument, "projection needs a box cross-section");
    int mmax = 1;
    for (int j = 1; j <= J; ++j)
        for (int m : spec.ymodes()[j - 1].m) mmax = std::max(mmax, m);
    require(points >= 2 * mmax, ErrorCode::QuadratureUnderResolved, "need at least 4 points per wavelength in y");
    auto [xs, wx] = gauss_legendre(points, 0.0, spec.a());
    const std::size_t d = cs.dims.size();
    std::vector<std::vector<double>> ys(d), wy(d);
    for (std::size_t i = 0; i < d; ++i) std::tie(ys[i], wy[i]) = gauss_legendre(points, 0.0, cs.dims[i].value());
    ModalState st = ModalState::zeros(K, J);
    std::vector<std::size_t> idx(d, 0);
    std::vector<double> y(d);
    for (;;) {
        double w = 1;
        for (std::size_t i = 0; i < d; ++i) {
            y[i] = ys[i][idx[i]];
            w *= wy[i][idx[i]];
        }
        std::vector<double> py(J);
        for (int j = 1; j <= J; ++j) py[j - 1] = spec.psi_y(j, y);
        for (int p = 0; p < points; ++p) {
            double v = u0(xs[p], y) * w * wx[p];
            if (v == 0.0) continue;
            for (int k = 1; k <= K; ++k) {
                double px = spec.psi_x(k, xs[p]);
                for (int j = 0; j < J; ++j) st.coeffs(k - 1, j) += v * px * py[j];
            }
        }
        std::size_t ax = 0;
        while (ax < d && ++idx[ax] == static_cast<std::size_t>(points)) idx[ax++] = 0;
        if (ax == d) break;
    }
    return st;
}

}  // namespace ksc
