#include "ksc/modal.hpp"
#include "ksc/nonlinear.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace ksc;
using boost::math::quadrature::gauss_kronrod;

namespace {

SpectrumSpec interval_spec(const std::string& nu, int K, int J) {
    return SpectrumSpec(*parse_length("pi"), *ExactReal::parse(nu), CrossSection::box({*parse_length("pi")}), K, J);
}

ControlSignal exp_control(ControlKind kind, double T, std::vector<ExpTerm> terms) {
    auto c = ControlSignal::zero(kind, 1, 0.0, T);
    c.segments.push_back(ExpSegment{0.0, T, {std::move(terms)}});
    return c;
}

}  // namespace

// <u(T), phi_T> - <u0, phi(0)> = int_0^T q(t) * sum_k b_k phi_k(t) dt,
// with the right side integrated by quadrature, independently of the propagator.
TEST(Modal, TranspositionIdentityForBoundaryInput) {
    auto spec = interval_spec("1", 8, 1);
    auto sys = ModalSystem::slice(spec, 1, 8);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-1, 1);
    const double T = 0.8;
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::VectorXd u0(8), phiT(8);
        for (int k = 0; k < 8; ++k) {
            u0(k) = U(rng);
            phiT(k) = U(rng);
        }
        auto c = exp_control(ControlKind::Boundary1D, T, {{HP(U(rng)), HP(2 * U(rng))}, {HP(U(rng)), HP(-3.0)}});
        auto end = evolve_controlled(sys, ModalState{u0, 0.0}, c, T);
        auto adj0 = adjoint_solution(sys, phiT, 0.0, T);
        double lhs = end.coeffs.col(0).dot(phiT) - u0.dot(adj0.phi.col(0));
        auto integrand = [&](double t) {
            double s = 0;
            for (int k = 1; k <= 8; ++k) s += sys.boundary_gain(k) * std::exp(sys.rates(k - 1, 0) * (T - t)) * phiT(k - 1);
            return c.value(0, t) * s;
        };
        double rhs = gauss_kronrod<double, 61>::integrate(integrand, 0.0, T, 10, 1e-14);
        EXPECT_NEAR(lhs, rhs, 1e-10 * (1 + std::abs(rhs)));
    }
}

TEST(Modal, BoundaryGainSignMatchesWeakForm) {
    // Integrating u_t = -u_xxxx - nu u_xx against Psi_k leaves -dPsi_k(0) * q with the
    // boundary condition u_x(t,0) = q; for k = 1 on (0, pi), dPsi_1(0) = sqrt(2/pi).
    auto spec = interval_spec("0", 3, 1);
    auto sys = ModalSystem::slice(spec, 1, 3);
    EXPECT_NEAR(sys.boundary_gain(1), kBoundarySign * spec.dpsi_x(1, 0.0), 1e-15);
    EXPECT_LT(sys.boundary_gain(2), 0.0);
}

TEST(Modal, DuhamelWithConstantInput) {
    auto spec = interval_spec("0", 4, 1);
    auto sys = ModalSystem::slice(spec, 1, 4);
    const double T = 0.3, q = 0.7;
    auto c = exp_control(ControlKind::Boundary1D, T, {{HP(q), HP(0)}});
    Eigen::VectorXd u0(4);
    u0 << 1, -0.5, 0.25, 2;
    auto end = evolve_controlled(sys, ModalState{u0, 0.0}, c, T);
    for (int k = 1; k <= 4; ++k) {
        double L = sys.rates(k - 1, 0);
        double want = std::exp(L * T) * u0(k - 1) + sys.boundary_gain(k) * q * std::expm1(L * T) / L;
        EXPECT_NEAR(end.coeffs(k - 1, 0), want, 1e-14 * (1 + std::abs(want)));
    }
}

TEST(Modal, SampledConstantMatchesAnalyticConstant) {
    auto spec = interval_spec("2", 5, 1);
    auto sys = ModalSystem::slice(spec, 1, 5);
    const double T = 0.5;
    auto a = exp_control(ControlKind::Boundary1D, T, {{HP(1.3), HP(0)}});
    auto s = ControlSignal::sampled_signal(ControlKind::Boundary1D, {0.0, 0.2, 0.5}, {{1.3}, {1.3}},
                                           Quadrature::PiecewiseConstant);
    auto l = ControlSignal::sampled_signal(ControlKind::Boundary1D, {0.0, 0.1, 0.5}, {{1.3}, {1.3}, {1.3}},
                                           Quadrature::PiecewiseLinear);
    Eigen::VectorXd u0 = Eigen::VectorXd::Ones(5);
    auto ea = evolve_controlled(sys, {u0, 0.0}, a, T);
    auto es = evolve_controlled(sys, {u0, 0.0}, s, T);
    auto el = evolve_controlled(sys, {u0, 0.0}, l, T);
    EXPECT_LT((ea.coeffs - es.coeffs).norm(), 1e-13);
    EXPECT_LT((ea.coeffs - el.coeffs).norm(), 1e-13);
    EXPECT_NEAR(a.l2_norm(), 1.3 * std::sqrt(T), 1e-14);
    EXPECT_NEAR(s.l2_norm(), 1.3 * std::sqrt(T), 1e-14);
    EXPECT_NEAR(l.l2_norm(), 1.3 * std::sqrt(T), 1e-14);
}

TEST(Modal, PiecewiseLinearRampAgainstQuadrature) {
    auto spec = interval_spec("0", 3, 1);
    auto sys = ModalSystem::slice(spec, 1, 3);
    auto c = ControlSignal::sampled_signal(ControlKind::Boundary1D, {0.0, 0.4, 1.0}, {{0.0}, {1.0}, {-0.5}},
                                           Quadrature::PiecewiseLinear);
    auto end = evolve_controlled(sys, ModalState::zeros(3, 1), c, 1.0);
    for (int k = 1; k <= 3; ++k) {
        double L = sys.rates(k - 1, 0);
        auto f = [&](double t) { return std::exp(L * (1.0 - t)) * c.value(0, t); };
        double want = sys.boundary_gain(k) * (gauss_kronrod<double, 61>::integrate(f, 0.0, 0.4, 6, 1e-14) +
                                              gauss_kronrod<double, 61>::integrate(f, 0.4, 1.0, 6, 1e-14));
        EXPECT_NEAR(end.coeffs(k - 1, 0), want, 1e-12);
    }
}

TEST(Modal, FreeFlowSemigroup) {
    auto spec = interval_spec("3", 6, 4);
    auto sys = ModalSystem::tensor(spec);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> N;
    ModalState s = ModalState::zeros(6, 4);
    for (int k = 0; k < 6; ++k)
        for (int j = 0; j < 4; ++j) s.coeffs(k, j) = N(rng);
    auto two = evolve_free(sys, evolve_free(sys, s, 0.13), 0.29);
    auto one = evolve_free(sys, s, 0.42);
    EXPECT_LT((two.coeffs - one.coeffs).norm(), 1e-14 * one.coeffs.norm() + 1e-300);
    EXPECT_DOUBLE_EQ(two.time, 0.42);
}

TEST(Modal, DissipationOutsideLowCrossSectionModes) {
    auto spec = SpectrumSpec(*parse_length("pi"), *ExactReal::parse("2"), CrossSection::box({*parse_length("pi")}), 8, 10);
    auto sys = ModalSystem::tensor(spec);
    const int J = K0_index(spec) + 1;
    const double m = spec.mu(J + 1);
    const double rate = -(m * m - spec.nu() * m);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> N;
    for (int trial = 0; trial < 20; ++trial) {
        ModalState s = ModalState::zeros(8, 10);
        for (int k = 0; k < 8; ++k)
            for (int j = J; j < 10; ++j) s.coeffs(k, j) = N(rng);
        for (double t : {0.01, 0.1, 0.5}) {
            auto e = evolve_free(sys, s, t);
            EXPECT_LE(e.norm(), std::exp(rate * t) * s.norm() * (1 + 1e-12));
        }
    }
}

TEST(Modal, ZeroStateAndZeroControlStayZero) {
    auto spec = interval_spec("0", 4, 2);
    auto sys = ModalSystem::tensor(spec);
    auto c = ControlSignal::zero(ControlKind::BoundaryND, 2, 0.0, 1.0);
    auto e = evolve_controlled(sys, ModalState::zeros(4, 2), c, 1.0);
    EXPECT_EQ(e.norm(), 0.0);
}

TEST(Modal, TraceEndsWhereEvolutionEnds) {
    auto spec = interval_spec("0", 5, 1);
    auto sys = ModalSystem::slice(spec, 1, 5);
    auto c = exp_control(ControlKind::Boundary1D, 1.0, {{HP(0.4), HP(-1.0)}});
    Eigen::VectorXd u0 = Eigen::VectorXd::LinSpaced(5, 1.0, -1.0);
    auto tr = trace(sys, {u0, 0.0}, {0.0, 0.25, 0.5, 1.0}, &c);
    auto e = evolve_controlled(sys, {u0, 0.0}, c, 1.0);
    EXPECT_LT((tr.back().coeffs - e.coeffs).norm(), 1e-14);
    EXPECT_LT((tr.front().coeffs.col(0) - u0).norm(), 1e-15);
}

TEST(Modal, PointObservationOfSingleMode) {
    auto spec = interval_spec("0", 3, 1);
    auto sys = ModalSystem::slice(spec, 1, 3);
    Eigen::VectorXd u0 = Eigen::VectorXd::Zero(3);
    u0(1) = 1.0;
    auto o = observe(sys, {ModalState{u0, 0.0}}, 1.0);
    EXPECT_NEAR(o.point[0](0), spec.psi_x(2, 1.0), 1e-15);
    EXPECT_NEAR(o.boundary[0](0), spec.dpsi_x(2, 0.0), 1e-14);
}

TEST(Modal, ProjectionRecoversModalCoefficients) {
    SpectrumSpec spec(*parse_length("pi"), *ExactReal::parse("0"),
                      CrossSection::box({*parse_length("pi")}), 6, 4);
    auto f = [&](double x, const std::vector<double>& y) {
        return 0.5 * spec.psi_x(1, x) * spec.psi_y(1, y) - 2.0 * spec.psi_x(4, x) * spec.psi_y(3, y);
    };
    auto s = project_initial(spec, f, 6, 4, 24);
    Eigen::MatrixXd want = Eigen::MatrixXd::Zero(6, 4);
    want(0, 0) = 0.5;
    want(3, 2) = -2.0;
    EXPECT_LT((s.coeffs - want).norm(), 1e-13);
    // Parseval: the L2 norm of f is the coefficient norm
    EXPECT_NEAR(s.norm(), std::sqrt(0.25 + 4.0), 1e-13);
    EXPECT_THROW(project_initial(spec, f, 6, 4, 8), Error);
}

TEST(Modal, TailBoundCountsOnlyDroppedModes) {
    auto spec = interval_spec("0", 6, 3);
    Eigen::MatrixXd big = Eigen::MatrixXd::Zero(6, 3);
    big(0, 0) = 5.0;
    big(5, 2) = 1.0;
    double want = std::exp(spec.rate(6, 3) * 0.1);
    EXPECT_NEAR(tail_bound(spec, big, 4, 2, 0.1), want, 1e-15 * want);
}

// -1/2 |grad u|^2 projected on a 160-point grid is the reference.
TEST(NonlinearTerm, DefaultGridMatchesFineGrid) {
    SpectrumSpec spec(*parse_length("pi"), *ExactReal::parse("0"), CrossSection::box({*parse_length("pi")}), 6, 6);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> N;
    ModalState u = ModalState::zeros(6, 6);
    for (int k = 0; k < 6; ++k)
        for (int j = 0; j < 6; ++j) u.coeffs(k, j) = N(rng) / (1 + k + j);
    auto a = nonlinear_rhs(u, spec);
    auto b = nonlinear_rhs(u, spec, 160);
    EXPECT_LT((a - b).norm(), 1e-12 * b.norm());
}

TEST(NonlinearTerm, SingleModeAgainstQuadrature) {
    SpectrumSpec spec(*parse_length("pi"), *ExactReal::parse("0"), CrossSection::box({*parse_length("pi")}), 4, 4);
    ModalState u = ModalState::zeros(4, 4);
    u.coeffs(0, 0) = 1.0;
    auto r = nonlinear_rhs(u, spec);
    // u = (2/pi) sin x sin y, |grad u|^2 = (4/pi^2)(cos^2 x sin^2 y + sin^2 x cos^2 y)
    for (int k = 1; k <= 4; ++k)
        for (int j = 1; j <= 4; ++j) {
            auto inner = [&](double x) {
                return gauss_kronrod<double, 31>::integrate(
                    [&](double y) {
                        double g = 4 / (kPi * kPi) *
                                   (std::pow(std::cos(x) * std::sin(y), 2) + std::pow(std::sin(x) * std::cos(y), 2));
                        return -0.5 * g * spec.psi_x(k, x) * spec.psi_y(j, {y});
                    },
                    0.0, kPi, 5, 1e-14);
            };
            double want = gauss_kronrod<double, 31>::integrate(inner, 0.0, kPi, 5, 1e-14);
            EXPECT_NEAR(r(k - 1, j - 1), want, 1e-12) << k << "," << j;
        }
}

TEST(NonlinearTerm, QuadraticHomogeneity) {
    SpectrumSpec spec(*parse_length("pi"), *ExactReal::parse("0"), CrossSection::box({*parse_length("pi")}), 5, 5);
    ModalState u = ModalState::zeros(5, 5);
    u.coeffs(1, 0) = 0.3;
    u.coeffs(2, 3) = -0.8;
    ModalState v = u;
    v.coeffs *= -3.0;
    auto a = nonlinear_rhs(u, spec), b = nonlinear_rhs(v, spec);
    EXPECT_LT((b - 9.0 * a).norm(), 1e-13 * b.norm());
    EXPECT_EQ(nonlinear_rhs(ModalState::zeros(5, 5), spec).norm(), 0.0);
}

TEST(NonlinearTerm, UnderResolvedGridIsRejected) {
    SpectrumSpec spec(*parse_length("pi"), *ExactReal::parse("0"), CrossSection::box({*parse_length("pi")}), 8, 8);
    try {
        NonlinearRhs rhs(spec, 8, 8, 10);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::QuadratureUnderResolved);
    }
}
