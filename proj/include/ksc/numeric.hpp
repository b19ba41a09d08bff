#pragma once

// Scalar helpers shared by every module: the high-precision type, stable
// exponential-integral kernels and a Gauss-Legendre rule.

#include <boost/math/constants/constants.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

namespace Eigen {
// Lets Eigen's symmetric eigensolver run on 50-digit floats.
template <>
struct NumTraits<boost::multiprecision::cpp_bin_float_50>
    : GenericNumTraits<boost::multiprecision::cpp_bin_float_50> {
    using Real = boost::multiprecision::cpp_bin_float_50;
    using NonInteger = Real;
    using Literal = Real;
    using Nested = Real;
    enum {
        IsComplex = 0,
        IsInteger = 0,
        IsSigned = 1,
        RequireInitialization = 1,
        ReadCost = HugeCost,
        AddCost = HugeCost,
        MulCost = HugeCost
    };
    static Real epsilon() { return std::numeric_limits<Real>::epsilon(); }
    static Real dummy_precision() { return Real(1e-45); }
    static int digits10() { return std::numeric_limits<Real>::digits10; }
};
}  // namespace Eigen

namespace ksc {

using HP = boost::multiprecision::cpp_bin_float_50;

template <class Real>
inline Real pi_v() {
    return boost::math::constants::pi<Real>();
}

inline constexpr double kPi = 3.14159265358979323846264338327950288;

using std::exp;
using std::expm1;
using std::abs;
using std::log;

// phi1(z) = (e^z - 1)/z with the removable singularity filled in.
template <class Real>
Real phi1(const Real& z) {
    using std::abs;
    using std::expm1;
    if (abs(z) < Real(1e-5)) {
        return Real(1) + z / 2 + z * z / 6 + z * z * z / 24;
    }
    return expm1(z) / z;
}

// phi2(z) = (e^z - 1 - z)/z^2.
template <class Real>
Real phi2(const Real& z) {
    using std::abs;
    using std::expm1;
    if (abs(z) < Real(1e-3)) {
        Real term = Real(1) / 2, sum = term;
        for (int n = 3; n < 12; ++n) {
            term *= z / Real(n);
            sum += term;
        }
        return sum;
    }
    return (expm1(z) - z) / (z * z);
}

// Integral of e^{lam (tau - s)} e^{r s} over s in [0, tau], written so that
// neither factor overflows on its own when lam and r have large opposite signs.
template <class Real>
Real exp_conv(const Real& lam, const Real& r, const Real& tau) {
    using std::exp;
    using std::expm1;
    if (tau == Real(0)) return Real(0);
    Real z = (r - lam) * tau;
    if (z > Real(0)) {
        // e^{r tau} (1 - e^{-z}) / (r - lam)
        return exp(r * tau) * tau * phi1(Real(-z));
    }
    return exp(lam * tau) * tau * phi1(z);
}

// Integral of e^{sigma u} over u in [u0, u1].
template <class Real>
Real exp_segment(const Real& sigma, const Real& u0, const Real& u1) {
    using std::exp;
    Real len = u1 - u0;
    if (sigma > Real(0)) return exp(sigma * u1) * len * phi1(Real(-sigma * len));
    return exp(sigma * u0) * len * phi1(Real(sigma * len));
}

// Gauss-Legendre nodes and weights on [lo, hi] via the Golub-Welsch eigenproblem.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n, double lo, double hi) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) {
        double b = i / std::sqrt(4.0 * i * i - 1.0);
        J(i, i - 1) = b;
        J(i - 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    std::vector<double> x(n), w(n);
    double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    for (int i = 0; i < n; ++i) {
        double v = es.eigenvectors()(0, i);
        x[i] = mid + half * es.eigenvalues()(i);
        w[i] = 2.0 * v * v * half;
    }
    return {x, w};
}

template <class T>
double to_double(const T& v) {
    return static_cast<double>(v);
}

}  // namespace ksc
