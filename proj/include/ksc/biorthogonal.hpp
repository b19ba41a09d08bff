#pragma once

#include "errors.hpp"
#include "linalg.hpp"
#include "numeric.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace ksc {

inline constexpr int kKBioMax = 24;

inline void check_exponents(const std::vector<double>& exps, double T) {
    require(T > 0, ErrorCode::InvalidArgument, "horizon must be positive");
    double scale = 0;
    for (double e : exps) {
        require(e > 0 && std::isfinite(e), ErrorCode::InvalidArgument, "exponents must be positive and finite");
        scale = std::max(scale, e);
    }
    for (std::size_t i = 0; i < exps.size(); ++i)
        for (std::size_t k = i + 1; k < exps.size(); ++k)
            if (std::abs(exps[i] - exps[k]) <= 1e-12 * scale)
                fail(ErrorCode::DuplicateRate, "exponents " + std::to_string(i + 1) + " and " + std::to_string(k + 1) +
                                                   " coincide");
}

// G[k,m] = (1 - e^{-(L_k + L_m) T}) / (L_k + L_m)
template <class Real>
DenseMatrix<Real> gram_matrix(const std::vector<double>& exps, double T) {
    using std::expm1;
    check_exponents(exps, T);
    const std::size_t K = exps.size();
    DenseMatrix<Real> G(K, K);
    const Real TT(T);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t m = k; m < K; ++m) {
            Real s = Real(exps[k]) + Real(exps[m]);
            Real v = -expm1(Real(-s * TT)) / s;
            G(k, m) = v;
            G(m, k) = v;
        }
    return G;
}

struct BiorthogonalFamily {
    std::vector<double> exponents;
    double T = 0;
    DenseMatrix<HP> coeffs;  // q_m(t) = sum_k coeffs(m,k) e^{-L_k t}
    DenseMatrix<HP> gram;
    double residual_max = 0;
    double gram_condition = 0;
    std::string precision;  // "double+refinement" or "hp"

    std::size_t size() const { return exponents.size(); }

    HP eval(std::size_t m, const HP& t) const {
        HP s(0);
        for (std::size_t k = 0; k < size(); ++k) s += coeffs(m, k) * exp(-HP(exponents[k]) * t);
        return s;
    }
    // int_0^T e^{-L_k t} q_m(t) dt, analytically
    HP moment(std::size_t k, std::size_t m) const {
        HP s(0);
        for (std::size_t l = 0; l < size(); ++l) s += gram(k, l) * coeffs(m, l);
        return s;
    }
};

namespace detail {

inline double max_residual(const DenseMatrix<HP>& G, const DenseMatrix<HP>& C) {
    // (G C^T)[k,m] - delta
    HP worst(0);
    const std::size_t K = G.rows();
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t m = 0; m < K; ++m) {
            HP s(0);
            for (std::size_t l = 0; l < K; ++l) s += G(k, l) * C(m, l);
            if (k == m) s -= 1;
            worst = std::max<HP>(worst, abs(s));
        }
    return static_cast<double>(worst);
}

}  // namespace detail

inline BiorthogonalFamily build_family(const std::vector<double>& exps, double T, int K_bio_max = kKBioMax) {
    require(!exps.empty(), ErrorCode::InvalidArgument, "empty exponent list");
    require(static_cast<int>(exps.size()) <= K_bio_max, ErrorCode::InvalidArgument,
            "family size exceeds K_bio_max=" + std::to_string(K_bio_max));
    BiorthogonalFamily fam;
    fam.exponents = exps;
    fam.T = T;
    fam.gram = gram_matrix<HP>(exps, T);
    const std::size_t K = exps.size();

    // Rung 1: double LU plus refinement with residuals accumulated at 50 digits.
    Eigen::MatrixXd Gd(K, K);
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = 0; j < K; ++j) Gd(i, j) = static_cast<double>(fam.gram(i, j));
    Eigen::PartialPivLU<Eigen::MatrixXd> lud(Gd);
    Eigen::MatrixXd Cd = lud.inverse();
    double cond_d = Gd.cwiseAbs().colwise().sum().maxCoeff() * Cd.cwiseAbs().colwise().sum().maxCoeff();

    bool done = false;
    if (std::isfinite(cond_d) && cond_d <= 1e12) {
        DenseMatrix<HP> X(K, K);  // X = C^T
        for (std::size_t i = 0; i < K; ++i)
            for (std::size_t j = 0; j < K; ++j) X(i, j) = Cd(i, j);
        for (int it = 0; it < 4; ++it) {
            DenseMatrix<HP> R = DenseMatrix<HP>::identity(K);
            DenseMatrix<HP> GX = fam.gram * X;
            Eigen::MatrixXd Rd(K, K);
            for (std::size_t i = 0; i < K; ++i)
                for (std::size_t j = 0; j < K; ++j) Rd(i, j) = static_cast<double>(R(i, j) - GX(i, j));
            Eigen::MatrixXd dX = lud.solve(Rd);
            for (std::size_t i = 0; i < K; ++i)
                for (std::size_t j = 0; j < K; ++j) X(i, j) += dX(i, j);
        }
        fam.coeffs = X.transpose();
        fam.residual_max = detail::max_residual(fam.gram, fam.coeffs);
        fam.precision = "double+refinement";
        done = fam.residual_max <= 1e-12;
    }
    // Rung 2: full 50-digit elimination.
    if (!done) {
        LU<HP> lu(fam.gram);
        if (lu.singular()) fail(ErrorCode::IllConditioned, "Gram matrix is numerically singular");
        fam.coeffs = lu.inverse().transpose();
        fam.residual_max = detail::max_residual(fam.gram, fam.coeffs);
        fam.precision = "hp";
    }
    fam.gram_condition = static_cast<double>(norm1(fam.gram) * norm1(fam.coeffs));
    if (fam.residual_max > 1e-8)
        fail(ErrorCode::IllConditioned, "biorthogonal residual " + std::to_string(fam.residual_max) +
                                            " at Gram condition " + std::to_string(fam.gram_condition));
    return fam;
}

// ||q_m||_{L^2(0,T)} = sqrt(c_m G c_m^T)
inline HP family_norm_hp(const BiorthogonalFamily& fam, std::size_t m) {
    HP s(0);
    const std::size_t K = fam.size();
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t l = 0; l < K; ++l) s += fam.coeffs(m, k) * fam.gram(k, l) * fam.coeffs(m, l);
    return sqrt(s);
}

inline double family_norm(const BiorthogonalFamily& fam, std::size_t m) {
    return static_cast<double>(family_norm_hp(fam, m));
}

struct CostFit {
    // log ||q_{k,T}|| ~ log K_hat + slope_lambda * L_k^{1/4} + slope_T * T^{-1/3}
    double log_K_hat = 0, slope_lambda = 0, slope_T = 0, rms_residual = 0;
    struct Row {
        double T;
        int k;
        double exponent;
        double norm;
    };
    std::vector<Row> table;
    // Per-horizon K_hat(eps, T) = max_k ||q_k|| e^{-eps L_k}
    double eps = 0.1;
    std::vector<std::pair<double, double>> K_eps;
};

inline CostFit cost_fit(const std::vector<double>& exps, const std::vector<double>& T_grid, double eps = 0.1) {
    CostFit fit;
    fit.eps = eps;
    for (double T : T_grid) {
        require(T >= 0.05 && T <= 2.0, ErrorCode::InvalidArgument, "cost_fit horizons must lie in [0.05, 2]");
        auto fam = build_family(exps, T);
        double kmax = 0;
        for (std::size_t k = 0; k < exps.size(); ++k) {
            double nrm = family_norm(fam, k);
            fit.table.push_back({T, static_cast<int>(k + 1), exps[k], nrm});
            kmax = std::max(kmax, nrm * std::exp(-eps * exps[k]));
        }
        fit.K_eps.emplace_back(T, kmax);
    }
    const auto n = static_cast<Eigen::Index>(fit.table.size());
    Eigen::MatrixXd A(n, 3);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = fit.table[i];
        A(i, 0) = 1.0;
        A(i, 1) = std::pow(r.exponent, 0.25);
        A(i, 2) = std::pow(r.T, -1.0 / 3.0);
        b(i) = std::log(r.norm);
    }
    Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
    fit.log_K_hat = c(0);
    fit.slope_lambda = c(1);
    fit.slope_T = c(2);
    fit.rms_residual = std::sqrt((A * c - b).squaredNorm() / double(n));
    return fit;
}

}  // namespace ksc
