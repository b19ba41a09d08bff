#pragma once

// Dense LU with partial pivoting for scalar types Eigen does not handle
// natively (the 50-digit type). Sizes here stay below a few hundred.

#include "errors.hpp"

#include <cstddef>
#include <utility>
#include <vector>

namespace ksc {

template <class Real>
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c, const Real& v = Real(0)) : r_(r), c_(c), d_(r * c, v) {}
    std::size_t rows() const { return r_; }
    std::size_t cols() const { return c_; }
    Real& operator()(std::size_t i, std::size_t j) { return d_[i * c_ + j]; }
    const Real& operator()(std::size_t i, std::size_t j) const { return d_[i * c_ + j]; }
    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = Real(1);
        return m;
    }
    DenseMatrix operator*(const DenseMatrix& o) const {
        DenseMatrix out(r_, o.c_);
        for (std::size_t i = 0; i < r_; ++i)
            for (std::size_t k = 0; k < c_; ++k) {
                const Real& a = (*this)(i, k);
                if (a == Real(0)) continue;
                for (std::size_t j = 0; j < o.c_; ++j) out(i, j) += a * o(k, j);
            }
        return out;
    }
    DenseMatrix transpose() const {
        DenseMatrix t(c_, r_);
        for (std::size_t i = 0; i < r_; ++i)
            for (std::size_t j = 0; j < c_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

private:
    std::size_t r_ = 0, c_ = 0;
    std::vector<Real> d_;
};

template <class Real>
class LU {
public:
    explicit LU(DenseMatrix<Real> a) : lu_(std::move(a)), piv_(lu_.rows()) {
        using std::abs;
        const std::size_t n = lu_.rows();
        require(n == lu_.cols(), ErrorCode::InvalidArgument, "LU needs a square matrix");
        for (std::size_t i = 0; i < n; ++i) piv_[i] = i;
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t p = k;
            Real best = abs(lu_(k, k));
            for (std::size_t i = k + 1; i < n; ++i)
                if (abs(lu_(i, k)) > best) {
                    best = abs(lu_(i, k));
                    p = i;
                }
            if (best == Real(0)) {
                singular_ = true;
                continue;
            }
            if (p != k) {
                for (std::size_t j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(p, j));
                std::swap(piv_[k], piv_[p]);
            }
            for (std::size_t i = k + 1; i < n; ++i) {
                lu_(i, k) /= lu_(k, k);
                const Real f = lu_(i, k);
                if (f == Real(0)) continue;
                for (std::size_t j = k + 1; j < n; ++j) lu_(i, j) -= f * lu_(k, j);
            }
        }
    }

    bool singular() const { return singular_; }

    std::vector<Real> solve(const std::vector<Real>& b) const {
        const std::size_t n = lu_.rows();
        std::vector<Real> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = b[piv_[i]];
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < i; ++j) x[i] -= lu_(i, j) * x[j];
        for (std::size_t ii = n; ii-- > 0;) {
            for (std::size_t j = ii + 1; j < n; ++j) x[ii] -= lu_(ii, j) * x[j];
            x[ii] /= lu_(ii, ii);
        }
        return x;
    }

    DenseMatrix<Real> inverse() const {
        const std::size_t n = lu_.rows();
        DenseMatrix<Real> inv(n, n);
        std::vector<Real> e(n);
        for (std::size_t c = 0; c < n; ++c) {
            for (std::size_t i = 0; i < n; ++i) e[i] = Real(i == c ? 1 : 0);
            auto col = solve(e);
            for (std::size_t i = 0; i < n; ++i) inv(i, c) = col[i];
        }
        return inv;
    }

private:
    DenseMatrix<Real> lu_;
    std::vector<std::size_t> piv_;
    bool singular_ = false;
};

template <class Real>
Real norm1(const DenseMatrix<Real>& m) {
    using std::abs;
    Real best(0);
    for (std::size_t j = 0; j < m.cols(); ++j) {
        Real s(0);
        for (std::size_t i = 0; i < m.rows(); ++i) s += abs(m(i, j));
        if (s > best) best = s;
    }
    return best;
}

}  // namespace ksc
