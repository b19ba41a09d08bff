#pragma once

#include "errors.hpp"
#include "exact.hpp"
#include "numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace ksc {

struct CrossSection {
    enum class Kind { Box, External };
    Kind kind = Kind::Box;
    std::vector<Length> dims;         // Box
    std::vector<double> mu_external;  // External, ascending

    static CrossSection box(std::vector<Length> d) { return {Kind::Box, std::move(d), {}}; }
    static CrossSection external(std::vector<double> mu) { return {Kind::External, {}, std::move(mu)}; }
    int dimension() const { return kind == Kind::Box ? static_cast<int>(dims.size()) : 1; }
};

struct YMode {
    double mu = 0.0;
    std::optional<QPi2> mu_exact;
    std::vector<int> m;  // box multi-index, empty for external lists
};

struct ModeRate {
    int k = 0, j = 0;
    double lambda_x = 0.0;
    double lambda_y_shift = 0.0;
    double total = 0.0;
};

// First `count` box eigenvalues sum_i (m_i pi / b_i)^2, sorted with multiplicity.
inline std::vector<YMode> y_eigenvalues_box(const std::vector<Length>& dims, int count) {
    require(!dims.empty() && count >= 1, ErrorCode::InvalidArgument, "box needs dims and count >= 1");
    const std::size_t d = dims.size();
    std::vector<double> w(d);
    std::vector<QPi2> wq(d);
    for (std::size_t i = 0; i < d; ++i) {
        require(dims[i].value() > 0, ErrorCode::InvalidArgument, "box dimension must be positive");
        wq[i] = dims[i].pi_over_sq();
        w[i] = wq[i].value();
    }
    // Grow the value bound until the enumeration holds `count` modes below it.
    double bound = 0;
    for (double wi : w) bound += wi;
    bound *= 2;
    std::vector<YMode> modes;
    for (;;) {
        modes.clear();
        std::vector<int> m(d, 1);
        for (;;) {
            double v = 0;
            for (std::size_t i = 0; i < d; ++i) v += w[i] * m[i] * m[i];
            if (v <= bound) {
                YMode ym;
                ym.mu = v;
                ym.m = m;
                modes.push_back(ym);
            }
            // odometer with per-axis caps from the bound
            std::size_t ax = 0;
            while (ax < d) {
                ++m[ax];
                double base = 0;
                for (std::size_t i = 0; i < d; ++i)
                    if (i != ax) base += w[i];
                if (base + w[ax] * m[ax] * m[ax] <= bound) break;
                m[ax] = 1;
                ++ax;
            }
            if (ax == d) break;
        }
        if (static_cast<int>(modes.size()) >= count) break;
        bound *= 2;
    }
    for (auto& ym : modes) {
        QPi2 q;
        for (std::size_t i = 0; i < d; ++i) q = q + wq[i].scaled(Rational(ym.m[i]) * ym.m[i]);
        ym.mu_exact = q;
        ym.mu = q.value();
    }
    std::stable_sort(modes.begin(), modes.end(), [](const YMode& x, const YMode& y) {
        if (x.mu != y.mu) return x.mu < y.mu;
        return x.m < y.m;
    });
    modes.resize(count);
    return modes;
}

struct CriticalVerdict {
    enum class Kind { Clear, Critical, Near };
    Kind kind = Kind::Clear;
    int j = 0, k = 0, l = 0;
    double distance = std::numeric_limits<double>::infinity();

    bool clear() const { return kind == Kind::Clear; }
    std::string label() const {
        switch (kind) {
            case Kind::Clear: return "Clear";
            case Kind::Critical: return "Critical";
            case Kind::Near: return "Near";
        }
        return "?";
    }
};

class SpectrumSpec {
public:
    SpectrumSpec(Length a, ExactReal nu, CrossSection cs, int K_x = 32, int J_y = 64, double crit_tol = 1e-9)
        : a_(a), nu_(std::move(nu)), cs_(std::move(cs)), K_x_(K_x), J_y_(J_y), crit_tol_(crit_tol) {
        require(a_.value() > 0, ErrorCode::InvalidArgument, "a must be positive");
        require(K_x_ >= 1 && J_y_ >= 1, ErrorCode::InvalidArgument, "truncations must be >= 1");
        require(crit_tol_ > 0, ErrorCode::InvalidArgument, "crit_tol must be positive");
        if (cs_.kind == CrossSection::Kind::Box) {
            ymodes_ = y_eigenvalues_box(cs_.dims, J_y_);
        } else {
            const auto& mu = cs_.mu_external;
            require(!mu.empty(), ErrorCode::InvalidArgument, "external eigenvalue list is empty");
            for (std::size_t i = 0; i < mu.size(); ++i) {
                require(mu[i] > 0, ErrorCode::InvalidArgument, "external eigenvalues must be positive");
                require(i == 0 || mu[i] >= mu[i - 1], ErrorCode::InvalidArgument,
                        "external eigenvalues must be nondecreasing");
                ymodes_.push_back(YMode{mu[i], std::nullopt, {}});
            }
        }
        kappa1_exact_ = a_.pi_over_sq();
        kappa1_ = kappa1_exact_.value();
    }

    const Length& a_length() const { return a_; }
    double a() const { return a_.value(); }
    const ExactReal& nu_exact() const { return nu_; }
    double nu() const { return nu_.value; }
    const CrossSection& cross_section() const { return cs_; }
    int K_x() const { return K_x_; }
    int J_y() const { return J_y_; }
    double crit_tol() const { return crit_tol_; }
    int N() const { return 1 + cs_.dimension(); }
    int available_mu() const { return static_cast<int>(ymodes_.size()); }
    const std::vector<YMode>& ymodes() const { return ymodes_; }

    double mu(int j) const {
        check_j(j);
        return ymodes_[j - 1].mu;
    }
    // kappa_k = k^2 pi^2 / a^2
    double kappa(int k) const { return kappa1_ * k * k; }

    double lambda_x(int k, int j) const {
        require(k >= 1, ErrorCode::IndexOutOfRange, "x-mode index must be >= 1");
        double kp = kappa(k);
        return -kp * kp + (nu() - 2 * mu(j)) * kp;
    }
    static double lambda_x_formula(int k, double a, double nu, double mu) {
        double kp = (k * kPi / a) * (k * kPi / a);
        return -kp * kp + (nu - 2 * mu) * kp;
    }
    // zeroth-order term -(mu_j^2 - nu mu_j)
    double lambda_y_shift(int j) const {
        double m = mu(j);
        return -(m * m - nu() * m);
    }
    double rate(int k, int j) const { return lambda_x(k, j) + lambda_y_shift(j); }
    ModeRate mode_rate(int k, int j) const {
        ModeRate r{k, j, lambda_x(k, j), lambda_y_shift(j), 0.0};
        r.total = r.lambda_x + r.lambda_y_shift;
        return r;
    }

    // Eigenfunctions, orthonormal in L^2.
    double psi_x(int k, double x) const { return std::sqrt(2.0 / a()) * std::sin(k * kPi * x / a()); }
    double dpsi_x(int k, double x) const {
        return std::sqrt(2.0 / a()) * (k * kPi / a()) * std::cos(k * kPi * x / a());
    }
    double psi_y(int j, const std::vector<double>& y) const {
        check_j(j);
        require(cs_.kind == CrossSection::Kind::Box, ErrorCode::InvalidArgument,
                "eigenfunctions are only available for box cross-sections");
        double v = 1.0;
        for (std::size_t i = 0; i < cs_.dims.size(); ++i) {
            double b = cs_.dims[i].value();
            v *= std::sqrt(2.0 / b) * std::sin(ymodes_[j - 1].m[i] * kPi * y[i] / b);
        }
        return v;
    }

    // Exact (c0 + c1 pi^2) forms, when every ingredient is exact.
    QPi2 kappa_exact(int k) const { return kappa1_exact_.scaled(Rational(k) * k); }
    std::optional<QPi2> mu_exact(int j) const {
        check_j(j);
        return ymodes_[j - 1].mu_exact;
    }

    void check_j(int j) const {
        if (j < 1 || j > available_mu())
            fail(ErrorCode::IndexOutOfRange, "y-mode index " + std::to_string(j) + " outside eigenvalue list of size " +
                                                 std::to_string(available_mu()));
    }

private:
    Length a_;
    ExactReal nu_;
    CrossSection cs_;
    int K_x_, J_y_;
    double crit_tol_;
    std::vector<YMode> ymodes_;
    QPi2 kappa1_exact_;
    double kappa1_ = 0;
};

inline double x_eigenvalue(int k, const SpectrumSpec& spec, int j) { return spec.lambda_x(k, j); }

// Exhaustive scan of nu = 2 mu_j + pi^2 (k^2 + l^2)/a^2, k < l, over j <= J_y.
inline CriticalVerdict critical_set_check(const SpectrumSpec& spec) {
    const double nu = spec.nu();
    const double tol = spec.crit_tol() * std::max(1.0, std::abs(nu));
    CriticalVerdict best;
    const int J = std::min(spec.J_y(), spec.available_mu());
    for (int j = 1; j <= J; ++j) {
        double base = 2 * spec.mu(j);
        if (base + spec.kappa(1) + spec.kappa(2) > nu + tol) break;  // mu_j is nondecreasing
        for (int k = 1;; ++k) {
            if (base + spec.kappa(k) + spec.kappa(k + 1) > nu + tol) break;
            for (int l = k + 1;; ++l) {
                double cand = base + spec.kappa(k) + spec.kappa(l);
                if (cand > nu + tol) break;
                double dist = std::abs(nu - cand);
                if (dist > tol) continue;
                bool exact_zero = false;
                auto mu_ex = spec.mu_exact(j);
                if (mu_ex && spec.nu_exact().exact) {
                    QPi2 diff = QPi2(*spec.nu_exact().exact, 0) - mu_ex->scaled(2) - spec.kappa_exact(k) -
                                spec.kappa_exact(l);
                    exact_zero = diff.is_zero();
                }
                CriticalVerdict v;
                v.kind = exact_zero ? CriticalVerdict::Kind::Critical : CriticalVerdict::Kind::Near;
                v.j = j;
                v.k = k;
                v.l = l;
                v.distance = exact_zero ? 0.0 : dist;
                if (exact_zero) return v;
                if (best.kind == CriticalVerdict::Kind::Clear || dist < best.distance) best = v;
            }
        }
    }
    return best;
}

inline void require_clear(const SpectrumSpec& spec) {
    auto v = critical_set_check(spec);
    if (!v.clear())
        fail(ErrorCode::CriticalParameter, v.label() + " parameter: nu collides at (j,k,l)=(" + std::to_string(v.j) +
                                               "," + std::to_string(v.k) + "," + std::to_string(v.l) + ")");
}

inline int n0_index(const SpectrumSpec& spec) {
    for (int j = 1; j <= spec.available_mu(); ++j)
        if (2 * spec.mu(j) - spec.nu() > 0) return j;
    fail(ErrorCode::ThresholdBeyondTruncation, "no listed mu satisfies 2 mu - nu > 0");
}

inline int K0_index(const SpectrumSpec& spec) {
    for (int j = 1; j <= spec.available_mu(); ++j)
        if (spec.mu(j) > spec.nu()) return j;
    fail(ErrorCode::ThresholdBeyondTruncation, "no listed mu exceeds nu");
}

// Smallest k from which lambda_x(., j) is strictly decreasing.
inline int monotone_tail_start(const SpectrumSpec& spec, int j) {
    double thr = spec.nu() - 2 * spec.mu(j);
    int k = 1;
    while (spec.kappa(k) + spec.kappa(k + 1) <= thr) ++k;
    return k;
}

inline int counting_function(const std::vector<double>& rates, double r) {
    return static_cast<int>(std::count_if(rates.begin(), rates.end(), [r](double v) { return v <= r; }));
}

struct CountingReport {
    double smallest_constant = 0.0;  // max over the grid of N(r) / r^{1/4}
    double paper_constant = 0.0;     // a / pi
    int violations = 0;
    int points = 0;
    std::vector<std::tuple<int, double, int>> samples;  // (j, r, N)
};

// Evaluates N(r) < (a/pi) r^{1/4} on a log grid for every j >= n0 up to J_y.
inline CountingReport bound_check(const SpectrumSpec& spec, int grid_points = 64) {
    CountingReport rep;
    rep.paper_constant = spec.a() / kPi;
    int n0 = n0_index(spec);
    int J = std::min(spec.J_y(), spec.available_mu());
    for (int j = n0; j <= J; ++j) {
        std::vector<double> rates;
        for (int k = 1; k <= spec.K_x(); ++k) rates.push_back(-spec.lambda_x(k, j));
        double lo = rates.front(), hi = rates.back();  // increasing since 2 mu_j > nu
        // Only r up to the largest computed rate gives a complete count.
        for (int g = 0; g < grid_points; ++g) {
            double r = lo * std::pow(hi / lo, g / double(grid_points - 1));
            int n = counting_function(rates, r);
            double c = n / std::pow(r, 0.25);
            rep.smallest_constant = std::max(rep.smallest_constant, c);
            if (!(n < rep.paper_constant * std::pow(r, 0.25))) ++rep.violations;
            ++rep.points;
            rep.samples.emplace_back(j, r, n);
        }
    }
    return rep;
}

struct GapReport {
    double rho_hat = 0.0;         // min pairwise |L_k - L_m|
    double linear_gap = 0.0;      // min |L_k - L_m| / |k - m|
    double adjacent_linear = 0.0; // min |L_{k+1} - L_k|
};

inline GapReport gap_check(const std::vector<double>& rates) {
    require(rates.size() >= 2, ErrorCode::InvalidArgument, "gap needs at least two rates");
    GapReport g;
    g.rho_hat = std::numeric_limits<double>::infinity();
    g.linear_gap = std::numeric_limits<double>::infinity();
    g.adjacent_linear = std::numeric_limits<double>::infinity();
    double scale = 0;
    for (double r : rates) scale = std::max(scale, std::abs(r));
    for (std::size_t k = 0; k < rates.size(); ++k) {
        for (std::size_t m = k + 1; m < rates.size(); ++m) {
            double d = std::abs(rates[k] - rates[m]);
            if (d <= 1e-12 * scale)
                fail(ErrorCode::DuplicateRate, "rates " + std::to_string(k + 1) + " and " + std::to_string(m + 1) +
                                                   " coincide");
            g.rho_hat = std::min(g.rho_hat, d);
            g.linear_gap = std::min(g.linear_gap, d / double(m - k));
            if (m == k + 1) g.adjacent_linear = std::min(g.adjacent_linear, d);
        }
    }
    return g;
}

// Rates -lambda_x(k, j), k = 1..K: the exponent list of the j-th slice.
inline std::vector<double> slice_rates(const SpectrumSpec& spec, int j, int K) {
    std::vector<double> r;
    for (int k = 1; k <= K; ++k) r.push_back(-spec.lambda_x(k, j));
    return r;
}

// Least-squares slope of log mu_j against log j over j in [J/2, J].
inline double weyl_slope(const SpectrumSpec& spec) {
    int J = std::min(spec.J_y(), spec.available_mu());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (int j = std::max(1, J / 2); j <= J; ++j) {
        double x = std::log(double(j)), y = std::log(spec.mu(j));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace ksc
