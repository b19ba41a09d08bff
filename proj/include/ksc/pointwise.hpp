#pragma once

#include "control.hpp"
#include "control_1d.hpp"
#include "errors.hpp"
#include "exact.hpp"
#include "modal.hpp"
#include "spectral.hpp"
#include "steer.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace ksc {

// Location x0/a of a point actuator, kept exact where possible so that
// frac(k x0/a) is available to full precision for large k.
struct PointSpec {
    enum class Kind { Rational, Real, Algebraic, Liouville };
    Kind kind = Kind::Algebraic;
    Rational exact_value;               // Rational, Real (decimal), Liouville truncation
    std::vector<long long> poly;        // Algebraic: coefficients c_0 + c_1 x + ...
    int root_index = 0;                 // Algebraic: index among roots in (0,1), ascending
    int liouville_terms = 6;            // Liouville: sum_{n=1}^{N} 10^{-n!}
    int k_max = 10000;
    HP value_hp;                        // x0/a at 50 digits

    static PointSpec rational(const Rational& r) {
        PointSpec p;
        p.kind = Kind::Rational;
        p.exact_value = r;
        p.value_hp = static_cast<HP>(r);
        return p;
    }
    static PointSpec real(const std::string& decimal) {
        auto r = detail::parse_rational(decimal);
        require(r.has_value(), ErrorCode::InvalidArgument, "bad decimal point location: " + decimal);
        PointSpec p;
        p.kind = Kind::Real;
        p.exact_value = *r;
        p.value_hp = static_cast<HP>(*r);
        return p;
    }
    static PointSpec liouville(int terms) {
        require(terms >= 1 && terms <= 7, ErrorCode::InvalidArgument, "Liouville truncation must be 1..7 terms");
        PointSpec p;
        p.kind = Kind::Liouville;
        p.liouville_terms = terms;
        Rational x = 0;
        long long fact = 1;
        for (int n = 1; n <= terms; ++n) {
            fact *= n;
            BigInt den = 1;
            for (long long i = 0; i < fact; ++i) den *= 10;
            x += Rational(BigInt(1), den);
        }
        p.exact_value = x;
        p.value_hp = static_cast<HP>(x);
        return p;
    }
    // Root of an integer polynomial inside (0,1), isolated by sign changes on a
    // fine grid and polished by bisection at 50 digits.
    static PointSpec algebraic(std::vector<long long> coeffs, int root_index) {
        PointSpec p;
        p.kind = Kind::Algebraic;
        p.poly = coeffs;
        p.root_index = root_index;
        auto f = [&](const HP& x) {
            HP s(0);
            for (std::size_t i = coeffs.size(); i-- > 0;) s = s * x + HP(coeffs[i]);
            return s;
        };
        const int grid = 4096;
        std::vector<std::pair<HP, HP>> brackets;
        HP prev_x(0), prev_f = f(HP(0));
        for (int i = 1; i <= grid; ++i) {
            HP x = HP(i) / grid;
            HP fx = f(x);
            if (i < grid && fx == 0) {
                brackets.emplace_back(x, x);
            } else if ((prev_f < 0 && fx > 0) || (prev_f > 0 && fx < 0)) {
                brackets.emplace_back(prev_x, x);
            }
            prev_x = x;
            prev_f = fx;
        }
        require(root_index >= 0 && root_index < static_cast<int>(brackets.size()), ErrorCode::InvalidArgument,
                "polynomial has no root with that index in (0,1)");
        auto [lo, hi] = brackets[root_index];
        HP flo = f(lo);
        for (int it = 0; it < 200 && lo != hi; ++it) {
            HP mid = (lo + hi) / 2;
            HP fm = f(mid);
            if ((fm < 0) == (flo < 0)) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        p.value_hp = (lo + hi) / 2;
        return p;
    }

    bool exact() const { return kind != Kind::Algebraic; }

    // frac(k * x0/a) at 50 digits (exact rational reduction when available).
    HP frac_multiple(long long k) const {
        if (exact()) {
            Rational v = exact_value * Rational(k);
            BigInt fl = numerator(v) / denominator(v);
            Rational fr = v - Rational(fl);
            return static_cast<HP>(fr);
        }
        HP v = value_hp * HP(k);
        return v - floor(v);
    }
    // |sin(k pi x0/a)| from the fractional part, so huge arguments keep full precision.
    HP abs_sin(long long k) const {
        HP f = frac_multiple(k);
        return abs(sin(pi_v<HP>() * f));
    }
};

struct MinimalTimeEstimate {
    std::vector<double> s;          // s_k, k = 1..k_max
    double T0_hat = 0;              // max_{k >= k_max/2} s_k
    int argmax_tail = 0;
    int argmax_depth = 0;           // k maximizing -log|sin(k pi x0/a)|
    bool still_growing = false;     // resonance depth still increasing at k_max
};

inline MinimalTimeEstimate minimal_time_estimate(const PointSpec& point, double a) {
    if (point.kind == PointSpec::Kind::Rational)
        fail(ErrorCode::RationalPoint, "rational x0/a: some sin(k pi x0/a) vanishes");
    MinimalTimeEstimate est;
    const int K = point.k_max;
    est.s.resize(K);
    double best_depth = -1;
    for (int k = 1; k <= K; ++k) {
        HP sn = point.abs_sin(k);
        if (sn == 0) fail(ErrorCode::RationalPoint, "sin(k pi x0/a) vanishes at k=" + std::to_string(k));
        double depth = static_cast<double>(-log(sn));
        double kap = std::pow(k * kPi / a, 4);
        est.s[k - 1] = depth / kap;
        if (depth > best_depth) {
            best_depth = depth;
            est.argmax_depth = k;
        }
    }
    est.T0_hat = -1;
    for (int k = std::max(1, K / 2); k <= K; ++k)
        if (est.s[k - 1] > est.T0_hat) {
            est.T0_hat = est.s[k - 1];
            est.argmax_tail = k;
        }
    est.still_growing = est.argmax_depth > K / 2;
    return est;
}

struct PointControlReport {
    double control_norm = 0;
    double moment_residual = 0;
    double gram_condition = 0;
    double T0_hat = 0;
    double margin = 0.1;
};

struct PointControlResult {
    ControlSignal control;
    PointControlReport report;
};

// Refuses when T does not clear the estimated minimal time by the margin.
inline void require_above_minimal_time(double T, double T0_hat, double margin) {
    if (!(T > T0_hat * (1.0 + margin)))
        fail(ErrorCode::BelowMinimalTime, "T=" + std::to_string(T) + " does not exceed the estimated minimal time " +
                                              std::to_string(T0_hat) + " by the required margin");
}

inline PointControlResult synthesize_point_control(const Eigen::VectorXd& u0, double T, const PointSpec& point,
                                                   const SpectrumSpec& spec, int j, int K_trunc,
                                                   const MinimalTimeEstimate* est = nullptr, double margin = 0.1,
                                                   FamilyCache* cache = nullptr) {
    require_clear(spec);
    MinimalTimeEstimate local;
    if (!est) {
        local = minimal_time_estimate(point, spec.a());
        est = &local;
    }
    require_above_minimal_time(T, est->T0_hat, margin);
    require(K_trunc >= 1 && K_trunc <= kKBioMax, ErrorCode::InvalidArgument, "K_trunc out of range");
    const double x0 = static_cast<double>(point.value_hp) * spec.a();
    auto sys = ModalSystem::slice(spec, j, K_trunc);
    std::vector<double> lam(K_trunc), gain(K_trunc);
    std::vector<HP> w(K_trunc);
    for (int k = 1; k <= K_trunc; ++k) {
        lam[k - 1] = sys.rates(k - 1, 0);
        gain[k - 1] = sys.point_gain(k, x0);
        double v = k <= u0.size() ? u0(k - 1) : 0.0;
        w[k - 1] = exp(HP(lam[k - 1]) * HP(T)) * HP(v);
    }
    auto st = steer_slice(lam, gain, w, T, j < n0_index(spec), cache);
    PointControlResult res;
    res.control = ControlSignal::zero(ControlKind::Pointwise1D, 1, 0.0, T);
    res.control.x0 = x0;
    res.control.segments.push_back(ExpSegment{0.0, T, {st.terms}});
    res.report.control_norm = res.control.l2_norm();
    res.report.moment_residual = st.moment_residual;
    res.report.gram_condition = st.family ? st.family->gram_condition : 0.0;
    res.report.T0_hat = est->T0_hat;
    res.report.margin = margin;
    return res;
}

struct WitnessRow {
    int k = 0;
    double s_k = 0;
    double abs_sin = 0;
    double log10_ratio = 0;  // log10( e^{2 lam_k T} / sin^2 )
};

struct WitnessReport {
    double T = 0;
    std::vector<WitnessRow> witnesses;  // every k with s_k > T
    std::vector<WitnessRow> spikes;     // record-depth subsequence among witnesses
    double max_log10_ratio = -1e300;
    int argmax_k = 0;
    bool spike_ratios_increasing = true;
};

inline WitnessReport negative_certificate(const PointSpec& point, const SpectrumSpec& spec, int j, double T,
                                          const MinimalTimeEstimate& est) {
    WitnessReport rep;
    rep.T = T;
    double depth_record = -1;
    for (int k = 1; k <= static_cast<int>(est.s.size()); ++k) {
        if (!(est.s[k - 1] > T)) continue;
        HP sn = point.abs_sin(k);
        WitnessRow row;
        row.k = k;
        row.s_k = est.s[k - 1];
        row.abs_sin = static_cast<double>(sn);
        HP lr = (2 * HP(spec.lambda_x(k, j)) * HP(T) - 2 * log(sn)) / log(HP(10));
        row.log10_ratio = static_cast<double>(lr);
        rep.witnesses.push_back(row);
        if (row.log10_ratio > rep.max_log10_ratio) {
            rep.max_log10_ratio = row.log10_ratio;
            rep.argmax_k = k;
        }
        double depth = static_cast<double>(-log(sn));
        if (depth > depth_record) {
            depth_record = depth;
            if (!rep.spikes.empty() && row.log10_ratio <= rep.spikes.back().log10_ratio)
                rep.spike_ratios_increasing = false;
            rep.spikes.push_back(row);
        }
    }
    if (rep.witnesses.empty())
        fail(ErrorCode::NoWitnessFound, "no k <= k_max with s_k > T; inconclusive at this depth");
    return rep;
}

}  // namespace ksc
