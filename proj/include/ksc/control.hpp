#pragma once

// Control signals. A signal is either analytic (a sum of exponentials per
// input row and time segment) or sampled on a grid with piecewise-constant or
// piecewise-linear interpolation. Input rows are y-profiles: row l acts
// through the y-mode l, or through a mass matrix when the support omega is a
// strict subset of the cross-section.

#include "errors.hpp"
#include "numeric.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace ksc {

enum class ControlKind { Boundary1D, Pointwise1D, BoundaryND, PointwiseND };
enum class Quadrature { PiecewiseConstant, PiecewiseLinear };

inline bool is_pointwise(ControlKind k) { return k == ControlKind::Pointwise1D || k == ControlKind::PointwiseND; }

// coef * exp(rate * (t - t0)) on the owning segment [t0, t1]
struct ExpTerm {
    HP coef;
    HP rate;
};

struct ExpSegment {
    double t0 = 0, t1 = 0;
    std::vector<std::vector<ExpTerm>> rows;

    bool empty() const {
        for (const auto& r : rows)
            if (!r.empty()) return false;
        return true;
    }
};

struct ControlSignal {
    ControlKind kind = ControlKind::Boundary1D;
    double x0 = 0;  // pointwise location
    int rows = 1;
    double t_begin = 0, t_end = 0;
    // mix(j, l) = <Psi_j, Psi_l>_{L^2(omega)}; absent means omega is the whole cross-section
    std::optional<Eigen::MatrixXd> mix;

    std::vector<ExpSegment> segments;

    std::vector<double> grid;
    std::vector<std::vector<double>> samples;  // PC: one per interval, PL: one per node
    Quadrature quadrature = Quadrature::PiecewiseConstant;

    bool analytic() const { return grid.empty(); }

    static ControlSignal zero(ControlKind kind, int rows, double t0, double t1) {
        ControlSignal c;
        c.kind = kind;
        c.rows = rows;
        c.t_begin = t0;
        c.t_end = t1;
        return c;
    }

    static ControlSignal sampled_signal(ControlKind kind, std::vector<double> grid,
                                        std::vector<std::vector<double>> samples, Quadrature quad) {
        require(grid.size() >= 2, ErrorCode::InvalidArgument, "sampled control needs at least one interval");
        for (std::size_t i = 1; i < grid.size(); ++i)
            require(grid[i] > grid[i - 1], ErrorCode::InvalidArgument, "control grid must be strictly increasing");
        std::size_t need = quad == Quadrature::PiecewiseConstant ? grid.size() - 1 : grid.size();
        require(samples.size() == need, ErrorCode::InvalidArgument, "sample count does not match grid");
        ControlSignal c;
        c.kind = kind;
        c.rows = static_cast<int>(samples.front().size());
        c.t_begin = grid.front();
        c.t_end = grid.back();
        c.grid = std::move(grid);
        c.samples = std::move(samples);
        c.quadrature = quad;
        for (const auto& s : c.samples) {
            require(static_cast<int>(s.size()) == c.rows, ErrorCode::InvalidArgument, "ragged control samples");
            for (double v : s) require(std::isfinite(v), ErrorCode::InvalidArgument, "non-finite control sample");
        }
        return c;
    }

    // Weight matrix for the L^2(omega) norm of sum_l g_l Psi_l.
    Eigen::MatrixXd norm_weight() const {
        if (mix) return mix->topLeftCorner(rows, rows);
        return Eigen::MatrixXd::Identity(rows, rows);
    }

    double value(int row, double t) const {
        if (!analytic()) {
            if (t < grid.front() || t > grid.back()) return 0.0;
            auto it = std::upper_bound(grid.begin(), grid.end(), t);
            std::size_t i = it == grid.end() ? grid.size() - 2 : static_cast<std::size_t>(it - grid.begin()) - 1;
            if (quadrature == Quadrature::PiecewiseConstant) return samples[i][row];
            double w = (t - grid[i]) / (grid[i + 1] - grid[i]);
            return (1 - w) * samples[i][row] + w * samples[i + 1][row];
        }
        HP s(0);
        for (std::size_t si = 0; si < segments.size(); ++si) {
            const auto& seg = segments[si];
            bool last = si + 1 == segments.size();
            if (t < seg.t0 || t > seg.t1 || (t == seg.t1 && !last)) continue;
            if (row >= static_cast<int>(seg.rows.size())) continue;
            HP tau(t - seg.t0);
            for (const auto& term : seg.rows[row]) s += term.coef * exp(term.rate * tau);
        }
        return static_cast<double>(s);
    }

    HP l2_norm_sq_hp() const {
        Eigen::MatrixXd W = norm_weight();
        HP total(0);
        if (analytic()) {
            for (const auto& seg : segments) {
                HP tau(seg.t1 - seg.t0);
                for (std::size_t l = 0; l < seg.rows.size(); ++l)
                    for (std::size_t m = 0; m < seg.rows.size(); ++m) {
                        double w = W(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m));
                        if (w == 0.0) continue;
                        HP acc(0);
                        for (const auto& x : seg.rows[l])
                            for (const auto& y : seg.rows[m])
                                acc += x.coef * y.coef * exp_segment(HP(x.rate + y.rate), HP(0), tau);
                        total += HP(w) * acc;
                    }
            }
            return total;
        }
        auto quadform = [&](const std::vector<double>& x, const std::vector<double>& y) {
            double s = 0;
            for (int l = 0; l < rows; ++l)
                for (int m = 0; m < rows; ++m) s += W(l, m) * x[l] * y[m];
            return s;
        };
        for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
            double h = grid[i + 1] - grid[i];
            if (quadrature == Quadrature::PiecewiseConstant) {
                total += h * quadform(samples[i], samples[i]);
            } else {
                const auto &a = samples[i], &b = samples[i + 1];
                total += h / 3.0 * (quadform(a, a) + quadform(a, b) + quadform(b, b));
            }
        }
        return total;
    }

    double l2_norm() const {
        HP s = l2_norm_sq_hp();
        return s > 0 ? static_cast<double>(sqrt(s)) : 0.0;
    }

    // Sample the signal at the nodes of `nodes` (for export).
    std::vector<std::vector<double>> sample_nodes(const std::vector<double>& nodes) const {
        std::vector<std::vector<double>> out;
        for (double t : nodes) {
            std::vector<double> row(rows);
            for (int l = 0; l < rows; ++l) row[l] = value(l, t);
            out.push_back(std::move(row));
        }
        return out;
    }

    // Append the segments of another analytic signal with the same layout.
    void append(const ControlSignal& other) {
        require(analytic() && other.analytic(), ErrorCode::InvalidArgument, "append needs analytic signals");
        rows = std::max(rows, other.rows);
        for (const auto& s : other.segments) segments.push_back(s);
        t_begin = std::min(t_begin, other.t_begin);
        t_end = std::max(t_end, other.t_end);
    }

    void scale(double s) {
        if (analytic()) {
            for (auto& seg : segments)
                for (auto& r : seg.rows)
                    for (auto& term : r) term.coef *= s;
        } else {
            for (auto& v : samples)
                for (auto& x : v) x *= s;
        }
    }
};

}  // namespace ksc
