#pragma once

// Moment-method steering of one y-slice to zero through a single scalar input.
// The caller picks the frame by the rates it passes in.

#include "biorthogonal.hpp"
#include "control.hpp"
#include "errors.hpp"
#include "numeric.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <vector>

namespace ksc {

struct SliceSteer {
    std::vector<ExpTerm> terms;    // anchored at the window start
    std::vector<HP> targets;       // -w_k / b_k
    std::vector<HP> weights;       // d = C^T targets
    double c0 = 0;
    double moment_residual = 0;    // max_k |int e^{lam_k t} h - target_k| / max |target|
    std::shared_ptr<const BiorthogonalFamily> family;
};

// Families keyed by their exponent list and horizon, so repeated windows reuse them.
class FamilyCache {
public:
    std::shared_ptr<const BiorthogonalFamily> get(const std::vector<double>& exps, double T) {
        auto key = std::make_pair(exps, T);
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        // Built outside the lock; a racing duplicate is identical and simply dropped.
        auto fam = std::make_shared<const BiorthogonalFamily>(build_family(exps, T));
        std::lock_guard<std::mutex> lock(mu_);
        return cache_.emplace(key, fam).first->second;
    }
    std::size_t size() const {
        std::lock_guard<std::mutex> lock(mu_);
        return cache_.size();
    }

private:
    mutable std::mutex mu_;
    std::map<std::pair<std::vector<double>, double>, std::shared_ptr<const BiorthogonalFamily>> cache_;
};

// Shift making every family exponent -lam_k + c0 positive (only used when asked).
inline double positivity_shift(const std::vector<double>& lam) {
    double mx = *std::max_element(lam.begin(), lam.end());
    return std::max(0.0, mx) + 1.0;
}

// Steer u_k' = lam_k u_k + b_k q(s), s in [0, Tw], from the uncontrolled end
// state w to zero. Modes with b_k = 0 are rejected: they are uncontrollable.
inline SliceSteer steer_slice(const std::vector<double>& lam, const std::vector<double>& gain, const std::vector<HP>& w,
                              double Tw, bool shift, FamilyCache* cache = nullptr) {
    const std::size_t K = lam.size();
    require(gain.size() == K && w.size() == K, ErrorCode::InvalidArgument, "slice data sizes differ");
    SliceSteer out;
    out.c0 = shift ? positivity_shift(lam) : 0.0;
    std::vector<double> exps(K);
    for (std::size_t k = 0; k < K; ++k) exps[k] = -lam[k] + out.c0;
    out.targets.resize(K);
    bool all_zero = true;
    for (std::size_t k = 0; k < K; ++k) {
        require(gain[k] != 0.0, ErrorCode::InvalidArgument, "mode " + std::to_string(k + 1) + " has zero gain");
        out.targets[k] = -w[k] / HP(gain[k]);
        if (out.targets[k] != 0) all_zero = false;
    }
    if (all_zero) return out;
    std::shared_ptr<const BiorthogonalFamily> fam;
    if (cache) fam = cache->get(exps, Tw);
    else fam = std::make_shared<const BiorthogonalFamily>(build_family(exps, Tw));
    out.family = fam;
    out.weights.assign(K, HP(0));
    for (std::size_t l = 0; l < K; ++l)
        for (std::size_t m = 0; m < K; ++m) out.weights[l] += fam->coeffs(m, l) * out.targets[m];
    // h(t) = sum_l d_l e^{(lam_l - 2 c0) t};  q(s) = h(Tw - s)
    const HP TwH(Tw);
    for (std::size_t l = 0; l < K; ++l) {
        HP rho = HP(lam[l]) - 2 * HP(out.c0);
        out.terms.push_back({out.weights[l] * exp(rho * TwH), -rho});
    }
    HP worst(0), scale(0);
    for (std::size_t k = 0; k < K; ++k) {
        HP s(0);
        for (std::size_t l = 0; l < K; ++l) {
            HP rho = HP(lam[l]) - 2 * HP(out.c0);
            s += out.weights[l] * exp_segment(HP(HP(lam[k]) + rho), HP(0), TwH);
        }
        worst = std::max<HP>(worst, abs(s - out.targets[k]));
        scale = std::max<HP>(scale, abs(out.targets[k]));
    }
    out.moment_residual = static_cast<double>(worst / scale);
    return out;
}

// Shift rates of slice terms by c (multiplying the signal by e^{c (t - t0)}).
inline std::vector<ExpTerm> shifted_terms(std::vector<ExpTerm> terms, double c) {
    for (auto& t : terms) t.rate += HP(c);
    return terms;
}

}  // namespace ksc
