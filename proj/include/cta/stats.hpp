#pragma once

#include <cstddef>
#include <vector>

#include "cta/linalg.hpp"
#include "cta/rng.hpp"

namespace cta {

// Lower bound applied to every per-dimension variance. Prevents division by
// zero in the KL terms when a dimension collapses; far below any simulated
// feature variance.
inline constexpr double kVarFloor = 1e-6;

// Diagonal-covariance Gaussian summary of a feature set.
struct GaussianStats {
    Vec mean;
    Vec var;  // per-dimension variance, floored at kVarFloor
    std::size_t count = 0;

    std::size_t dim() const { return mean.size(); }
};

// Exponentially-moving-average estimate of a domain mean:
//   mean <- (1 - alpha) * mean + alpha * batch_mean
// alpha is fixed for the tracker's lifetime.
class EmaMean {
public:
    EmaMean(Vec initial, double alpha);

    void update(const Vec& batch_mean);

    const Vec& mean() const { return mean_; }
    double alpha() const { return alpha_; }

private:
    Vec mean_;
    double alpha_;
};

// Arithmetic mean and population (1/N) variance, variance floored.
// Requires at least two samples of consistent dimension.
GaussianStats compute_stats(const std::vector<Vec>& features);

// D_KL( N(mu_p, diag var_p) || N(mu_q, diag var_q) ).
double kl_diag_gaussian(const GaussianStats& p, const GaussianStats& q);

// In-domain reference gap: mean over n_pairs random disjoint half/half splits
// of the KL between the two halves' Gaussian summaries.
double in_domain_gap(const std::vector<Vec>& features, Rng& rng, std::size_t n_pairs);

inline Vec mean_of(const std::vector<Vec>& features) {
    Vec m(features.empty() ? 0 : features[0].size(), 0.0);
    for (const Vec& f : features)
        for (std::size_t i = 0; i < m.size(); ++i) m[i] += f[i];
    const double inv = features.empty() ? 0.0 : 1.0 / static_cast<double>(features.size());
    for (double& x : m) x *= inv;
    return m;
}

}  // namespace cta
