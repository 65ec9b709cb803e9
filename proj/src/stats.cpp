#include "cta/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cta {

EmaMean::EmaMean(Vec initial, double alpha) : mean_(std::move(initial)), alpha_(alpha) {
    if (!(alpha > 0.0) || alpha > 1.0)
        throw std::invalid_argument("EmaMean: alpha must be in (0, 1]");
    if (!all_finite(mean_)) throw std::invalid_argument("EmaMean: initial mean not finite");
}

void EmaMean::update(const Vec& batch_mean) {
    if (batch_mean.size() != mean_.size())
        throw std::invalid_argument("EmaMean::update: dimension mismatch");
    if (!all_finite(batch_mean))
        throw std::invalid_argument("EmaMean::update: batch mean not finite");
    for (std::size_t i = 0; i < mean_.size(); ++i)
        mean_[i] = (1.0 - alpha_) * mean_[i] + alpha_ * batch_mean[i];
}

GaussianStats compute_stats(const std::vector<Vec>& features) {
    if (features.size() < 2)
        throw std::invalid_argument("compute_stats: need at least 2 samples, got " +
                                    std::to_string(features.size()));
    const std::size_t d = features[0].size();
    for (const Vec& f : features)
        if (f.size() != d)
            throw std::invalid_argument("compute_stats: inconsistent feature dimensions");

    GaussianStats s;
    s.count = features.size();
    s.mean = mean_of(features);
    s.var.assign(d, 0.0);
    for (const Vec& f : features)
        for (std::size_t i = 0; i < d; ++i) {
            const double c = f[i] - s.mean[i];
            s.var[i] += c * c;
        }
    const double inv = 1.0 / static_cast<double>(features.size());
    for (double& v : s.var) v = std::max(v * inv, kVarFloor);
    return s;
}

double kl_diag_gaussian(const GaussianStats& p, const GaussianStats& q) {
    const std::size_t d = p.dim();
    if (q.dim() != d)
        throw std::invalid_argument("kl_diag_gaussian: dimension mismatch");
    // Grouped so the equal-covariance case reduces exactly to the
    // 0.5 * sum dmu^2 / var form: log(1) and v/v - 1 contribute exact zeros.
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double vp = p.var[i];
        const double vq = q.var[i];
        const double dm = p.mean[i] - q.mean[i];
        acc += std::log(vq / vp) + (vp / vq - 1.0) + (dm * dm) / vq;
    }
    // Nonnegative analytically; clamp shields against rounding on
    // near-identical inputs.
    return std::max(0.0, 0.5 * acc);
}

double in_domain_gap(const std::vector<Vec>& features, Rng& rng, std::size_t n_pairs) {
    if (features.size() < 4)
        throw std::invalid_argument("in_domain_gap: need at least 4 features");
    if (n_pairs == 0) throw std::invalid_argument("in_domain_gap: n_pairs must be positive");

    std::vector<std::size_t> idx(features.size());
    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t half = features.size() / 2;

    double total = 0.0;
    for (std::size_t pair = 0; pair < n_pairs; ++pair) {
        rng.shuffle(idx);
        std::vector<Vec> a, b;
        a.reserve(half);
        b.reserve(features.size() - half);
        for (std::size_t i = 0; i < features.size(); ++i)
            (i < half ? a : b).push_back(features[idx[i]]);
        total += kl_diag_gaussian(compute_stats(a), compute_stats(b));
    }
    return total / static_cast<double>(n_pairs);
}

}  // namespace cta
