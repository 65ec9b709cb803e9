#include "cta/adaptor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cta {

LowRankAdaptor make_adaptor(std::size_t d, std::size_t r, Rng& rng) {
    if (d == 0 || r == 0) throw std::invalid_argument("make_adaptor: d and r must be positive");
    if (d % r != 0)
        throw std::invalid_argument("make_adaptor: r=" + std::to_string(r) +
                                    " must divide d=" + std::to_string(d));
    const std::size_t k = d / r;
    LowRankAdaptor a;
    a.r = r;
    a.w_down = Mat(d, k);
    a.w_up = Mat::zeros(k, d);
    // Nonnegative fan-in init keeps every bottleneck unit inside its ReLU
    // active region over positive-orthant features, so gradients reach all
    // units even at bottleneck width 1. A centered init strands whole feature
    // clusters on the dead side at small widths.
    const double scale = 0.12 / std::sqrt(static_cast<double>(d));
    for (double& w : a.w_down.data) w = rng.uniform(0.0, scale);
    return a;
}

Vec forward(const FrozenBackbone& backbone, const LowRankAdaptor& adaptor, const Vec& x,
            ForwardCache* cache) {
    if (x.size() != backbone.dim() || x.size() != adaptor.dim())
        throw std::invalid_argument("forward: input dimension mismatch");

    Vec out = matvec(backbone.w, x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += backbone.b[i];

    Vec z = matvec_t(adaptor.w_down, x);
    Vec a = relu(z);
    Vec branch = matvec_t(adaptor.w_up, a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += branch[i];

    if (cache) cache->entries.push_back(CacheEntry{x, std::move(z), std::move(a)});
    return out;
}

namespace {

AdaptorGradients backward_impl(const LowRankAdaptor& adaptor, const ForwardCache& cache,
                               const std::vector<Vec>& upstream, bool with_backbone) {
    if (upstream.size() != cache.entries.size())
        throw std::invalid_argument("backward: one upstream gradient per cached input required");

    const std::size_t d = adaptor.dim();
    const std::size_t k = adaptor.bottleneck();
    AdaptorGradients g;
    g.g_down = Mat::zeros(d, k);
    g.g_up = Mat::zeros(k, d);
    if (with_backbone) g.g_backbone = Mat::zeros(d, d);

    for (std::size_t n = 0; n < cache.entries.size(); ++n) {
        const CacheEntry& e = cache.entries[n];
        const Vec& u = upstream[n];
        if (u.size() != d) throw std::invalid_argument("backward: upstream dimension mismatch");

        // dL/da = w_up u, masked through the ReLU to give dL/dz
        Vec dz = matvec(adaptor.w_up, u);
        for (std::size_t m = 0; m < k; ++m)
            if (!(e.z[m] > 0.0)) dz[m] = 0.0;

        add_outer(g.g_up, e.a, u);    // dL/dw_up[m][j] = a_m u_j
        add_outer(g.g_down, e.x, dz); // dL/dw_down[i][m] = x_i dz_m
        if (with_backbone) add_outer(*g.g_backbone, u, e.x);
    }
    return g;
}

}  // namespace

AdaptorGradients backward(const LowRankAdaptor& adaptor, const ForwardCache& cache,
                          const std::vector<Vec>& upstream) {
    return backward_impl(adaptor, cache, upstream, false);
}

AdaptorGradients full_finetune_backward(const LowRankAdaptor& adaptor, const ForwardCache& cache,
                                        const std::vector<Vec>& upstream) {
    return backward_impl(adaptor, cache, upstream, true);
}

void sgd_step(LowRankAdaptor& adaptor, const AdaptorGradients& grads, double lr) {
    if (grads.g_down.rows != adaptor.w_down.rows || grads.g_down.cols != adaptor.w_down.cols ||
        grads.g_up.rows != adaptor.w_up.rows || grads.g_up.cols != adaptor.w_up.cols)
        throw std::invalid_argument("sgd_step: gradient shape mismatch");
    if (!all_finite(grads.g_down) || !all_finite(grads.g_up))
        throw std::runtime_error("sgd_step: non-finite adaptor gradient (diverged run)");
    for (std::size_t i = 0; i < adaptor.w_down.data.size(); ++i)
        adaptor.w_down.data[i] -= lr * grads.g_down.data[i];
    for (std::size_t i = 0; i < adaptor.w_up.data.size(); ++i)
        adaptor.w_up.data[i] -= lr * grads.g_up.data[i];
}

void sgd_step(FrozenBackbone& backbone, const AdaptorGradients& grads, double lr) {
    if (!grads.g_backbone)
        throw std::invalid_argument("sgd_step: backbone gradient not populated");
    const Mat& gb = *grads.g_backbone;
    if (gb.rows != backbone.w.rows || gb.cols != backbone.w.cols)
        throw std::invalid_argument("sgd_step: backbone gradient shape mismatch");
    if (!all_finite(gb))
        throw std::runtime_error("sgd_step: non-finite backbone gradient (diverged run)");
    for (std::size_t i = 0; i < backbone.w.data.size(); ++i)
        backbone.w.data[i] -= lr * gb.data[i];
}

}  // namespace cta
