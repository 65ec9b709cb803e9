#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "cta/linalg.hpp"
#include "cta/rng.hpp"

namespace cta {

// One affine block standing in for the pre-trained backbone. Frozen during
// adaptation; only the explicit full-finetune path may touch it.
struct FrozenBackbone {
    Mat w;  // d x d
    Vec b;  // d

    static FrozenBackbone identity(std::size_t d) {
        return FrozenBackbone{Mat::identity(d), Vec(d, 0.0)};
    }
    std::size_t dim() const { return b.size(); }
};

// Residual bottleneck attached in parallel to the block: the branch reads the
// block input x and adds w_up^T relu(w_down^T x) to the block output.
// w_up starts at exactly zero, so a fresh adaptor leaves the block output
// untouched; w_down gets fan-in-scaled uniform entries so the up-projection
// gradient is informative from the first step.
struct LowRankAdaptor {
    Mat w_down;  // d x (d/r)
    Mat w_up;    // (d/r) x d
    std::size_t r = 1;

    std::size_t dim() const { return w_down.rows; }
    std::size_t bottleneck() const { return w_down.cols; }
};

LowRankAdaptor make_adaptor(std::size_t d, std::size_t r, Rng& rng);

inline std::size_t adaptor_parameter_count(std::size_t d, std::size_t r) {
    return 2 * d * (d / r);
}
inline std::size_t backbone_parameter_count(std::size_t d) { return d * d + d; }

struct AdaptorGradients {
    Mat g_down;
    Mat g_up;
    std::optional<Mat> g_backbone;  // populated only by the full-finetune path
};

// Per-input values saved by forward() for the backward pass.
struct CacheEntry {
    Vec x;  // block input
    Vec z;  // w_down^T x
    Vec a;  // relu(z)
};

struct ForwardCache {
    std::vector<CacheEntry> entries;
};

// f_out = (W x + b) + w_up^T relu(w_down^T x). Appends one cache entry when
// cache is non-null.
Vec forward(const FrozenBackbone& backbone, const LowRankAdaptor& adaptor, const Vec& x,
            ForwardCache* cache = nullptr);

// Gradients of a scalar loss w.r.t. the adaptor weights, summed over the
// batch, given dL/df_out per cached input.
AdaptorGradients backward(const LowRankAdaptor& adaptor, const ForwardCache& cache,
                          const std::vector<Vec>& upstream);

// As backward, plus g_backbone = sum upstream_i x_i^T for the full-finetune
// baseline.
AdaptorGradients full_finetune_backward(const LowRankAdaptor& adaptor, const ForwardCache& cache,
                                        const std::vector<Vec>& upstream);

// Plain SGD, no momentum, no weight decay. Non-finite gradients abort the run.
void sgd_step(LowRankAdaptor& adaptor, const AdaptorGradients& grads, double lr);
void sgd_step(FrozenBackbone& backbone, const AdaptorGradients& grads, double lr);

}  // namespace cta
