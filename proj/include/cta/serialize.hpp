#pragma once

#include <string>
#include <vector>

#include "cta/adaptor.hpp"
#include "cta/stats.hpp"

namespace cta {

// Precomputed source-domain references consumed by every run: scene-level
// stats, per-class stats, and the in-domain gap used by the skip criteria.
struct ReferenceStats {
    GaussianStats image;
    std::vector<GaussianStats> per_class;
    double d_kl_in = 0.0;

    std::size_t dim() const { return image.dim(); }
    std::size_t classes() const { return per_class.size(); }
};

// Text container, versioned header `ctastats v1 d=<d> k=<classes>` followed
// by one whitespace-separated line per statistic vector. Doubles are written
// with 17 significant digits so a rewrite is byte-identical.
void write_reference_stats(const std::string& path, const ReferenceStats& refs);
ReferenceStats read_reference_stats(const std::string& path);

std::string reference_stats_to_string(const ReferenceStats& refs);
ReferenceStats reference_stats_from_string(const std::string& text, const std::string& context);

// Same container style for model weights (`ctaweights v1 d=<d> r=<r>`).
void write_weights(const std::string& path, const FrozenBackbone& backbone,
                   const LowRankAdaptor& adaptor);
void read_weights(const std::string& path, FrozenBackbone& backbone, LowRankAdaptor& adaptor);

// shortest fixed-precision form used across all emitted files
std::string format_double(double v);

}  // namespace cta
