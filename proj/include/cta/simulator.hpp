#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "cta/alignment.hpp"
#include "cta/linalg.hpp"
#include "cta/rng.hpp"

namespace cta {

// Stand-in for a trained detector: class prototype means in feature space, a
// softmax head over prototype similarities, and a calibrated background
// logit. Features of class k are N(prototype_k, class_var I).
struct SourceModel {
    std::vector<Vec> prototypes;
    double class_var = 1.0;
    double head_temperature = 1.0;
    double bg_bias = 0.0;
    std::vector<double> class_probs;  // stream class frequencies, sums to 1

    std::size_t classes() const { return prototypes.size(); }
    std::size_t dim() const { return prototypes.empty() ? 0 : prototypes[0].size(); }
};

// f -> scale * (rotation f) + shift + N(0, noise_std^2 I)
struct DomainTransform {
    Vec shift;
    double scale = 1.0;
    std::optional<Mat> rotation;  // identity when absent
    double noise_std = 0.0;

    static DomainTransform identity(std::size_t d) {
        return DomainTransform{Vec(d, 0.0), 1.0, std::nullopt, 0.0};
    }
};

enum class ScheduleMode { kDiscrete, kContinuous };

struct ScheduleSegment {
    DomainTransform transform;
    std::size_t duration = 0;
};

// Discrete mode holds each segment's transform; continuous mode linearly
// interpolates shift, scale and noise_std toward the next segment across the
// current segment's span (rotation is held at the segment value). Past the
// end, the final transform holds.
struct DomainSchedule {
    ScheduleMode mode = ScheduleMode::kDiscrete;
    std::vector<ScheduleSegment> segments;

    std::size_t total_steps() const {
        std::size_t n = 0;
        for (const auto& s : segments) n += s.duration;
        return n;
    }
    std::size_t segment_index(std::size_t t) const;
};

struct SceneObject {
    Vec feature;
    std::size_t true_class = 0;
};

// One synthetic image: a scene-level feature plus its region features.
struct Scene {
    Vec image_feature;
    std::vector<SceneObject> objects;
};

// Prototypes are drawn at feature_scale and re-drawn until all pairwise
// distances reach separation * sqrt(class_var); errors out after bounded
// retries. The head temperature is set to the mean prototype norm (times
// sigma_cls) so clean true-class logits sit ~1 logit-noise-unit apart, and
// bg_bias is calibrated by binary search so >= 99% of clean objects score
// p_bg < 0.5.
SourceModel generate_source_model(Rng& rng, std::size_t classes, std::size_t dim,
                                  double separation = 6.0, double class_var = 1.0,
                                  double feature_scale = 24.0, double imbalance = 1.0);

DomainTransform transform_at(const DomainSchedule& schedule, std::size_t t);

Vec apply_transform(const DomainTransform& t, const Vec& clean, Rng& rng);

// Composition of `planes` Givens rotations by `angle` on random coordinate
// pairs; exactly orthogonal up to rounding.
Mat random_rotation(Rng& rng, std::size_t dim, double angle, std::size_t planes);

// Object count uniform over [lo, hi] (bounds within [1, 32]), classes drawn
// from class_probs, clean features from the class clusters. The image
// feature is the mean of the scene's clean object features, transformed
// identically, plus an independent noise draw.
Scene sample_scene(const SourceModel& source, const DomainTransform& transform, Rng& rng,
                   std::size_t n_obj_lo, std::size_t n_obj_hi);

// Softmax over [prototype similarities / temperature, bg_bias].
RoiPrediction head_predict(const Vec& feature, const SourceModel& source);

// Fraction of objects kept as foreground (p_bg < 0.5) and classified to
// their true class. Desk-scale detection-accuracy proxy.
double evaluate_accuracy(const std::vector<RoiPrediction>& predictions,
                         const std::vector<std::size_t>& true_classes);

}  // namespace cta
