#include "cta/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cta {

namespace {

double logsumexp(const Vec& v) {
    double hi = v[0];
    for (double x : v) hi = std::max(hi, x);
    double s = 0.0;
    for (double x : v) s += std::exp(x - hi);
    return hi + std::log(s);
}

Vec foreground_logits(const Vec& feature, const SourceModel& source) {
    Vec logits(source.classes());
    for (std::size_t k = 0; k < source.classes(); ++k)
        logits[k] = dot(feature, source.prototypes[k]) / source.head_temperature;
    return logits;
}

// Clean-domain recall margin, in units of the per-object logit noise. The
// bias search lands on the 1% quantile of clean foreground evidence; backing
// off by a few noise units keeps the clean ceiling robust while leaving
// moderate shifts able to push objects into the background.
constexpr double kBgMargin = 3.0;

// Largest bias keeping >= target_frac of the sampled clean objects in the
// foreground (p_bg < 0.5 iff bias < logsumexp of foreground logits).
double calibrate_bg_bias(const SourceModel& model, Rng& rng, double target_frac) {
    const std::size_t n = 4000;
    std::vector<double> thresholds(n);
    const double sigma = std::sqrt(model.class_var);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t k = static_cast<std::size_t>(rng.bounded(model.classes()));
        Vec f = model.prototypes[k];
        for (double& x : f) x += sigma * rng.normal();
        thresholds[i] = logsumexp(foreground_logits(f, model));
    }
    double lo = *std::min_element(thresholds.begin(), thresholds.end()) - 1.0;
    double hi = *std::max_element(thresholds.begin(), thresholds.end()) + 1.0;
    for (int iter = 0; iter < 60; ++iter) {
        const double mid = 0.5 * (lo + hi);
        std::size_t kept = 0;
        for (double t : thresholds)
            if (t > mid) ++kept;
        if (static_cast<double>(kept) / static_cast<double>(n) >= target_frac)
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

}  // namespace

SourceModel generate_source_model(Rng& rng, std::size_t classes, std::size_t dim,
                                  double separation, double class_var, double feature_scale,
                                  double imbalance) {
    if (classes < 2 || dim < 2)
        throw std::invalid_argument("generate_source_model: need classes >= 2 and dim >= 2");
    if (!(class_var > 0.0) || !(feature_scale > 0.0) || !(imbalance >= 1.0))
        throw std::invalid_argument("generate_source_model: bad cluster parameters");

    const double min_dist = separation * std::sqrt(class_var);
    SourceModel model;
    model.class_var = class_var;
    model.prototypes.reserve(classes);

    // Prototypes live in the positive orthant, like post-activation feature
    // maps, and share a common norm: every class sits the same margin above
    // the calibrated background logit, so domain shifts act uniformly on
    // recall.
    const double proto_norm = feature_scale * std::sqrt(static_cast<double>(dim));
    const std::size_t max_tries = 10000;
    for (std::size_t k = 0; k < classes; ++k) {
        bool placed = false;
        for (std::size_t attempt = 0; attempt < max_tries && !placed; ++attempt) {
            Vec cand = rng.normal_vec(dim);
            for (double& x : cand) x = std::abs(x);
            const double rescale = proto_norm / norm(cand);
            for (double& x : cand) x *= rescale;
            placed = true;
            for (const Vec& p : model.prototypes)
                if (norm(sub(cand, p)) < min_dist) {
                    placed = false;
                    break;
                }
            if (placed) model.prototypes.push_back(std::move(cand));
        }
        if (!placed)
            throw std::runtime_error(
                "generate_source_model: could not place prototype " + std::to_string(k) +
                " with separation " + std::to_string(separation) + " in dimension " +
                std::to_string(dim));
    }

    double norm_sq = 0.0;
    for (const Vec& p : model.prototypes) norm_sq += dot(p, p);
    model.head_temperature =
        std::sqrt(norm_sq / static_cast<double>(classes)) * std::sqrt(class_var);

    // geometric frequency profile: most common class is `imbalance` times the rarest
    model.class_probs.resize(classes);
    double total = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
        const double e = classes > 1 ? static_cast<double>(k) / static_cast<double>(classes - 1)
                                     : 0.0;
        model.class_probs[k] = std::pow(imbalance, -e);
        total += model.class_probs[k];
    }
    for (double& p : model.class_probs) p /= total;

    model.bg_bias = calibrate_bg_bias(model, rng, 0.99) - kBgMargin;
    return model;
}

std::size_t DomainSchedule::segment_index(std::size_t t) const {
    std::size_t start = 0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (t < start + segments[i].duration) return i;
        start += segments[i].duration;
    }
    return segments.empty() ? 0 : segments.size() - 1;
}

DomainTransform transform_at(const DomainSchedule& schedule, std::size_t t) {
    if (schedule.segments.empty())
        throw std::invalid_argument("transform_at: schedule has no segments");
    const std::size_t i = schedule.segment_index(t);
    const ScheduleSegment& seg = schedule.segments[i];
    if (schedule.mode == ScheduleMode::kDiscrete || i + 1 >= schedule.segments.size())
        return seg.transform;

    std::size_t start = 0;
    for (std::size_t j = 0; j < i; ++j) start += schedule.segments[j].duration;
    const double u =
        static_cast<double>(t - start) / static_cast<double>(seg.duration);

    const DomainTransform& a = seg.transform;
    const DomainTransform& b = schedule.segments[i + 1].transform;
    DomainTransform out;
    out.shift.resize(a.shift.size());
    for (std::size_t j = 0; j < a.shift.size(); ++j)
        out.shift[j] = (1.0 - u) * a.shift[j] + u * b.shift[j];
    out.scale = (1.0 - u) * a.scale + u * b.scale;
    out.noise_std = (1.0 - u) * a.noise_std + u * b.noise_std;
    out.rotation = a.rotation;  // rotations are held, not interpolated
    return out;
}

Mat random_rotation(Rng& rng, std::size_t dim, double angle, std::size_t planes) {
    Mat r = Mat::identity(dim);
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    for (std::size_t p = 0; p < planes; ++p) {
        std::size_t i = static_cast<std::size_t>(rng.bounded(dim));
        std::size_t j = static_cast<std::size_t>(rng.bounded(dim - 1));
        if (j >= i) ++j;
        // right-multiply by the Givens rotation on plane (i, j)
        for (std::size_t row = 0; row < dim; ++row) {
            const double ri = r.at(row, i);
            const double rj = r.at(row, j);
            r.at(row, i) = c * ri + s * rj;
            r.at(row, j) = -s * ri + c * rj;
        }
    }
    return r;
}

Vec apply_transform(const DomainTransform& t, const Vec& clean, Rng& rng) {
    Vec f = t.rotation ? matvec(*t.rotation, clean) : clean;
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = t.scale * f[i] + t.shift[i];
    if (t.noise_std > 0.0)
        for (double& x : f) x += t.noise_std * rng.normal();
    return f;
}

Scene sample_scene(const SourceModel& source, const DomainTransform& transform, Rng& rng,
                   std::size_t n_obj_lo, std::size_t n_obj_hi) {
    if (n_obj_lo < 1 || n_obj_hi > 32 || n_obj_lo > n_obj_hi)
        throw std::invalid_argument("sample_scene: object count range must lie within [1, 32]");
    if (transform.shift.size() != source.dim())
        throw std::invalid_argument("sample_scene: transform dimension mismatch");

    const std::size_t n =
        n_obj_lo + static_cast<std::size_t>(rng.bounded(n_obj_hi - n_obj_lo + 1));
    const double sigma = std::sqrt(source.class_var);

    Scene scene;
    scene.objects.reserve(n);
    Vec clean_sum(source.dim(), 0.0);
    for (std::size_t o = 0; o < n; ++o) {
        const double u = rng.uniform();
        std::size_t k = 0;
        double acc = 0.0;
        for (std::size_t c = 0; c < source.classes(); ++c) {
            acc += source.class_probs[c];
            if (u < acc) {
                k = c;
                break;
            }
            k = c;
        }
        Vec clean = source.prototypes[k];
        for (double& x : clean) x += sigma * rng.normal();
        for (std::size_t i = 0; i < clean.size(); ++i) clean_sum[i] += clean[i];
        scene.objects.push_back(SceneObject{apply_transform(transform, clean, rng), k});
    }
    Vec clean_mean = scaled(clean_sum, 1.0 / static_cast<double>(n));
    scene.image_feature = apply_transform(transform, clean_mean, rng);
    return scene;
}

RoiPrediction head_predict(const Vec& feature, const SourceModel& source) {
    if (feature.size() != source.dim())
        throw std::invalid_argument("head_predict: feature dimension mismatch");
    Vec logits = foreground_logits(feature, source);
    logits.push_back(source.bg_bias);
    const double lse = logsumexp(logits);
    Vec probs(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) probs[i] = std::exp(logits[i] - lse);
    return RoiPrediction{feature, std::move(probs)};
}

double evaluate_accuracy(const std::vector<RoiPrediction>& predictions,
                         const std::vector<std::size_t>& true_classes) {
    if (predictions.size() != true_classes.size())
        throw std::invalid_argument("evaluate_accuracy: size mismatch");
    if (predictions.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const RoiPrediction& p = predictions[i];
        if (!(p.p_bg() < 0.5)) continue;
        std::size_t best = 0;
        for (std::size_t k = 1; k < p.foreground_classes(); ++k)
            if (p.probs[k] > p.probs[best]) best = k;
        if (best == true_classes[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

}  // namespace cta
