#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "cta/linalg.hpp"
#include "cta/stats.hpp"

namespace cta {

// Classifier output for one pooled region feature: probabilities over the
// C foreground classes followed by the background class, [p_0 .. p_{C-1}, p_bg].
struct RoiPrediction {
    Vec feature;
    Vec probs;

    std::size_t foreground_classes() const { return probs.size() - 1; }
    double p_bg() const { return probs.back(); }
};

// Per-class reference statistics, test-mean tracker and cumulative
// observation counts. Counts start at zero and only grow.
class ClassBank {
public:
    ClassBank(std::vector<GaussianStats> train_stats, double alpha);

    std::size_t size() const { return train_.size(); }
    const GaussianStats& train_stats(std::size_t k) const { return train_[k]; }
    const EmaMean& ema(std::size_t k) const { return ema_[k]; }
    std::uint64_t count(std::size_t k) const { return counts_[k]; }

    void observe(std::size_t k, const std::vector<Vec>& features);

    // test hook: place a class tracker at a chosen mean
    void set_ema_mean(std::size_t k, Vec mean);

private:
    std::vector<GaussianStats> train_;
    std::vector<EmaMean> ema_;
    std::vector<std::uint64_t> counts_;
};

// Background filter and class assignment: keep a region iff p_bg < threshold,
// send it to the foreground argmax (ties to the lowest class index).
std::vector<std::vector<std::size_t>> assign_indices(const std::vector<RoiPrediction>& rois,
                                                     std::size_t classes, double bg_threshold);
std::vector<std::vector<Vec>> assign_and_filter(const std::vector<RoiPrediction>& rois,
                                                std::size_t classes, double bg_threshold);

// Bump counts and per-class trackers with one step's assigned features.
// Classes with no assignment are untouched.
void update_class_bank(ClassBank& bank, const std::vector<std::vector<Vec>>& assigned);

// w_k = log(max_i N_i / N_k) + 0.01 over classes with positive count;
// zero-count classes get no weight and contribute no loss.
std::map<std::size_t, double> class_weights(const ClassBank& bank);

// Shared-covariance KL between the reference distribution and the tracked
// test mean; equals 0.5 * sum dmu_i^2 / var_i.
double image_loss(const GaussianStats& train, const EmaMean& test_mean);

// Weighted sum of per-class shared-covariance KLs over observed classes.
double object_loss(const ClassBank& bank);

// One adaptation step's contributing features: the scene-level features plus
// the kept region features grouped by assigned class.
struct AlignmentBatch {
    std::vector<Vec> image_features;
    std::vector<std::vector<Vec>> object_features;  // indexed by class
};

struct AlignmentOutput {
    double l_img = 0.0;
    double l_obj = 0.0;
    double l_total = 0.0;
    // dL/df per contributing feature, parallel to the batch layout
    std::vector<Vec> image_grads;
    std::vector<std::vector<Vec>> object_grads;
};

// Loss and per-feature gradients. Precondition: image_ema and bank already
// reflect this batch (trackers updated first, then differentiated, with the
// EMA history term treated as constant).
AlignmentOutput total_loss_and_grads(const GaussianStats& image_train, const ClassBank& bank,
                                     const EmaMean& image_ema, const AlignmentBatch& batch,
                                     double alpha);

}  // namespace cta
