#include "cta/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cta {

ClassBank::ClassBank(std::vector<GaussianStats> train_stats, double alpha)
    : train_(std::move(train_stats)) {
    ema_.reserve(train_.size());
    counts_.assign(train_.size(), 0);
    for (const GaussianStats& s : train_) ema_.emplace_back(s.mean, alpha);
}

void ClassBank::observe(std::size_t k, const std::vector<Vec>& features) {
    if (k >= train_.size()) throw std::invalid_argument("ClassBank::observe: class out of range");
    if (features.empty()) return;
    counts_[k] += features.size();
    ema_[k].update(mean_of(features));
}

void ClassBank::set_ema_mean(std::size_t k, Vec mean) {
    ema_[k] = EmaMean(std::move(mean), ema_[k].alpha());
}

namespace {

void check_simplex(const RoiPrediction& roi, std::size_t classes) {
    if (roi.probs.size() != classes + 1)
        throw std::invalid_argument("assignment: prediction has " +
                                    std::to_string(roi.probs.size()) + " entries, expected " +
                                    std::to_string(classes + 1));
    double sum = 0.0;
    for (double p : roi.probs) {
        if (!(p >= 0.0)) throw std::invalid_argument("assignment: negative class probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("assignment: probabilities sum to " + std::to_string(sum));
}

}  // namespace

std::vector<std::vector<std::size_t>> assign_indices(const std::vector<RoiPrediction>& rois,
                                                     std::size_t classes, double bg_threshold) {
    if (!(bg_threshold > 0.0 && bg_threshold < 1.0))
        throw std::invalid_argument("assign: bg_threshold must lie in (0, 1)");
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < rois.size(); ++i) {
        const RoiPrediction& roi = rois[i];
        check_simplex(roi, classes);
        if (!(roi.p_bg() < bg_threshold)) continue;
        std::size_t best = 0;
        for (std::size_t k = 1; k < classes; ++k)
            if (roi.probs[k] > roi.probs[best]) best = k;  // ties keep the lowest index
        by_class[best].push_back(i);
    }
    return by_class;
}

std::vector<std::vector<Vec>> assign_and_filter(const std::vector<RoiPrediction>& rois,
                                                std::size_t classes, double bg_threshold) {
    const auto idx = assign_indices(rois, classes, bg_threshold);
    std::vector<std::vector<Vec>> by_class(classes);
    for (std::size_t k = 0; k < classes; ++k) {
        by_class[k].reserve(idx[k].size());
        for (std::size_t i : idx[k]) by_class[k].push_back(rois[i].feature);
    }
    return by_class;
}

void update_class_bank(ClassBank& bank, const std::vector<std::vector<Vec>>& assigned) {
    if (assigned.size() != bank.size())
        throw std::invalid_argument("update_class_bank: class count mismatch");
    for (std::size_t k = 0; k < assigned.size(); ++k) bank.observe(k, assigned[k]);
}

std::map<std::size_t, double> class_weights(const ClassBank& bank) {
    std::uint64_t max_count = 0;
    for (std::size_t k = 0; k < bank.size(); ++k) max_count = std::max(max_count, bank.count(k));
    std::map<std::size_t, double> w;
    if (max_count == 0) return w;
    for (std::size_t k = 0; k < bank.size(); ++k)
        if (bank.count(k) > 0)
            w[k] = std::log(static_cast<double>(max_count) / static_cast<double>(bank.count(k))) +
                   0.01;
    return w;
}

double image_loss(const GaussianStats& train, const EmaMean& test_mean) {
    if (test_mean.mean().size() != train.dim())
        throw std::invalid_argument("image_loss: dimension mismatch");
    GaussianStats test{test_mean.mean(), train.var, train.count};
    return kl_diag_gaussian(train, test);
}

double object_loss(const ClassBank& bank) {
    const auto weights = class_weights(bank);
    double total = 0.0;
    for (const auto& [k, w] : weights) total += w * image_loss(bank.train_stats(k), bank.ema(k));
    return total;
}

AlignmentOutput total_loss_and_grads(const GaussianStats& image_train, const ClassBank& bank,
                                     const EmaMean& image_ema, const AlignmentBatch& batch,
                                     double alpha) {
    if (batch.image_features.empty())
        throw std::invalid_argument("total_loss_and_grads: empty batch");
    if (batch.object_features.size() != bank.size())
        throw std::invalid_argument("total_loss_and_grads: class count mismatch");

    AlignmentOutput out;
    out.l_img = image_loss(image_train, image_ema);
    out.l_obj = object_loss(bank);
    out.l_total = out.l_img + out.l_obj;

    // Image path: dL/df = (alpha / B) * var^-1 (mu_te - mu_tr), identical for
    // every scene feature in the batch. The EMA history term is constant.
    const std::size_t d = image_train.dim();
    const double b_img = static_cast<double>(batch.image_features.size());
    Vec g_img(d);
    for (std::size_t i = 0; i < d; ++i)
        g_img[i] =
            (alpha / b_img) * (image_ema.mean()[i] - image_train.mean[i]) / image_train.var[i];
    out.image_grads.assign(batch.image_features.size(), g_img);

    // Object path per class with assignments this step:
    // dL/df = w_k * (alpha / B_k) * var_k^-1 (mu_te^k - mu_tr^k).
    const auto weights = class_weights(bank);
    out.object_grads.resize(bank.size());
    for (std::size_t k = 0; k < bank.size(); ++k) {
        const std::size_t b_k = batch.object_features[k].size();
        if (b_k == 0) continue;
        const auto it = weights.find(k);
        if (it == weights.end())
            throw std::invalid_argument(
                "total_loss_and_grads: batch has features for a class with zero count; "
                "bank must already reflect this batch");
        const GaussianStats& tr = bank.train_stats(k);
        Vec g(d);
        for (std::size_t i = 0; i < d; ++i)
            g[i] = it->second * (alpha / static_cast<double>(b_k)) *
                   (bank.ema(k).mean()[i] - tr.mean[i]) / tr.var[i];
        out.object_grads[k].assign(b_k, g);
    }
    return out;
}

}  // namespace cta
