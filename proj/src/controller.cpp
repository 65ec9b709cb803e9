#include "cta/controller.hpp"

#include <cmath>
#include <stdexcept>

namespace cta {

SkipController::SkipController(double d_kl_in, double tau1, double tau2)
    : d_kl_in_(d_kl_in), tau1_(tau1), tau2_(tau2) {
    if (!(d_kl_in > 0.0) || !std::isfinite(d_kl_in))
        throw std::invalid_argument("SkipController: d_kl_in must be positive and finite");
    if (std::isnan(tau1) || std::isnan(tau2) || tau1 < 0.0 || tau2 < 0.0)
        throw std::invalid_argument("SkipController: thresholds must be nonnegative (inf allowed)");
}

SkipDecision SkipController::observe(double l_img) {
    if (!std::isfinite(l_img) || l_img < 0.0)
        throw std::invalid_argument("SkipController::observe: loss must be finite and nonnegative");

    SkipDecision d;
    d.ratio1 = l_img / d_kl_in_;
    d.fired1 = d.ratio1 > tau1_;

    if (!initialized_) {
        l_ema_ = l_img;
        initialized_ = true;
        d.ratio2 = 1.0;
        d.fired2 = false;
    } else {
        // compare against the pre-update EMA, then fold the new loss in
        if (l_ema_ > 0.0)
            d.ratio2 = l_img / l_ema_;
        else
            d.ratio2 = l_img > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
        d.fired2 = d.ratio2 > tau2_;
        l_ema_ = 0.99 * l_ema_ + 0.01 * l_img;
    }

    d.update = d.fired1 || d.fired2;
    return d;
}

}  // namespace cta
