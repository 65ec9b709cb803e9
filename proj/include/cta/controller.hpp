#pragma once

#include <limits>

namespace cta {

// One when-to-update decision. update is the OR of the two criteria.
struct SkipDecision {
    bool update = false;
    double ratio1 = 0.0;  // l_img / d_kl_in
    double ratio2 = 0.0;  // l_img / pre-update loss EMA
    bool fired1 = false;
    bool fired2 = false;
};

// Decides when adaptation is worth a backward pass.
// Criterion 1 fires when the image alignment loss exceeds tau1 times the
// in-domain reference gap; criterion 2 fires when it exceeds tau2 times its
// own 0.99/0.01 exponential moving average (compared against the pre-update
// value, then updated). The first observation seeds the loss EMA and only
// criterion 1 applies.
//
// tau = +inf disables a criterion; tau = 0 makes it fire whenever the loss
// is positive (used by the always-update equivalence checks).
class SkipController {
public:
    SkipController(double d_kl_in, double tau1 = 1.1, double tau2 = 1.05);

    SkipDecision observe(double l_img);

    double d_kl_in() const { return d_kl_in_; }
    double loss_ema() const { return l_ema_; }
    bool initialized() const { return initialized_; }
    double tau1() const { return tau1_; }
    double tau2() const { return tau2_; }

private:
    double d_kl_in_;
    double tau1_;
    double tau2_;
    double l_ema_ = 0.0;
    bool initialized_ = false;
};

inline constexpr double kNeverFire = std::numeric_limits<double>::infinity();
inline constexpr double kAlwaysFire = 0.0;

}  // namespace cta
