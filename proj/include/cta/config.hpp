#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cta/simulator.hpp"

namespace cta {

enum class Method { kDirect, kFull, kOurs, kOursSkip, kEvenlySkip };

std::string method_name(Method m, std::size_t evenly_n);

// One schedule segment as written in a config or preset: the shift direction
// and rotation are realized from the run seed, so a spec is portable while a
// realized schedule is reproducible.
struct SegmentSpec {
    std::size_t duration = 0;
    double shift_norm = 0.0;
    // number of class prototype directions the shift is mixed from;
    // 0 draws an unstructured random direction
    std::size_t shift_classes = 0;
    double scale = 1.0;
    double noise_std = 0.0;
    double rot_angle = 0.0;
    std::size_t rot_planes = 0;
};

struct ExperimentConfig {
    std::uint64_t seed = 7;
    Method method = Method::kOurs;
    std::size_t evenly_n = 1;  // update period for evenly-skip-N
    std::size_t batch_size = 4;
    std::size_t ref_samples = 2000;
    std::string out_dir = "out";
    std::string refs_path;  // optional: load precomputed references

    // model dimensions
    std::size_t d = 64;
    std::size_t classes = 8;
    std::size_t r = 32;

    // rates
    double lr = 0.001;
    double alpha = 0.01;

    // thresholds
    double tau1 = 1.1;
    double tau2 = 1.05;
    double bg_threshold = 0.5;

    // simulator
    double feature_scale = 24.0;
    double separation = 6.0;
    double class_var = 1.0;
    double imbalance = 4.0;
    std::size_t n_obj_min = 28;
    std::size_t n_obj_max = 32;

    // scenario: a preset name, or "custom" with an inline schedule
    std::string scenario = "shift-discrete-like";
    ScheduleMode schedule_mode = ScheduleMode::kDiscrete;
    std::vector<SegmentSpec> segments;

    void validate() const;
};

// Nested key-value text: `key value` pairs and `key { ... }` blocks,
// '#' comments. Unknown keys are rejected.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// "direct", "full", "ours", "ours-skip", "evenly-skip-<N>"
void parse_method(const std::string& name, Method& method, std::size_t& evenly_n);

}  // namespace cta
