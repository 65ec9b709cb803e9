#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cta/adaptor.hpp"
#include "cta/alignment.hpp"
#include "cta/config.hpp"
#include "cta/controller.hpp"
#include "cta/serialize.hpp"
#include "cta/simulator.hpp"

namespace cta {

// Fixed sub-stream tags. Every random decision in a run is derived from
// (seed, tag, ...) so paired methods at one seed see identical streams.
inline constexpr std::uint64_t kStreamModel = 1;
inline constexpr std::uint64_t kStreamRefs = 2;
inline constexpr std::uint64_t kStreamScenes = 3;
inline constexpr std::uint64_t kStreamGap = 4;
inline constexpr std::uint64_t kStreamAdaptor = 5;
inline constexpr std::uint64_t kStreamSchedule = 6;

inline Rng derived_rng(std::uint64_t seed, std::uint64_t tag) { return Rng(mix64(seed, tag)); }
inline Rng scene_rng(std::uint64_t seed, std::size_t t, std::size_t slot) {
    return Rng(mix64(mix64(seed, kStreamScenes), mix64(t, slot)));
}

struct StepRecord {
    std::size_t t = 0;
    std::size_t segment_id = 0;
    double l_img = 0.0;
    double l_obj = 0.0;
    double l_total = 0.0;
    double ratio1 = 0.0;
    double ratio2 = 0.0;
    bool updated = false;
    double accuracy = 0.0;
    std::size_t cumulative_backward_count = 0;
};

struct RunSummary {
    std::vector<double> per_segment_accuracy;
    double overall_accuracy = 0.0;
    double final_segment_accuracy = 0.0;
    std::size_t total_backward_steps = 0;
    std::size_t total_forward_steps = 0;
    double steps_per_sec = 0.0;
};

struct RunResult {
    std::vector<StepRecord> records;
    RunSummary summary;
    FrozenBackbone backbone;  // state at run end
    LowRankAdaptor adaptor;
    bool diverged = false;
    std::string divergence_reason;
};

SourceModel build_source_model(const ExperimentConfig& cfg);

// Scenario realization: preset name or inline segment specs, with shift
// directions and rotations drawn from the run seed's schedule stream.
void preset_segments(const std::string& name, ScheduleMode& mode,
                     std::vector<SegmentSpec>& segments);
DomainSchedule build_schedule(const ExperimentConfig& cfg, const SourceModel& model);

// Draws ref_samples clean scenes, summarizes scene-level and per-class
// feature statistics and the in-domain gap.
ReferenceStats precompute_references(const ExperimentConfig& cfg);
ReferenceStats precompute_references(const ExperimentConfig& cfg, const SourceModel& model);

// Checkpointed model state for warm starts.
struct ModelState {
    FrozenBackbone backbone;
    LowRankAdaptor adaptor;
};

// The adaptation loop: predict, track statistics, consult the update policy,
// and (when updating) run the backward pass and SGD step. Statistics and the
// loss trackers advance on every step; skipped steps omit only gradients and
// the optimizer. A non-finite loss stops the run with partial records kept.
// Passing initial state resumes from saved weights instead of a fresh model.
RunResult run_experiment(const ExperimentConfig& cfg, const ModelState* initial = nullptr);

std::string records_to_jsonl(const std::vector<StepRecord>& records);
std::string summary_to_csv(const ExperimentConfig& cfg, const RunSummary& summary,
                           const std::vector<StepRecord>& records);

struct SweepEntry {
    double value = 0.0;
    RunSummary summary;
};

struct SweepResult {
    std::string param;
    std::vector<SweepEntry> entries;
};

// One parameter, one value list, matched seeds. param is one of
// tau1 | tau2 | evenly-n | r.
SweepResult run_sweep(const ExperimentConfig& base, const std::string& param,
                      const std::vector<double>& values);

std::string sweep_to_csv(const ExperimentConfig& base, const SweepResult& sweep);
std::string frontier_to_csv(const SweepResult& sweep);

}  // namespace cta
