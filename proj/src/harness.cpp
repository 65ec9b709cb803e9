#include "cta/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cta {

SourceModel build_source_model(const ExperimentConfig& cfg) {
    Rng rng = derived_rng(cfg.seed, kStreamModel);
    return generate_source_model(rng, cfg.classes, cfg.d, cfg.separation, cfg.class_var,
                                 cfg.feature_scale, cfg.imbalance);
}

void preset_segments(const std::string& name, ScheduleMode& mode,
                     std::vector<SegmentSpec>& segments) {
    segments.clear();
    auto seg = [&](std::size_t dur, double shift, std::size_t shift_classes, double scale,
                   double noise, double rot_angle = 0.0, std::size_t rot_planes = 0) {
        segments.push_back(
            SegmentSpec{dur, shift, shift_classes, scale, noise, rot_angle, rot_planes});
    };

    if (name == "shift-discrete-like") {
        // seven weather/time-of-day style domains, last one back at the source
        mode = ScheduleMode::kDiscrete;
        seg(500, 30.0, 4, 1.0, 0.0);   // cloudy
        seg(500, 20.0, 3, 1.0, 0.0);   // overcast
        seg(500, 24.0, 4, 1.0, 0.0);   // fog
        seg(500, 22.0, 4, 1.0, 0.0);   // rain
        seg(500, 20.0, 3, 1.0, 0.0);   // dawn
        seg(500, 22.0, 4, 1.0, 0.0);   // night
        seg(500, 0.0, 0, 1.0, 0.0);    // clear
    } else if (name == "coco-c-like") {
        // fifteen corruption domains in four families plus the original domain
        mode = ScheduleMode::kDiscrete;
        seg(500, 20.0, 3, 1.00, 2.0);                 // noise a
        seg(500, 22.0, 3, 1.00, 2.5);                 // noise b
        seg(500, 18.0, 4, 1.00, 1.5);                 // noise c
        seg(500, 16.0, 3, 0.95, 0.5, 0.10, 6);        // blur a
        seg(500, 22.0, 4, 0.94, 0.5, 0.12, 6);        // blur b
        seg(500, 18.0, 3, 0.96, 0.5, 0.10, 4);        // blur c
        seg(500, 14.0, 3, 0.95, 1.0, 0.08, 6);        // blur d
        seg(500, 26.0, 4, 1.00, 0.5);                 // weather a
        seg(500, 30.0, 5, 1.00, 1.0);                 // weather b
        seg(500, 24.0, 4, 1.02, 0.5);                 // weather c
        seg(500, 20.0, 3, 1.04, 0.0);                 // weather d
        seg(500, 22.0, 4, 0.94, 0.0, 0.15, 10);       // digital a
        seg(500, 16.0, 3, 1.05, 0.5, 0.12, 8);        // digital b
        seg(500, 24.0, 4, 1.00, 1.0, 0.10, 8);        // digital c
        seg(500, 18.0, 3, 0.96, 0.5, 0.14, 10);       // digital d
        seg(500, 0.0, 0, 1.00, 0.0);                  // original
    } else if (name == "shift-continuous-like") {
        // waypoints; each leg ramps toward the next transform
        mode = ScheduleMode::kContinuous;
        seg(300, 0.0, 0, 1.00, 0.0);    // clear hold
        seg(900, 0.0, 0, 1.00, 0.0);    // clear -> fog ramp
        seg(900, 30.0, 5, 1.00, 1.0);   // fog -> clear ramp
        seg(300, 0.0, 0, 1.00, 0.0);    // clear hold
        seg(900, 0.0, 0, 1.00, 0.0);    // clear -> rain ramp
        seg(900, 22.0, 4, 1.03, 0.8);   // rain -> clear ramp
        seg(800, 0.0, 0, 1.00, 0.0);    // clear
    } else {
        throw std::invalid_argument("unknown scenario preset '" + name + "'");
    }
}

namespace {

Vec realize_shift(const SegmentSpec& spec, const SourceModel& model, Rng& rng) {
    const std::size_t d = model.dim();
    if (spec.shift_norm == 0.0) return Vec(d, 0.0);

    Vec dir;
    if (spec.shift_classes > 0) {
        // Mix prototype directions orthogonalized against the shared
        // prototype component, with negative coefficients: the chosen classes
        // lose head evidence while cross-talk onto the rest stays small. A
        // small free component keeps directions generic.
        Vec common(d, 0.0);
        for (const Vec& p : model.prototypes) {
            const double inv = 1.0 / norm(p);
            for (std::size_t j = 0; j < d; ++j) common[j] += inv * p[j];
        }
        const double inv_common = 1.0 / norm(common);
        for (double& x : common) x *= inv_common;

        std::vector<std::size_t> order(model.classes());
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        const std::size_t m = std::min(spec.shift_classes, model.classes());
        dir.assign(d, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            Vec q = model.prototypes[order[i]];
            const double inv_norm = 1.0 / norm(q);
            for (double& x : q) x *= inv_norm;
            const double along = dot(q, common);
            for (std::size_t j = 0; j < d; ++j) q[j] -= along * common[j];
            const double coeff = -rng.uniform(0.5, 1.0) / norm(q);
            for (std::size_t j = 0; j < d; ++j) dir[j] += coeff * q[j];
        }
        Vec extra = rng.normal_vec(d);
        const double extra_scale = 0.15 / norm(extra);
        for (std::size_t j = 0; j < d; ++j) dir[j] += extra_scale * extra[j];
    } else {
        dir = rng.normal_vec(d);
    }
    return scaled(dir, spec.shift_norm / norm(dir));
}

DomainTransform realize_segment(const SegmentSpec& spec, const SourceModel& model, Rng& rng) {
    DomainTransform t;
    t.shift = realize_shift(spec, model, rng);
    t.scale = spec.scale;
    t.noise_std = spec.noise_std;
    if (spec.rot_planes > 0 && spec.rot_angle != 0.0)
        t.rotation = random_rotation(rng, model.dim(), spec.rot_angle, spec.rot_planes);
    return t;
}

}  // namespace

DomainSchedule build_schedule(const ExperimentConfig& cfg, const SourceModel& model) {
    ScheduleMode mode = cfg.schedule_mode;
    std::vector<SegmentSpec> specs = cfg.segments;
    if (cfg.scenario != "custom") preset_segments(cfg.scenario, mode, specs);
    if (specs.empty()) throw std::invalid_argument("schedule has no segments");

    Rng rng = derived_rng(cfg.seed, kStreamSchedule);
    DomainSchedule schedule;
    schedule.mode = mode;
    schedule.segments.reserve(specs.size());
    for (const SegmentSpec& spec : specs)
        schedule.segments.push_back(ScheduleSegment{realize_segment(spec, model, rng), spec.duration});
    return schedule;
}

ReferenceStats precompute_references(const ExperimentConfig& cfg, const SourceModel& model) {
    const DomainTransform identity = DomainTransform::identity(cfg.d);
    std::vector<Vec> image_feats;
    image_feats.reserve(cfg.ref_samples);
    std::vector<std::vector<Vec>> class_feats(cfg.classes);

    for (std::size_t i = 0; i < cfg.ref_samples; ++i) {
        Rng rng = Rng(mix64(mix64(cfg.seed, kStreamRefs), i));
        Scene scene = sample_scene(model, identity, rng, cfg.n_obj_min, cfg.n_obj_max);
        image_feats.push_back(std::move(scene.image_feature));
        for (SceneObject& obj : scene.objects)
            class_feats[obj.true_class].push_back(std::move(obj.feature));
    }

    ReferenceStats refs;
    refs.image = compute_stats(image_feats);
    refs.per_class.reserve(cfg.classes);
    for (std::size_t k = 0; k < cfg.classes; ++k) {
        if (class_feats[k].size() < 2)
            throw std::runtime_error("reference pass saw fewer than 2 objects of class " +
                                     std::to_string(k) + "; raise ref_samples");
        refs.per_class.push_back(compute_stats(class_feats[k]));
    }
    Rng gap_rng = derived_rng(cfg.seed, kStreamGap);
    refs.d_kl_in = in_domain_gap(image_feats, gap_rng, 10);
    return refs;
}

ReferenceStats precompute_references(const ExperimentConfig& cfg) {
    return precompute_references(cfg, build_source_model(cfg));
}

RunResult run_experiment(const ExperimentConfig& cfg, const ModelState* initial) {
    cfg.validate();
    const SourceModel model = build_source_model(cfg);
    const ReferenceStats refs = cfg.refs_path.empty() ? precompute_references(cfg, model)
                                                      : read_reference_stats(cfg.refs_path);
    if (refs.dim() != cfg.d || refs.classes() != cfg.classes)
        throw std::runtime_error("reference stats shape does not match config");
    const DomainSchedule schedule = build_schedule(cfg, model);
    const std::size_t total_steps = schedule.total_steps();

    RunResult result;
    if (initial) {
        if (initial->backbone.dim() != cfg.d || initial->adaptor.dim() != cfg.d ||
            initial->adaptor.r != cfg.r)
            throw std::runtime_error("initial weights shape does not match config");
        result.backbone = initial->backbone;
        result.adaptor = initial->adaptor;
    } else {
        result.backbone = FrozenBackbone::identity(cfg.d);
        Rng adaptor_rng = derived_rng(cfg.seed, kStreamAdaptor);
        result.adaptor = make_adaptor(cfg.d, cfg.r, adaptor_rng);
    }

    EmaMean image_ema(refs.image.mean, cfg.alpha);
    ClassBank bank(refs.per_class, cfg.alpha);
    SkipController controller(refs.d_kl_in, cfg.tau1, cfg.tau2);

    result.records.reserve(total_steps);
    std::size_t backward_count = 0;

    const auto t_start = std::chrono::steady_clock::now();
    for (std::size_t t = 0; t < total_steps; ++t) {
        const DomainTransform transform = transform_at(schedule, t);

        ForwardCache cache;
        std::vector<Vec> image_feats;
        std::vector<std::size_t> image_entries;
        std::vector<RoiPrediction> preds;
        std::vector<std::size_t> truths;
        std::vector<std::size_t> object_entries;

        for (std::size_t slot = 0; slot < cfg.batch_size; ++slot) {
            Rng rng = scene_rng(cfg.seed, t, slot);
            Scene scene = sample_scene(model, transform, rng, cfg.n_obj_min, cfg.n_obj_max);
            image_feats.push_back(forward(result.backbone, result.adaptor, scene.image_feature,
                                          &cache));
            image_entries.push_back(cache.entries.size() - 1);
            for (const SceneObject& obj : scene.objects) {
                Vec f = forward(result.backbone, result.adaptor, obj.feature, &cache);
                object_entries.push_back(cache.entries.size() - 1);
                preds.push_back(head_predict(f, model));
                truths.push_back(obj.true_class);
            }
        }

        // prediction quality is scored before any update at this step
        const double accuracy = evaluate_accuracy(preds, truths);

        const auto assigned_idx = assign_indices(preds, cfg.classes, cfg.bg_threshold);
        std::vector<std::vector<Vec>> assigned_feats(cfg.classes);
        for (std::size_t k = 0; k < cfg.classes; ++k)
            for (std::size_t i : assigned_idx[k]) assigned_feats[k].push_back(preds[i].feature);

        // distribution trackers advance on every step, skipped or not
        image_ema.update(mean_of(image_feats));
        update_class_bank(bank, assigned_feats);

        const double l_img = image_loss(refs.image, image_ema);
        const double l_obj = object_loss(bank);
        if (!std::isfinite(l_img) || !std::isfinite(l_obj)) {
            result.diverged = true;
            result.divergence_reason = "non-finite alignment loss at step " + std::to_string(t);
            break;
        }

        const SkipDecision decision = controller.observe(l_img);
        bool do_update = false;
        switch (cfg.method) {
            case Method::kDirect: do_update = false; break;
            case Method::kFull:
            case Method::kOurs: do_update = true; break;
            case Method::kOursSkip: do_update = decision.update; break;
            case Method::kEvenlySkip: do_update = (t % cfg.evenly_n == 0); break;
        }

        if (do_update) {
            AlignmentBatch batch{image_feats, assigned_feats};
            const AlignmentOutput out =
                total_loss_and_grads(refs.image, bank, image_ema, batch, cfg.alpha);

            std::vector<Vec> upstream(cache.entries.size(), Vec(cfg.d, 0.0));
            for (std::size_t i = 0; i < image_entries.size(); ++i)
                upstream[image_entries[i]] = out.image_grads[i];
            for (std::size_t k = 0; k < cfg.classes; ++k)
                for (std::size_t j = 0; j < assigned_idx[k].size(); ++j)
                    upstream[object_entries[assigned_idx[k][j]]] = out.object_grads[k][j];

            try {
                if (cfg.method == Method::kFull) {
                    AdaptorGradients grads =
                        full_finetune_backward(result.adaptor, cache, upstream);
                    sgd_step(result.adaptor, grads, cfg.lr);
                    sgd_step(result.backbone, grads, cfg.lr);
                } else {
                    AdaptorGradients grads = backward(result.adaptor, cache, upstream);
                    sgd_step(result.adaptor, grads, cfg.lr);
                }
            } catch (const std::runtime_error& e) {
                result.diverged = true;
                result.divergence_reason = e.what();
                break;
            }
            ++backward_count;
        }

        result.records.push_back(StepRecord{t, schedule.segment_index(t), l_img, l_obj,
                                            l_img + l_obj, decision.ratio1, decision.ratio2,
                                            do_update, accuracy, backward_count});
    }
    const auto t_end = std::chrono::steady_clock::now();
    const double elapsed = std::chrono::duration<double>(t_end - t_start).count();

    RunSummary& s = result.summary;
    s.per_segment_accuracy.assign(schedule.segments.size(), 0.0);
    std::vector<std::size_t> seg_steps(schedule.segments.size(), 0);
    double acc_sum = 0.0;
    for (const StepRecord& rec : result.records) {
        s.per_segment_accuracy[rec.segment_id] += rec.accuracy;
        ++seg_steps[rec.segment_id];
        acc_sum += rec.accuracy;
    }
    for (std::size_t i = 0; i < seg_steps.size(); ++i)
        if (seg_steps[i] > 0) s.per_segment_accuracy[i] /= static_cast<double>(seg_steps[i]);
    s.overall_accuracy =
        result.records.empty() ? 0.0 : acc_sum / static_cast<double>(result.records.size());
    s.final_segment_accuracy =
        s.per_segment_accuracy.empty() ? 0.0 : s.per_segment_accuracy.back();
    s.total_backward_steps = backward_count;
    s.total_forward_steps = result.records.size();
    s.steps_per_sec = elapsed > 0.0 ? static_cast<double>(result.records.size()) / elapsed : 0.0;
    return result;
}

std::string records_to_jsonl(const std::vector<StepRecord>& records) {
    std::string out;
    out.reserve(records.size() * 160);
    for (const StepRecord& r : records) {
        out += "{\"t\":" + std::to_string(r.t);
        out += ",\"segment_id\":" + std::to_string(r.segment_id);
        out += ",\"l_img\":" + format_double(r.l_img);
        out += ",\"l_obj\":" + format_double(r.l_obj);
        out += ",\"l_total\":" + format_double(r.l_total);
        out += ",\"ratio1\":" + format_double(r.ratio1);
        out += ",\"ratio2\":" + format_double(r.ratio2);
        out += std::string(",\"updated\":") + (r.updated ? "true" : "false");
        out += ",\"accuracy\":" + format_double(r.accuracy);
        out += ",\"cumulative_backward_count\":" + std::to_string(r.cumulative_backward_count);
        out += "}\n";
    }
    return out;
}

std::string summary_to_csv(const ExperimentConfig& cfg, const RunSummary& summary,
                           const std::vector<StepRecord>& records) {
    std::vector<std::size_t> seg_steps(summary.per_segment_accuracy.size(), 0);
    std::vector<std::size_t> seg_backward(summary.per_segment_accuracy.size(), 0);
    for (const StepRecord& r : records) {
        ++seg_steps[r.segment_id];
        if (r.updated) ++seg_backward[r.segment_id];
    }

    const std::string who = method_name(cfg.method, cfg.evenly_n) + "," + std::to_string(cfg.seed);
    std::string out = "method,seed,segment,accuracy,backward_steps,forward_steps,steps_per_sec\n";
    for (std::size_t i = 0; i < summary.per_segment_accuracy.size(); ++i)
        out += who + "," + std::to_string(i) + "," +
               format_double(summary.per_segment_accuracy[i]) + "," +
               std::to_string(seg_backward[i]) + "," + std::to_string(seg_steps[i]) + "," +
               format_double(summary.steps_per_sec) + "\n";
    out += who + ",overall," + format_double(summary.overall_accuracy) + "," +
           std::to_string(summary.total_backward_steps) + "," +
           std::to_string(summary.total_forward_steps) + "," +
           format_double(summary.steps_per_sec) + "\n";
    return out;
}

SweepResult run_sweep(const ExperimentConfig& base, const std::string& param,
                      const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("run_sweep: no values");
    SweepResult sweep;
    sweep.param = param;
    for (double v : values) {
        ExperimentConfig cfg = base;
        if (param == "tau1") {
            cfg.method = Method::kOursSkip;
            cfg.tau1 = v;
        } else if (param == "tau2") {
            cfg.method = Method::kOursSkip;
            cfg.tau2 = v;
        } else if (param == "evenly-n") {
            if (v < 1.0 || v != std::floor(v))
                throw std::invalid_argument("run_sweep: evenly-n values must be positive integers");
            cfg.method = Method::kEvenlySkip;
            cfg.evenly_n = static_cast<std::size_t>(v);
        } else if (param == "r") {
            if (v < 1.0 || v != std::floor(v))
                throw std::invalid_argument("run_sweep: r values must be positive integers");
            cfg.r = static_cast<std::size_t>(v);
        } else {
            throw std::invalid_argument("run_sweep: unknown parameter '" + param + "'");
        }
        RunResult run = run_experiment(cfg);
        if (run.diverged)
            throw std::runtime_error("sweep run diverged at " + param + "=" + format_double(v) +
                                     ": " + run.divergence_reason);
        sweep.entries.push_back(SweepEntry{v, run.summary});
    }
    return sweep;
}

std::string sweep_to_csv(const ExperimentConfig& base, const SweepResult& sweep) {
    std::string out =
        "param,value,method,seed,overall_accuracy,final_segment_accuracy,backward_steps,"
        "forward_steps,steps_per_sec\n";
    for (const SweepEntry& e : sweep.entries) {
        std::string method = method_name(base.method, base.evenly_n);
        if (sweep.param == "tau1" || sweep.param == "tau2") method = "ours-skip";
        if (sweep.param == "evenly-n")
            method = "evenly-skip-" + std::to_string(static_cast<std::size_t>(e.value));
        out += sweep.param + "," + format_double(e.value) + "," + method + "," +
               std::to_string(base.seed) + "," + format_double(e.summary.overall_accuracy) + "," +
               format_double(e.summary.final_segment_accuracy) + "," +
               std::to_string(e.summary.total_backward_steps) + "," +
               std::to_string(e.summary.total_forward_steps) + "," +
               format_double(e.summary.steps_per_sec) + "\n";
    }
    return out;
}

std::string frontier_to_csv(const SweepResult& sweep) {
    std::string out = "param,value,backward_fraction,overall_accuracy\n";
    for (const SweepEntry& e : sweep.entries) {
        const double frac =
            e.summary.total_forward_steps == 0
                ? 0.0
                : static_cast<double>(e.summary.total_backward_steps) /
                      static_cast<double>(e.summary.total_forward_steps);
        out += sweep.param + "," + format_double(e.value) + "," + format_double(frac) + "," +
               format_double(e.summary.overall_accuracy) + "\n";
    }
    return out;
}

}  // namespace cta
