// cta — continual test-time adaptation engine against a synthetic
// domain-shift stream. Subcommands: run one experiment, sweep one parameter,
// or precompute the source reference statistics.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cta/config.hpp"
#include "cta/harness.hpp"
#include "cta/serialize.hpp"

namespace {

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> values;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        values.push_back(item == "inf" ? std::numeric_limits<double>::infinity()
                                       : std::stod(item));
    }
    return values;
}

void print_summary(const cta::ExperimentConfig& cfg, const cta::RunSummary& s) {
    std::printf("method=%s seed=%llu\n", cta::method_name(cfg.method, cfg.evenly_n).c_str(),
                static_cast<unsigned long long>(cfg.seed));
    for (std::size_t i = 0; i < s.per_segment_accuracy.size(); ++i)
        std::printf("  segment %2zu  accuracy %.4f\n", i, s.per_segment_accuracy[i]);
    std::printf("  overall accuracy   %.4f\n", s.overall_accuracy);
    std::printf("  final segment      %.4f\n", s.final_segment_accuracy);
    std::printf("  backward / forward %zu / %zu\n", s.total_backward_steps,
                s.total_forward_steps);
    std::printf("  steps per second   %.0f\n", s.steps_per_sec);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"continual test-time adaptation engine"};
    app.require_subcommand(1);

    std::string config_path;
    std::string method_override;
    std::string out_override;
    std::string load_weights_path;
    std::string save_weights_path;
    long long seed_override = -1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "config file")->required();
        cmd->add_option("--seed", seed_override, "override seed");
        cmd->add_option("--out", out_override, "override output directory");
    };

    CLI::App* run = app.add_subcommand("run", "run one experiment");
    add_common(run);
    run->add_option("--method", method_override,
                    "direct | full | ours | ours-skip | evenly-skip-N");
    run->add_option("--load-weights", load_weights_path, "start from a saved weights file");
    run->add_option("--save-weights", save_weights_path, "save end-of-run weights");

    CLI::App* sweep = app.add_subcommand("sweep", "sweep one parameter over a value list");
    add_common(sweep);
    std::string param;
    std::string values_csv;
    sweep->add_option("--param", param, "tau1 | tau2 | evenly-n | r")->required();
    sweep->add_option("--values", values_csv, "comma-separated values (inf allowed)")->required();

    CLI::App* prep = app.add_subcommand("prep", "precompute reference statistics");
    add_common(prep);
    std::string refs_out;
    prep->add_option("--refs-out", refs_out, "output file (default <out>/refs.ctastats)");

    CLI11_PARSE(app, argc, argv);

    try {
        cta::ExperimentConfig cfg = cta::load_config(config_path);
        if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
        if (!out_override.empty()) cfg.out_dir = out_override;
        if (!method_override.empty()) cta::parse_method(method_override, cfg.method, cfg.evenly_n);
        std::filesystem::create_directories(cfg.out_dir);

        if (prep->parsed()) {
            const cta::ReferenceStats refs = cta::precompute_references(cfg);
            const std::string path =
                refs_out.empty() ? cfg.out_dir + "/refs.ctastats" : refs_out;
            cta::write_reference_stats(path, refs);
            std::printf("wrote %s (d=%zu classes=%zu d_kl_in=%s)\n", path.c_str(), refs.dim(),
                        refs.classes(), cta::format_double(refs.d_kl_in).c_str());
            return 0;
        }

        if (run->parsed()) {
            cta::ModelState init;
            const bool warm = !load_weights_path.empty();
            if (warm) cta::read_weights(load_weights_path, init.backbone, init.adaptor);
            cta::RunResult result = cta::run_experiment(cfg, warm ? &init : nullptr);
            const std::string tag =
                cta::method_name(cfg.method, cfg.evenly_n) + "_seed" + std::to_string(cfg.seed);
            write_file(cfg.out_dir + "/" + tag + ".jsonl",
                       cta::records_to_jsonl(result.records));
            write_file(cfg.out_dir + "/" + tag + "_summary.csv",
                       cta::summary_to_csv(cfg, result.summary, result.records));
            if (!save_weights_path.empty())
                cta::write_weights(save_weights_path, result.backbone, result.adaptor);
            print_summary(cfg, result.summary);
            if (result.diverged) {
                std::fprintf(stderr, "run diverged: %s (partial logs written)\n",
                             result.divergence_reason.c_str());
                return 2;
            }
            return 0;
        }

        if (sweep->parsed()) {
            const std::vector<double> values = parse_values(values_csv);
            const cta::SweepResult result = cta::run_sweep(cfg, param, values);
            write_file(cfg.out_dir + "/sweep_" + param + ".csv",
                       cta::sweep_to_csv(cfg, result));
            write_file(cfg.out_dir + "/frontier_" + param + ".csv",
                       cta::frontier_to_csv(result));
            for (const cta::SweepEntry& e : result.entries)
                std::printf("%s=%-8s accuracy %.4f  backward %zu/%zu\n", param.c_str(),
                            cta::format_double(e.value).c_str(), e.summary.overall_accuracy,
                            e.summary.total_backward_steps, e.summary.total_forward_steps);
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
