// sensemap: experiment harness for the exploration pipeline.
//
// Subcommands: gen-worlds, gen-data, train, explore, eval, stats,
// print-config. Exit codes: 0 success, 1 configuration error, 2 runtime
// error.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sensemap/errors.hpp"
#include "sensemap/experiments.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string output_dir;
    std::vector<std::uint64_t> seeds;
    int budget = -1;
    int map_count = -1;
    int repeats = -1;
    int epochs = -1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "Experiment config JSON file");
    cmd->add_option("-o,--out", opts.output_dir,
                    "Output directory (overrides the config value)");
    cmd->add_option("--seed", opts.seeds, "Run seed list (overrides the config value)");
    cmd->add_option("--budget", opts.budget, "Episode step budget override");
    cmd->add_option("--maps", opts.map_count, "Map count override");
    cmd->add_option("--repeats", opts.repeats, "Repeats per map override");
    cmd->add_option("--epochs", opts.epochs, "Training epoch override");
}

sensemap::ExperimentConfig make_config(const CommonOpts& opts) {
    sensemap::ExperimentConfig cfg;
    if (!opts.config_path.empty()) cfg = sensemap::load_config(opts.config_path);
    if (!opts.output_dir.empty()) cfg.output_dir = opts.output_dir;
    if (!opts.seeds.empty()) cfg.seeds = opts.seeds;
    if (opts.budget >= 0) cfg.budget = opts.budget;
    if (opts.map_count > 0) cfg.map_count = opts.map_count;
    if (opts.repeats > 0) cfg.repeats = opts.repeats;
    if (opts.epochs > 0) cfg.train.epochs = opts.epochs;
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SenseMap exploration pipeline harness"};
    app.require_subcommand(1);

    CommonOpts opts;

    auto* gen_worlds = app.add_subcommand("gen-worlds", "Generate seeded floorplans");
    add_common(gen_worlds, opts);

    auto* gen_data = app.add_subcommand("gen-data", "Collect the training dataset");
    add_common(gen_data, opts);

    auto* train = app.add_subcommand("train", "Train the local map predictor");
    add_common(train, opts);
    bool train_large = false;
    std::string resume_from;
    train->add_flag("--large", train_large, "Also train the base-doubled variant");
    train->add_option("--resume", resume_from, "Resume from a training checkpoint");

    auto* explore = app.add_subcommand("explore", "Run exploration comparisons");
    add_common(explore, opts);
    std::vector<std::string> methods{"frontier", "sensemap"};
    int workers = 0;
    explore->add_option("-m,--methods", methods,
                        "Methods: frontier sensemap sensemap-large oracle identity");
    explore->add_option("--workers", workers, "Worker threads (0 = hardware)");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on held-out data");
    add_common(eval, opts);
    std::string ckpt_path, dataset_dir;
    eval->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
    eval->add_option("--dataset", dataset_dir,
                     "Dataset directory (defaults to <out>/dataset)");

    auto* stats = app.add_subcommand("stats", "Print dataset statistics");
    add_common(stats, opts);
    std::string stats_dir;
    stats->add_option("--dataset", stats_dir,
                      "Dataset directory (defaults to <out>/dataset)");

    auto* print_config = app.add_subcommand("print-config", "Dump the effective config");
    add_common(print_config, opts);

    CLI11_PARSE(app, argc, argv);

    try {
        const sensemap::ExperimentConfig cfg = make_config(opts);
        const std::string out = sensemap::resolve_output_dir(cfg);

        if (gen_worlds->parsed()) {
            sensemap::cmd_gen_worlds(cfg);
            std::printf("wrote %d worlds to %s/worlds (config %s)\n", cfg.map_count,
                        out.c_str(), sensemap::config_hash(cfg).c_str());
        } else if (gen_data->parsed()) {
            sensemap::cmd_gen_data(cfg);
            std::printf("dataset written to %s/dataset\n", out.c_str());
        } else if (train->parsed()) {
            const auto outputs = sensemap::cmd_train(cfg, train_large, resume_from);
            for (const auto& o : outputs)
                std::printf("checkpoint %s (final mean hybrid loss %.6f)\n",
                            o.checkpoint_path.c_str(),
                            o.history.empty() ? 0.0 : o.history.back().mean_hybrid);
        } else if (explore->parsed()) {
            const auto report = sensemap::cmd_explore(cfg, methods, workers);
            std::printf("%-16s %9s %13s %9s %9s %7s\n", "method", "episodes",
                        "median_steps", "avg_rho", "avg_ra", "done");
            for (const auto& s : report.methods) {
                char ra[16];
                if (s.ra_applicable) std::snprintf(ra, sizeof(ra), "%.4f", s.avg_ra);
                else std::snprintf(ra, sizeof(ra), "n/a");
                std::printf("%-16s %9d %13.1f %9.4f %9s %7d\n", s.method.c_str(),
                            s.episodes, s.median_steps, s.avg_rho, ra, s.completed);
            }
            std::printf("report: %s\n", report.report_csv.c_str());
        } else if (eval->parsed()) {
            if (dataset_dir.empty()) dataset_dir = out + "/dataset";
            const auto report = sensemap::cmd_eval(cfg, ckpt_path, dataset_dir);
            std::printf("%-16s %9s %10s %10s %8s\n", "model", "ssim", "plpips", "pfid",
                        "samples");
            for (const auto& row : report.rows) {
                char fid[24];
                if (row.pfid) std::snprintf(fid, sizeof(fid), "%.4f", *row.pfid);
                else std::snprintf(fid, sizeof(fid), "n/a");
                std::printf("%-16s %9.4f %10.4f %10s %8d\n", row.model.c_str(),
                            row.mean_ssim, row.mean_plpips, fid, row.samples);
            }
            std::printf("report: %s\n", report.report_path.c_str());
        } else if (stats->parsed()) {
            if (stats_dir.empty()) stats_dir = out + "/dataset";
            sensemap::cmd_stats(stats_dir);
        } else if (print_config->parsed()) {
            std::printf("%s\n", sensemap::config_to_json(cfg).c_str());
        }
    } catch (const sensemap::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
