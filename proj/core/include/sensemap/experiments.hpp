#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sensemap/datasetgen.hpp"
#include "sensemap/explorer.hpp"
#include "sensemap/metrics.hpp"
#include "sensemap/nnet.hpp"
#include "sensemap/simworld.hpp"
#include "sensemap/training.hpp"

namespace sensemap {

/// Cluster cost weights as configured; w_dis = 0 means "derive 1/map_side".
struct CostConfig {
    double w_prob = 1.0;
    double w_dis = 0.0;

    CostWeights resolve(int map_side) const;
};

/// Everything one experiment needs, loadable from a versioned JSON file.
struct ExperimentConfig {
    FloorplanConfig world{96, 96, 4, 8, 1, 1};
    int map_count = 5;
    SensorSpec sensor{32, 360};
    NetConfig net; // side must equal 2 * sensor.range_L for data/explore
    TrainConfig train;
    LossWeights loss;
    double train_split = 0.75;
    std::uint64_t phi_seed = 7;
    FusionConfig fusion;
    CostConfig cost;
    int budget = 4096;
    int repeats = 1;
    int data_stride = 5;
    int episodes_per_map = 1;
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "out";

    void validate() const;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);
std::string config_to_json(const ExperimentConfig& cfg);

/// FNV-1a hash of the canonical JSON form, as a 16-char hex string. Embedded
/// in every emitted report/manifest for provenance.
std::string config_hash(const ExperimentConfig& cfg);

/// Resolve the effective output directory: $SENSEMAP_OUT_ROOT prefixes
/// relative output_dir values when set.
std::string resolve_output_dir(const ExperimentConfig& cfg);

// --- subcommands ------------------------------------------------------------

/// gen-worlds: seeded floorplans as gt-format PNGs plus manifest.json with
/// per-file content hashes.
void cmd_gen_worlds(const ExperimentConfig& cfg);

/// Load the worlds written by cmd_gen_worlds, verifying the manifest seeds
/// and file hashes (FormatError on tampering).
std::vector<std::pair<std::uint64_t, TrinaryMap>> load_worlds(const std::string& worlds_dir);

/// gen-data: collection episodes over the world manifest; writes the dataset
/// directory and returns the printed statistics.
DatasetStats cmd_gen_data(const ExperimentConfig& cfg);

/// stats: recompute and print the dataset tables for a directory.
DatasetStats cmd_stats(const std::string& dataset_dir);

struct TrainOutputs {
    std::string checkpoint_path;
    std::string history_path;
    std::vector<EpochStats> history;
};

/// train: deterministic split, standard model, optional base-doubled large
/// variant; emits checkpoints and loss_history.csv. `resume_from` continues
/// a previous run's checkpoint.
std::vector<TrainOutputs> cmd_train(const ExperimentConfig& cfg, bool also_large,
                                    const std::string& resume_from = "");

struct MethodSummary {
    std::string method;
    int episodes = 0;
    double avg_steps = 0.0;
    double median_steps = 0.0;
    double avg_distance = 0.0;
    double avg_rho = 0.0;
    double avg_ra = 0.0; // NaN when not applicable (frontier baseline)
    bool ra_applicable = true;
    int completed = 0;
};

struct ExploreReport {
    std::vector<MethodSummary> methods;
    std::string report_csv, report_json, curves_csv, curves_svg;
};

/// explore: repeats x maps episodes per method with shared start cells,
/// traces as JSON lines, aggregate report (CSV + JSON) and the
/// coverage-vs-step curve (CSV + SVG).
ExploreReport cmd_explore(const ExperimentConfig& cfg,
                          const std::vector<std::string>& methods, int workers = 0);

struct EvalRow {
    std::string model;
    double mean_ssim = 0.0;
    double mean_plpips = 0.0;
    std::optional<double> pfid; // absent when the held-out set is too small
    int samples = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::string report_path;
};

/// eval: held-out SSIM/pLPIPS per sample and pFID across the set for a
/// checkpoint, with the identity predictor as the reference row.
EvalReport cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                    const std::string& dataset_dir);

/// Table printer shared by gen-data and stats.
void print_stats(const DatasetStats& stats);

/// Deterministic train/test split shared by cmd_train and cmd_eval.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_indices(std::size_t n, double train_fraction, std::uint64_t seed);

} // namespace sensemap
