#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sensemap/explorer.hpp"
#include "sensemap/gridmap.hpp"
#include "sensemap/simworld.hpp"
#include "sensemap/training.hpp"

namespace sensemap {

/// One training pair: the local observation window and the binary
/// ground-truth crop at the same origin (out-of-map gt cells pad Obstacle).
struct DatasetSample {
    LocalPatch obs;
    TrinaryMap gt;
    Cell robot_local; // (L, L)
    int map_id = 0;
    int step = 0;
};

/// Throws DomainError if the sample breaks its invariants (mismatched sides,
/// Uncertain gt cells, observation contradicting gt).
void validate_sample(const DatasetSample& s);

struct Aggregate {
    double mean = 0.0;
    double max = 0.0;
    double min = 0.0;
    double std = 0.0;
    double var = 0.0; // population variance, var = std^2
};

/// Per-sample pixel statistics in the shape of the dataset tables:
/// observation channel counts, ground-truth counts with the free/obstacle
/// ratio (samples without obstacle pixels are excluded from the ratio), and
/// the free-pixel coverage of the observation over the ground truth.
struct DatasetStats {
    Aggregate obs_free, obs_uncertain, obs_obstacle;
    Aggregate gt_free, gt_obstacle, gt_ratio;
    Aggregate coverage;
    int sample_count = 0;
    int ratio_sample_count = 0;
};

DatasetStats compute_stats(const std::vector<DatasetSample>& samples);

/// Episode driver used while collecting; defaults to the frontier baseline.
using EpisodePolicy =
    std::function<void(const TrinaryMap& truth, const SensorSpec& spec, int budget,
                       Cell start, const MapObserver& on_sense)>;

EpisodePolicy frontier_policy();

/// Drive one episode and emit a sample every `stride` steps (step 0
/// included). Throws EpisodeError when the start cell is not Free.
std::vector<DatasetSample> collect_episode(const TrinaryMap& truth,
                                           const SensorSpec& spec,
                                           const EpisodePolicy& policy, int stride,
                                           Cell start, int map_id, int budget);

/// Directory layout: obs/NNNNNN.png, gt/NNNNNN.png, index.json. `meta`
/// entries land in the index verbatim (provenance such as config hashes).
void write_dataset(const std::vector<DatasetSample>& samples,
                   const std::string& directory,
                   const std::vector<std::uint64_t>& seeds,
                   const std::string& generator_version = "1",
                   const std::map<std::string, std::string>& meta = {});

std::vector<DatasetSample> read_dataset(const std::string& directory);

/// Network-ready encoding: one-hot observation channels and a [1, S, S]
/// target with obstacle = 1, free = 0.
TrainSample to_train_sample(const DatasetSample& s);

} // namespace sensemap
