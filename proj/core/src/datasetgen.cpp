#include "sensemap/datasetgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "sensemap/image_io.hpp"

namespace sensemap {

namespace fs = std::filesystem;

void validate_sample(const DatasetSample& s) {
    if (s.obs.side != s.gt.height() || s.obs.side != s.gt.width())
        throw DomainError("DatasetSample: obs side " + std::to_string(s.obs.side) +
                          " != gt " + std::to_string(s.gt.height()) + "x" +
                          std::to_string(s.gt.width()));
    if (!s.gt.is_binary())
        throw DomainError("DatasetSample: gt contains Uncertain cells");
    for (int r = 0; r < s.obs.side; ++r) {
        for (int c = 0; c < s.obs.side; ++c) {
            const CellState o = s.obs.cells(r, c);
            if (o != CellState::Uncertain && o != s.gt(r, c))
                throw DomainError("DatasetSample: observation contradicts gt at (" +
                                  std::to_string(r) + ", " + std::to_string(c) + ")");
        }
    }
}

namespace {

Aggregate aggregate(const std::vector<double>& values) {
    Aggregate agg;
    if (values.empty()) return agg;
    agg.min = std::numeric_limits<double>::infinity();
    agg.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (double v : values) {
        sum += v;
        agg.min = std::min(agg.min, v);
        agg.max = std::max(agg.max, v);
    }
    agg.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - agg.mean) * (v - agg.mean);
    agg.var = sq / static_cast<double>(values.size());
    agg.std = std::sqrt(agg.var);
    return agg;
}

} // namespace

DatasetStats compute_stats(const std::vector<DatasetSample>& samples) {
    if (samples.empty()) throw DomainError("compute_stats: empty sample list");
    std::vector<double> of, ou, oo, gf, go, ratio, cov;
    for (const auto& s : samples) {
        const double obs_free = s.obs.cells.count(CellState::Free);
        const double obs_unc = s.obs.cells.count(CellState::Uncertain);
        const double obs_obs = s.obs.cells.count(CellState::Obstacle);
        const double gt_free = s.gt.count(CellState::Free);
        const double gt_obs = s.gt.count(CellState::Obstacle);
        of.push_back(obs_free);
        ou.push_back(obs_unc);
        oo.push_back(obs_obs);
        gf.push_back(gt_free);
        go.push_back(gt_obs);
        if (gt_obs > 0) ratio.push_back(gt_free / gt_obs);
        if (gt_free > 0) cov.push_back(obs_free / gt_free);
    }
    DatasetStats stats;
    stats.obs_free = aggregate(of);
    stats.obs_uncertain = aggregate(ou);
    stats.obs_obstacle = aggregate(oo);
    stats.gt_free = aggregate(gf);
    stats.gt_obstacle = aggregate(go);
    stats.gt_ratio = aggregate(ratio);
    stats.coverage = aggregate(cov);
    stats.sample_count = static_cast<int>(samples.size());
    stats.ratio_sample_count = static_cast<int>(ratio.size());
    return stats;
}

EpisodePolicy frontier_policy() {
    return [](const TrinaryMap& truth, const SensorSpec& spec, int budget, Cell start,
              const MapObserver& on_sense) {
        run_frontier_baseline(truth, spec, budget, start, {}, on_sense);
    };
}

std::vector<DatasetSample> collect_episode(const TrinaryMap& truth,
                                           const SensorSpec& spec,
                                           const EpisodePolicy& policy, int stride,
                                           Cell start, int map_id, int budget) {
    if (stride < 1) throw DomainError("collect_episode: stride must be >= 1");
    if (!truth.in_bounds(start) || truth.at(start) != CellState::Free)
        throw EpisodeError("collect_episode: start cell is not Free");

    std::vector<DatasetSample> samples;
    const int range = spec.range_L;
    auto on_sense = [&](int step, Cell robot, const TrinaryMap& observed) {
        if (step % stride != 0) return;
        DatasetSample s;
        s.obs = crop_local(observed, robot, range);
        s.gt = crop_local(truth, robot, range, CellState::Obstacle).cells;
        s.robot_local = Cell{range, range};
        s.map_id = map_id;
        s.step = step;
        samples.push_back(std::move(s));
    };
    const EpisodePolicy& driver = policy ? policy : frontier_policy();
    driver(truth, spec, budget, start, on_sense);
    return samples;
}

namespace {

std::string pair_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d.png", i);
    return buf;
}

} // namespace

void write_dataset(const std::vector<DatasetSample>& samples,
                   const std::string& directory,
                   const std::vector<std::uint64_t>& seeds,
                   const std::string& generator_version,
                   const std::map<std::string, std::string>& meta) {
    if (samples.empty()) throw DomainError("write_dataset: empty sample list");
    const int side = samples.front().obs.side;

    std::error_code ec;
    fs::create_directories(fs::path(directory) / "obs", ec);
    fs::create_directories(fs::path(directory) / "gt", ec);
    if (ec) throw IoError("write_dataset: cannot create " + directory);

    nlohmann::json pairs = nlohmann::json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const DatasetSample& s = samples[i];
        if (s.obs.side != side)
            throw DomainError("write_dataset: mixed patch sides");
        const std::string name = pair_name(static_cast<int>(i));
        write_obs_image((fs::path(directory) / "obs" / name).string(), s.obs.cells);
        write_gt_image((fs::path(directory) / "gt" / name).string(), s.gt);
        pairs.push_back({{"obs", "obs/" + name},
                         {"gt", "gt/" + name},
                         {"map_id", s.map_id},
                         {"step", s.step},
                         {"origin", {s.obs.origin.row, s.obs.origin.col}}});
    }
    nlohmann::json index;
    index["version"] = 1;
    index["generator_version"] = generator_version;
    index["patch_side"] = side;
    index["seeds"] = seeds;
    index["pairs"] = pairs;
    if (!meta.empty()) index["meta"] = meta;

    std::ofstream out(fs::path(directory) / "index.json", std::ios::trunc);
    if (!out) throw IoError("write_dataset: cannot open index.json in " + directory);
    out << index.dump(2) << "\n";
    if (!out) throw IoError("write_dataset: write failure on index.json");
}

std::vector<DatasetSample> read_dataset(const std::string& directory) {
    const fs::path index_path = fs::path(directory) / "index.json";
    std::ifstream in(index_path);
    if (!in) throw IoError("read_dataset: cannot open " + index_path.string());
    nlohmann::json index;
    try {
        in >> index;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("read_dataset: bad index.json: " + std::string(e.what()));
    }

    const int side = index.at("patch_side").get<int>();
    std::vector<DatasetSample> samples;
    for (const auto& pair : index.at("pairs")) {
        const fs::path obs_path = fs::path(directory) / pair.at("obs").get<std::string>();
        const fs::path gt_path = fs::path(directory) / pair.at("gt").get<std::string>();
        if (!fs::exists(obs_path))
            throw IoError("read_dataset: missing file " + obs_path.string());
        if (!fs::exists(gt_path))
            throw IoError("read_dataset: missing file " + gt_path.string());
        DatasetSample s;
        s.obs.side = side;
        s.obs.cells = read_obs_image(obs_path.string());
        if (s.obs.cells.height() != side || s.obs.cells.width() != side)
            throw FormatError("read_dataset: " + obs_path.string() + " has side " +
                              std::to_string(s.obs.cells.height()) + ", index says " +
                              std::to_string(side));
        const auto origin = pair.at("origin");
        s.obs.origin = Cell{origin.at(0).get<int>(), origin.at(1).get<int>()};
        s.obs.center = Cell{s.obs.origin.row + side / 2, s.obs.origin.col + side / 2};
        s.gt = read_gt_image(gt_path.string());
        s.robot_local = Cell{side / 2, side / 2};
        s.map_id = pair.at("map_id").get<int>();
        s.step = pair.at("step").get<int>();
        samples.push_back(std::move(s));
    }
    return samples;
}

TrainSample to_train_sample(const DatasetSample& s) {
    TrainSample out;
    out.x = encode_input(s.obs, s.obs.side);
    out.gt = Tensor({1, s.gt.height(), s.gt.width()});
    for (int r = 0; r < s.gt.height(); ++r)
        for (int c = 0; c < s.gt.width(); ++c)
            out.gt[static_cast<std::size_t>(r) * s.gt.width() + c] =
                s.gt(r, c) == CellState::Obstacle ? 1.0 : 0.0;
    return out;
}

} // namespace sensemap
