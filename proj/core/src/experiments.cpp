#include "sensemap/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "sensemap/checkpoint.hpp"
#include "sensemap/image_io.hpp"
#include "sensemap/rng.hpp"
#include "sensemap/svg_plot.hpp"

namespace sensemap {

namespace fs = std::filesystem;
using nlohmann::json;

CostWeights CostConfig::resolve(int map_side) const {
    if (w_dis > 0.0) return CostWeights{w_prob, w_dis};
    return CostWeights{w_prob, 1.0 / static_cast<double>(map_side)};
}

void ExperimentConfig::validate() const {
    sensor.validate();
    net.validate();
    train.validate();
    loss.validate();
    fusion.validate();
    if (map_count < 1) throw ConfigError("config: map_count must be >= 1");
    if (repeats < 1) throw ConfigError("config: repeats must be >= 1");
    if (episodes_per_map < 1)
        throw ConfigError("config: episodes_per_map must be >= 1");
    if (data_stride < 1) throw ConfigError("config: data_stride must be >= 1");
    if (budget < 0) throw ConfigError("config: budget must be >= 0");
    if (!(train_split > 0.0 && train_split < 1.0))
        throw ConfigError("config: train_split must be in (0, 1)");
    if (seeds.empty()) throw ConfigError("config: seeds must be non-empty");
    if (cost.w_prob < 0.0 || cost.w_dis < 0.0)
        throw ConfigError("config: cost weights must be >= 0");
}

namespace {

json config_json(const ExperimentConfig& c) {
    json j;
    j["version"] = 1;
    j["world"] = {{"width", c.world.width},
                  {"height", c.world.height},
                  {"min_rooms", c.world.min_rooms},
                  {"max_rooms", c.world.max_rooms},
                  {"corridor_width", c.world.corridor_width},
                  {"seed", c.world.seed}};
    j["map_count"] = c.map_count;
    j["sensor"] = {{"range_L", c.sensor.range_L}, {"beam_count", c.sensor.beam_count}};
    j["net"] = {{"side", c.net.side},   {"base", c.net.base},
                {"patch", c.net.patch}, {"depth", c.net.depth},
                {"heads", c.net.heads}, {"mlp_ratio", c.net.mlp_ratio}};
    j["train"] = {{"epochs", c.train.epochs},
                  {"split_epoch", c.train.split_epoch},
                  {"lr_phase1", c.train.lr_phase1},
                  {"lr_phase2", c.train.lr_phase2},
                  {"batch_size", c.train.batch_size},
                  {"seed", c.train.seed}};
    j["loss"] = {{"w_mse", c.loss.w_mse}, {"w_feat", c.loss.w_feat}};
    j["train_split"] = c.train_split;
    j["phi_seed"] = c.phi_seed;
    j["fusion"] = {{"alpha", c.fusion.alpha},
                   {"tau", c.fusion.tau},
                   {"nu", c.fusion.nu},
                   {"predict_stride", c.fusion.predict_stride}};
    j["cost"] = {{"w_prob", c.cost.w_prob}, {"w_dis", c.cost.w_dis}};
    j["budget"] = c.budget;
    j["repeats"] = c.repeats;
    j["data"] = {{"stride", c.data_stride}, {"episodes_per_map", c.episodes_per_map}};
    j["seeds"] = c.seeds;
    j["output_dir"] = c.output_dir;
    return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

ExperimentConfig config_from_json(const json& j) {
    if (!j.contains("version") || j.at("version").get<int>() != 1)
        throw ConfigError("config: missing or unsupported version (expected 1)");
    ExperimentConfig c;
    if (j.contains("world")) {
        const json& w = j.at("world");
        maybe(w, "width", c.world.width);
        maybe(w, "height", c.world.height);
        maybe(w, "min_rooms", c.world.min_rooms);
        maybe(w, "max_rooms", c.world.max_rooms);
        maybe(w, "corridor_width", c.world.corridor_width);
        maybe(w, "seed", c.world.seed);
    }
    maybe(j, "map_count", c.map_count);
    if (j.contains("sensor")) {
        const json& s = j.at("sensor");
        maybe(s, "range_L", c.sensor.range_L);
        maybe(s, "beam_count", c.sensor.beam_count);
    }
    if (j.contains("net")) {
        const json& n = j.at("net");
        maybe(n, "side", c.net.side);
        maybe(n, "base", c.net.base);
        maybe(n, "patch", c.net.patch);
        maybe(n, "depth", c.net.depth);
        maybe(n, "heads", c.net.heads);
        maybe(n, "mlp_ratio", c.net.mlp_ratio);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        maybe(t, "epochs", c.train.epochs);
        maybe(t, "split_epoch", c.train.split_epoch);
        maybe(t, "lr_phase1", c.train.lr_phase1);
        maybe(t, "lr_phase2", c.train.lr_phase2);
        maybe(t, "batch_size", c.train.batch_size);
        maybe(t, "seed", c.train.seed);
    }
    if (j.contains("loss")) {
        maybe(j.at("loss"), "w_mse", c.loss.w_mse);
        maybe(j.at("loss"), "w_feat", c.loss.w_feat);
    }
    maybe(j, "train_split", c.train_split);
    maybe(j, "phi_seed", c.phi_seed);
    if (j.contains("fusion")) {
        const json& f = j.at("fusion");
        maybe(f, "alpha", c.fusion.alpha);
        maybe(f, "tau", c.fusion.tau);
        maybe(f, "nu", c.fusion.nu);
        maybe(f, "predict_stride", c.fusion.predict_stride);
    }
    if (j.contains("cost")) {
        maybe(j.at("cost"), "w_prob", c.cost.w_prob);
        maybe(j.at("cost"), "w_dis", c.cost.w_dis);
    }
    maybe(j, "budget", c.budget);
    maybe(j, "repeats", c.repeats);
    if (j.contains("data")) {
        maybe(j.at("data"), "stride", c.data_stride);
        maybe(j.at("data"), "episodes_per_map", c.episodes_per_map);
    }
    maybe(j, "seeds", c.seeds);
    maybe(j, "output_dir", c.output_dir);
    return c;
}

} // namespace

ExperimentConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    ExperimentConfig cfg = config_from_json(j);
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return parse_config(text);
}

std::string config_to_json(const ExperimentConfig& cfg) {
    return config_json(cfg).dump(2);
}

std::string config_hash(const ExperimentConfig& cfg) {
    // The hash identifies the experiment, not its destination: reruns into a
    // different directory must report the same provenance.
    json j = config_json(cfg);
    j.erase("output_dir");
    const std::string canon = j.dump();
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canon.data(), canon.size())));
    return buf;
}

std::string resolve_output_dir(const ExperimentConfig& cfg) {
    const char* root = std::getenv("SENSEMAP_OUT_ROOT");
    fs::path out(cfg.output_dir);
    if (root && *root && out.is_relative()) out = fs::path(root) / out;
    return out.string();
}

namespace {

void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw IoError("cannot create directory " + p.string());
}

TrinaryMap world_for(const ExperimentConfig& cfg, int map_idx) {
    FloorplanConfig w = cfg.world;
    w.seed = Rng::mix(cfg.world.seed, static_cast<std::uint64_t>(map_idx));
    return generate_floorplan(w);
}

std::uint64_t world_seed_for(const ExperimentConfig& cfg, int map_idx) {
    return Rng::mix(cfg.world.seed, static_cast<std::uint64_t>(map_idx));
}

Cell random_free_cell(const TrinaryMap& map, Rng& rng) {
    const int n_free = map.count(CellState::Free);
    if (n_free == 0) throw DomainError("random_free_cell: no Free cells");
    std::int64_t pick = rng.uniform_int(0, n_free - 1);
    for (int r = 0; r < map.height(); ++r)
        for (int c = 0; c < map.width(); ++c)
            if (map(r, c) == CellState::Free && pick-- == 0) return Cell{r, c};
    throw DomainError("random_free_cell: unreachable");
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    if (workers <= 0)
        workers = static_cast<int>(std::thread::hardware_concurrency());
    workers = std::max(1, std::min(workers, n));
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex err_mx;
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mx);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

std::string map_file_name(int i) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "map_%03d.png", i);
    return buf;
}

} // namespace

void cmd_gen_worlds(const ExperimentConfig& cfg) {
    cfg.validate();
    const fs::path out = fs::path(resolve_output_dir(cfg)) / "worlds";
    ensure_dir(out);

    json maps = json::array();
    for (int i = 0; i < cfg.map_count; ++i) {
        const TrinaryMap map = world_for(cfg, i);
        const std::vector<std::uint8_t> bytes = encode_gt_image(map);
        const std::string name = map_file_name(i);
        write_file((out / name).string(), bytes);
        maps.push_back({{"file", name},
                        {"seed", world_seed_for(cfg, i)},
                        {"fnv1a64", fnv1a64_hex(bytes)}});
    }
    json manifest;
    manifest["version"] = 1;
    manifest["config_hash"] = config_hash(cfg);
    manifest["width"] = cfg.world.width;
    manifest["height"] = cfg.world.height;
    manifest["maps"] = maps;
    std::ofstream mf(out / "manifest.json", std::ios::trunc);
    if (!mf) throw IoError("gen-worlds: cannot open manifest.json");
    mf << manifest.dump(2) << "\n";
    if (!mf) throw IoError("gen-worlds: write failure on manifest.json");
}

std::vector<std::pair<std::uint64_t, TrinaryMap>> load_worlds(const std::string& worlds_dir) {
    const fs::path dir(worlds_dir);
    std::ifstream mf(dir / "manifest.json");
    if (!mf)
        throw ConfigError("load_worlds: no manifest.json in " + worlds_dir +
                          " (run gen-worlds first)");
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw FormatError("load_worlds: bad manifest: " + std::string(e.what()));
    }
    std::vector<std::pair<std::uint64_t, TrinaryMap>> worlds;
    for (const auto& entry : manifest.at("maps")) {
        const std::string file = entry.at("file").get<std::string>();
        const std::vector<std::uint8_t> bytes = read_file((dir / file).string());
        if (fnv1a64_hex(bytes) != entry.at("fnv1a64").get<std::string>())
            throw FormatError("load_worlds: hash mismatch for " + file +
                              " (file does not match manifest)");
        worlds.push_back({entry.at("seed").get<std::uint64_t>(),
                          decode_gt_image(bytes)});
    }
    return worlds;
}

DatasetStats cmd_gen_data(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.net.side != 2 * cfg.sensor.range_L)
        throw ConfigError("gen-data: net.side must equal 2 * sensor.range_L");
    const fs::path out(resolve_output_dir(cfg));
    const auto worlds = load_worlds((out / "worlds").string());

    std::vector<DatasetSample> samples;
    std::vector<std::uint64_t> seeds;
    for (std::size_t m = 0; m < worlds.size(); ++m) {
        const TrinaryMap& truth = worlds[m].second;
        for (int e = 0; e < cfg.episodes_per_map; ++e) {
            const std::uint64_t episode_seed =
                Rng::mix(cfg.seeds.front(), 1000003ULL * m + static_cast<std::uint64_t>(e));
            seeds.push_back(episode_seed);
            Rng rng(episode_seed);
            const Cell start = random_free_cell(truth, rng);
            auto episode = collect_episode(truth, cfg.sensor, frontier_policy(),
                                           cfg.data_stride, start,
                                           static_cast<int>(m), cfg.budget);
            for (auto& s : episode) samples.push_back(std::move(s));
        }
    }
    if (samples.empty()) throw ConfigError("gen-data: produced no samples");

    write_dataset(samples, (out / "dataset").string(), seeds, "1",
                  {{"config_hash", config_hash(cfg)}});
    const DatasetStats stats = compute_stats(samples);
    print_stats(stats);
    return stats;
}

DatasetStats cmd_stats(const std::string& dataset_dir) {
    const auto samples = read_dataset(dataset_dir);
    const DatasetStats stats = compute_stats(samples);
    print_stats(stats);
    return stats;
}

void print_stats(const DatasetStats& stats) {
    auto row = [](const char* name, const Aggregate& a) {
        std::printf("%-22s %12.2f %12.2f %12.2f %12.2f %14.2f\n", name, a.mean, a.max,
                    a.min, a.std, a.var);
    };
    std::printf("Observation map channel distribution (pixels, %d samples)\n",
                stats.sample_count);
    std::printf("%-22s %12s %12s %12s %12s %14s\n", "Category", "Mean", "Max", "Min",
                "Std", "Var");
    row("Free", stats.obs_free);
    row("Uncertain", stats.obs_uncertain);
    row("Obstacle", stats.obs_obstacle);
    std::printf("\nGround truth distribution (pixels)\n");
    row("Free", stats.gt_free);
    row("Obstacle", stats.gt_obstacle);
    std::printf("%-22s (over %d samples with obstacles)\n", "Ratio(free/obstacle)",
                stats.ratio_sample_count);
    row("Ratio(free/obstacle)", stats.gt_ratio);
    std::printf("\nObservation coverage of ground-truth free pixels\n");
    row("Coverage", stats.coverage);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_indices(std::size_t n, double train_fraction, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(Rng::mix(seed, 0x73706c6974ULL)); // "split" stream
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
    }
    const auto n_train = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(n) + 0.5));
    std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    return {train, test};
}

namespace {

TrainOutputs train_one(const ExperimentConfig& cfg, const NetConfig& net,
                       const std::vector<TrainSample>& train_set,
                       const std::string& model_name, const std::string& resume_from) {
    const fs::path out(resolve_output_dir(cfg));
    ensure_dir(out / "checkpoints");

    const FeatureNet phi(cfg.phi_seed);
    TrainResult result;
    if (resume_from.empty()) {
        result = train(train_set, net, cfg.train, cfg.loss, phi);
    } else {
        const Checkpoint ckpt = load_checkpoint(resume_from);
        if (!(ckpt.config == net))
            throw ConfigError("train: resume checkpoint config differs from " +
                              model_name);
        const auto it = ckpt.meta.find("next_epoch");
        if (it == ckpt.meta.end())
            throw FormatError("train: resume checkpoint lacks next_epoch");
        result = train_from(train_set, net, cfg.train, cfg.loss, phi,
                            params_from_checkpoint(ckpt), adam_from_checkpoint(ckpt),
                            std::stoi(it->second));
    }

    Checkpoint ckpt =
        make_train_checkpoint(net, result.params, result.opt, cfg.train.epochs + 1);
    ckpt.meta["model"] = model_name;
    ckpt.meta["config_hash"] = config_hash(cfg);
    ckpt.meta["phi_seed"] = std::to_string(cfg.phi_seed);

    TrainOutputs outputs;
    outputs.checkpoint_path = (out / "checkpoints" / (model_name + ".ckpt")).string();
    outputs.history_path = (out / ("loss_history_" + model_name + ".csv")).string();
    save_checkpoint(outputs.checkpoint_path, ckpt);
    write_loss_history(outputs.history_path, result.history);
    outputs.history = std::move(result.history);
    return outputs;
}

} // namespace

std::vector<TrainOutputs> cmd_train(const ExperimentConfig& cfg, bool also_large,
                                    const std::string& resume_from) {
    cfg.validate();
    const fs::path out(resolve_output_dir(cfg));
    const auto samples = read_dataset((out / "dataset").string());
    if (samples.empty()) throw ConfigError("train: dataset is empty");
    if (samples.front().obs.side != cfg.net.side)
        throw ConfigError("train: dataset patch side " +
                          std::to_string(samples.front().obs.side) +
                          " != net.side " + std::to_string(cfg.net.side));

    const auto [train_idx, test_idx] =
        split_indices(samples.size(), cfg.train_split, cfg.train.seed);
    if (train_idx.empty()) throw ConfigError("train: empty training split");
    std::vector<TrainSample> train_set;
    train_set.reserve(train_idx.size());
    for (std::size_t i : train_idx) train_set.push_back(to_train_sample(samples[i]));

    std::vector<TrainOutputs> outputs;
    outputs.push_back(train_one(cfg, cfg.net, train_set, "sensemap", resume_from));
    if (also_large) {
        NetConfig large = cfg.net;
        large.base *= 2;
        outputs.push_back(train_one(cfg, large, train_set, "sensemap_large", ""));
    }
    return outputs;
}

namespace {

struct EpisodeOutcome {
    int steps = 0;
    double distance = 0.0;
    double rho = 0.0;
    double ra = 0.0;
    bool ra_ok = false;
    Termination terminated = Termination::Complete;
    std::vector<std::pair<int, double>> curve;
};

double mean_of(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

ExploreReport cmd_explore(const ExperimentConfig& cfg,
                          const std::vector<std::string>& methods, int workers) {
    cfg.validate();
    if (methods.empty()) throw ConfigError("explore: no methods requested");
    if (cfg.net.side != 2 * cfg.sensor.range_L)
        throw ConfigError("explore: net.side must equal 2 * sensor.range_L");
    const std::vector<std::string> known{"frontier", "sensemap", "sensemap-large",
                                         "oracle", "identity"};
    for (const auto& m : methods)
        if (std::find(known.begin(), known.end(), m) == known.end())
            throw ConfigError("explore: unknown method '" + m + "'");

    const fs::path out(resolve_output_dir(cfg));
    ensure_dir(out / "explore");

    // Neural methods need their checkpoints up front.
    auto load_net = [&](const std::string& name) {
        const fs::path path = out / "checkpoints" / (name + ".ckpt");
        if (!fs::exists(path))
            throw ConfigError("explore: missing checkpoint " + path.string() +
                              " (run train first)");
        const Checkpoint ckpt = load_checkpoint(path.string());
        if (ckpt.config.side != cfg.net.side)
            throw ConfigError("explore: checkpoint side " +
                              std::to_string(ckpt.config.side) + " != net.side " +
                              std::to_string(cfg.net.side));
        return NetPredictor(ckpt.config, params_from_checkpoint(ckpt));
    };
    std::optional<NetPredictor> net_std, net_large;
    for (const auto& m : methods) {
        if (m == "sensemap" && !net_std) net_std.emplace(load_net("sensemap"));
        if (m == "sensemap-large" && !net_large)
            net_large.emplace(load_net("sensemap_large"));
    }

    // Worlds and shared start cells (same across methods for paired runs).
    std::vector<TrinaryMap> worlds;
    worlds.reserve(static_cast<std::size_t>(cfg.map_count));
    for (int m = 0; m < cfg.map_count; ++m) worlds.push_back(world_for(cfg, m));
    std::vector<Cell> starts(static_cast<std::size_t>(cfg.map_count * cfg.repeats));
    for (int m = 0; m < cfg.map_count; ++m) {
        for (int r = 0; r < cfg.repeats; ++r) {
            Rng rng(Rng::mix(cfg.seeds.front(),
                             7777ULL + 1009ULL * static_cast<std::uint64_t>(m) +
                                 static_cast<std::uint64_t>(r)));
            starts[static_cast<std::size_t>(m * cfg.repeats + r)] =
                random_free_cell(worlds[static_cast<std::size_t>(m)], rng);
        }
    }

    const CostWeights weights = cfg.cost.resolve(cfg.world.width);
    ExploreReport report;
    json jreport;
    jreport["config_hash"] = config_hash(cfg);
    jreport["methods"] = json::array();

    std::vector<PlotSeries> curve_series;

    for (const auto& method : methods) {
        ensure_dir(out / "explore" / method);
        const int n_episodes = cfg.map_count * cfg.repeats;
        std::vector<EpisodeOutcome> outcomes(static_cast<std::size_t>(n_episodes));

        parallel_for(n_episodes, workers, [&](int idx) {
            const int m = idx / cfg.repeats;
            const int r = idx % cfg.repeats;
            const TrinaryMap& truth = worlds[static_cast<std::size_t>(m)];
            const Cell start = starts[static_cast<std::size_t>(idx)];

            char trace_name[48];
            std::snprintf(trace_name, sizeof(trace_name), "m%03d_r%03d.jsonl", m, r);
            std::ofstream trace(out / "explore" / method / trace_name,
                                std::ios::trunc);
            TraceSink sink = [&](const StepTrace& t) {
                trace << trace_json_line(t) << "\n";
            };

            ExplorationResult res;
            if (method == "frontier") {
                res = run_frontier_baseline(truth, cfg.sensor, cfg.budget, start, sink);
            } else {
                const Predictor* pred = nullptr;
                IdentityPredictor identity;
                OraclePredictor oracle(truth);
                if (method == "identity") pred = &identity;
                else if (method == "oracle") pred = &oracle;
                else if (method == "sensemap") pred = &*net_std;
                else pred = &*net_large;
                res = run_exploration(truth, cfg.sensor, *pred, cfg.fusion, weights,
                                      cfg.budget, start, sink);
            }

            EpisodeOutcome& o = outcomes[static_cast<std::size_t>(idx)];
            o.steps = res.steps;
            o.distance = res.distance;
            o.terminated = res.terminated;
            o.curve = res.coverage_curve;
            o.rho = coverage_rho(res.final_map, truth);
            if (method != "frontier") {
                o.ra = reconstruction_accuracy(res.final_map, truth);
                o.ra_ok = true;
            }
        });

        MethodSummary summary;
        summary.method = method;
        summary.episodes = n_episodes;
        summary.ra_applicable = method != "frontier";
        std::vector<double> steps, dist, rho, ra;
        json jepisodes = json::array();
        std::size_t max_len = 0;
        for (int idx = 0; idx < n_episodes; ++idx) {
            const EpisodeOutcome& o = outcomes[static_cast<std::size_t>(idx)];
            steps.push_back(o.steps);
            dist.push_back(o.distance);
            rho.push_back(o.rho);
            if (o.ra_ok) ra.push_back(o.ra);
            if (o.terminated == Termination::Complete) ++summary.completed;
            max_len = std::max(max_len, o.curve.size());
            jepisodes.push_back({{"map", idx / cfg.repeats},
                                 {"repeat", idx % cfg.repeats},
                                 {"steps", o.steps},
                                 {"distance", o.distance},
                                 {"rho", o.rho},
                                 {"ra", o.ra_ok ? json(o.ra) : json()},
                                 {"terminated", termination_name(o.terminated)}});
        }
        summary.avg_steps = mean_of(steps);
        summary.median_steps = median_of(steps);
        summary.avg_distance = mean_of(dist);
        summary.avg_rho = mean_of(rho);
        summary.avg_ra = summary.ra_applicable ? mean_of(ra) : 0.0;
        report.methods.push_back(summary);

        // Mean coverage-vs-step curve; finished episodes hold their last rho.
        PlotSeries series;
        series.name = method;
        for (std::size_t s = 0; s < max_len; ++s) {
            double acc = 0.0;
            for (const auto& o : outcomes) {
                const auto& curve = o.curve;
                acc += s < curve.size() ? curve[s].second : curve.back().second;
            }
            series.points.push_back({static_cast<double>(s),
                                     acc / static_cast<double>(n_episodes)});
        }
        curve_series.push_back(std::move(series));

        json jm;
        jm["method"] = method;
        jm["episodes"] = jepisodes;
        jm["avg_steps"] = summary.avg_steps;
        jm["median_steps"] = summary.median_steps;
        jm["avg_distance"] = summary.avg_distance;
        jm["avg_rho"] = summary.avg_rho;
        jm["avg_ra"] = summary.ra_applicable ? json(summary.avg_ra) : json();
        jm["completed"] = summary.completed;
        jreport["methods"].push_back(jm);
    }

    // report.csv
    report.report_csv = (out / "explore" / "report.csv").string();
    {
        std::ofstream csv(report.report_csv, std::ios::trunc);
        if (!csv) throw IoError("explore: cannot open report.csv");
        csv << "method,episodes,avg_steps,median_steps,avg_distance,avg_rho,avg_ra,completed\n";
        char line[256];
        for (const auto& s : report.methods) {
            if (s.ra_applicable)
                std::snprintf(line, sizeof(line), "%s,%d,%.3f,%.1f,%.3f,%.4f,%.4f,%d\n",
                              s.method.c_str(), s.episodes, s.avg_steps, s.median_steps,
                              s.avg_distance, s.avg_rho, s.avg_ra, s.completed);
            else
                std::snprintf(line, sizeof(line), "%s,%d,%.3f,%.1f,%.3f,%.4f,n/a,%d\n",
                              s.method.c_str(), s.episodes, s.avg_steps, s.median_steps,
                              s.avg_distance, s.avg_rho, s.completed);
            csv << line;
        }
    }
    // report.json
    report.report_json = (out / "explore" / "report.json").string();
    {
        std::ofstream jf(report.report_json, std::ios::trunc);
        if (!jf) throw IoError("explore: cannot open report.json");
        jf << jreport.dump(2) << "\n";
    }
    // curves.csv
    report.curves_csv = (out / "explore" / "curves.csv").string();
    {
        std::ofstream cf(report.curves_csv, std::ios::trunc);
        if (!cf) throw IoError("explore: cannot open curves.csv");
        cf << "step";
        for (const auto& s : curve_series) cf << "," << s.name;
        cf << "\n";
        std::size_t max_len = 0;
        for (const auto& s : curve_series) max_len = std::max(max_len, s.points.size());
        char num[32];
        for (std::size_t i = 0; i < max_len; ++i) {
            cf << i;
            for (const auto& s : curve_series) {
                const double v =
                    i < s.points.size() ? s.points[i].second : s.points.back().second;
                std::snprintf(num, sizeof(num), ",%.6f", v);
                cf << num;
            }
            cf << "\n";
        }
    }
    // curves.svg
    report.curves_svg = (out / "explore" / "curves.svg").string();
    write_line_chart(report.curves_svg, "Exploration coverage over time", "step",
                     "coverage rho", curve_series);

    return report;
}

EvalReport cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                    const std::string& dataset_dir) {
    cfg.validate();
    const auto samples = read_dataset(dataset_dir);
    if (samples.empty()) throw ConfigError("eval: dataset is empty");

    const auto [train_idx, test_idx] =
        split_indices(samples.size(), cfg.train_split, cfg.train.seed);
    if (test_idx.empty()) throw ConfigError("eval: empty held-out split");

    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const NetPredictor net(ckpt.config, params_from_checkpoint(ckpt));
    std::string model_name = "sensemap";
    if (const auto it = ckpt.meta.find("model"); it != ckpt.meta.end())
        model_name = it->second;

    const FeatureNet phi(cfg.phi_seed);
    const IdentityPredictor identity;

    struct Accum {
        std::vector<double> ssim, lpips;
        std::vector<std::vector<double>> feats;
    };
    Accum acc_net, acc_id;
    std::vector<std::vector<double>> feats_gt;

    for (const std::size_t i : test_idx) {
        const DatasetSample& s = samples[i];
        if (s.obs.side != ckpt.config.side)
            throw ConfigError("eval: sample side != checkpoint side");
        const Tensor gt_img = image_from_trinary(s.gt);
        auto eval_one = [&](const Predictor& p, Accum& acc) {
            const Tensor pred_img = image_from_prob(p.predict(s.obs));
            acc.ssim.push_back(ssim(pred_img, gt_img));
            acc.lpips.push_back(plpips(phi, pred_img, gt_img));
            acc.feats.push_back(pooled_features(phi, pred_img));
        };
        eval_one(net, acc_net);
        eval_one(identity, acc_id);
        feats_gt.push_back(pooled_features(phi, gt_img));
    }

    auto make_row = [&](const std::string& name, const Accum& acc) {
        EvalRow row;
        row.model = name;
        row.samples = static_cast<int>(acc.ssim.size());
        row.mean_ssim = mean_of(acc.ssim);
        row.mean_plpips = mean_of(acc.lpips);
        try {
            row.pfid = pfid(acc.feats, feats_gt);
        } catch (const DomainError&) {
            row.pfid = std::nullopt; // held-out set smaller than dim+1
        }
        return row;
    };

    EvalReport report;
    report.rows.push_back(make_row(model_name, acc_net));
    report.rows.push_back(make_row("identity", acc_id));

    const fs::path out(resolve_output_dir(cfg));
    ensure_dir(out);
    report.report_path = (out / "eval_report.json").string();
    json j;
    j["config_hash"] = config_hash(cfg);
    j["phi_seed"] = cfg.phi_seed;
    j["checkpoint"] = fs::path(checkpoint_path).filename().string();
    j["held_out_samples"] = test_idx.size();
    j["rows"] = json::array();
    for (const auto& row : report.rows) {
        j["rows"].push_back({{"model", row.model},
                             {"mean_ssim", row.mean_ssim},
                             {"mean_plpips", row.mean_plpips},
                             {"pfid", row.pfid ? json(*row.pfid) : json()},
                             {"samples", row.samples}});
    }
    std::ofstream jf(report.report_path, std::ios::trunc);
    if (!jf) throw IoError("eval: cannot open " + report.report_path);
    jf << j.dump(2) << "\n";
    return report;
}

} // namespace sensemap
