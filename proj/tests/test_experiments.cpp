#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "sensemap/checkpoint.hpp"
#include "sensemap/experiments.hpp"
#include "sensemap/image_io.hpp"
#include "support/test_util.hpp"

using namespace sensemap;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(const std::string& out) {
    ExperimentConfig cfg;
    cfg.world = FloorplanConfig{40, 40, 3, 4, 1, 91};
    cfg.map_count = 2;
    cfg.sensor = SensorSpec{8, 120};
    cfg.net = NetConfig{16, 2, 4, 1, 2, 2};
    cfg.train.epochs = 2;
    cfg.train.batch_size = 4;
    cfg.train.seed = 5;
    cfg.budget = 800;
    cfg.repeats = 1;
    cfg.data_stride = 6;
    cfg.episodes_per_map = 1;
    cfg.seeds = {11};
    cfg.output_dir = out;
    return cfg;
}

} // namespace

TEST_CASE("config JSON round trip and version check") {
    ExperimentConfig cfg = small_config("x");
    cfg.fusion.alpha = 0.3;
    cfg.cost.w_dis = 0.25;
    const std::string text = config_to_json(cfg);
    const ExperimentConfig back = parse_config(text);
    CHECK(config_to_json(back) == text);
    CHECK(back.fusion.alpha == 0.3);
    CHECK(back.cost.w_dis == 0.25);

    CHECK_THROWS_AS(parse_config("{\"version\": 2}"), ConfigError);
    CHECK_THROWS_AS(parse_config("not json"), ConfigError);
}

TEST_CASE("config hash ignores the output directory but not the seeds") {
    ExperimentConfig a = small_config("outA");
    ExperimentConfig b = small_config("outB");
    CHECK(config_hash(a) == config_hash(b));
    b.seeds = {12};
    CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("config validation rejects nonsense") {
    ExperimentConfig cfg = small_config("x");
    cfg.seeds.clear();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config("x");
    cfg.episodes_per_map = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config("x");
    cfg.train_split = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("output root environment override") {
    ExperimentConfig cfg = small_config("rel");
    ::setenv("SENSEMAP_OUT_ROOT", "/tmp/smroot", 1);
    CHECK(resolve_output_dir(cfg) == "/tmp/smroot/rel");
    cfg.output_dir = "/abs/path";
    CHECK(resolve_output_dir(cfg) == "/abs/path");
    ::unsetenv("SENSEMAP_OUT_ROOT");
    cfg.output_dir = "rel";
    CHECK(resolve_output_dir(cfg) == "rel");
}

TEST_CASE("gen-worlds writes a verifiable manifest; tampering is detected") {
    testutil::TempDir tmp("worlds");
    ExperimentConfig cfg = small_config(tmp.str());
    cmd_gen_worlds(cfg);

    const auto worlds = load_worlds(tmp.str() + "/worlds");
    REQUIRE(worlds.size() == 2);
    for (const auto& [seed, map] : worlds) {
        CHECK(map.height() == 40);
        CHECK(map.is_binary());
    }

    // rerun is byte-identical
    const auto bytes_before = read_file(tmp.str() + "/worlds/map_000.png");
    cmd_gen_worlds(cfg);
    CHECK(read_file(tmp.str() + "/worlds/map_000.png") == bytes_before);

    // tamper with a map file: hash check must fire
    const TrinaryMap fake = testutil::open_room(40, 40);
    write_gt_image(tmp.str() + "/worlds/map_000.png", fake);
    CHECK_THROWS_AS(load_worlds(tmp.str() + "/worlds"), FormatError);
}

TEST_CASE("gen-data requires worlds and regenerates identically") {
    testutil::TempDir tmp("data");
    ExperimentConfig cfg = small_config(tmp.str());
    CHECK_THROWS_AS(cmd_gen_data(cfg), ConfigError); // no worlds yet

    cmd_gen_worlds(cfg);
    const DatasetStats stats = cmd_gen_data(cfg);
    CHECK(stats.sample_count > 0);

    const auto index1 = read_file(tmp.str() + "/dataset/index.json");
    const auto obs1 = read_file(tmp.str() + "/dataset/obs/000000.png");
    cmd_gen_data(cfg);
    CHECK(read_file(tmp.str() + "/dataset/index.json") == index1);
    CHECK(read_file(tmp.str() + "/dataset/obs/000000.png") == obs1);
}

TEST_CASE("split_indices honors the fraction to within one sample") {
    for (std::size_t n : {16UL, 17UL, 100UL}) {
        const auto [train, test] = split_indices(n, 0.75, 9);
        CHECK(train.size() + test.size() == n);
        CHECK(std::abs(static_cast<double>(train.size()) - 0.75 * static_cast<double>(n)) <= 1.0);
        // disjoint
        std::vector<char> seen(n, 0);
        for (auto i : train) seen[i] = 1;
        for (auto i : test) CHECK(!seen[i]);
    }
}

TEST_CASE("checkpoint round trip preserves params, adam state, and meta") {
    const NetConfig cfg{16, 2, 4, 1, 2, 2};
    const NetParams params = init_params(cfg, 31);
    AdamState opt = AdamState::zeros(cfg);
    opt.step = 7;
    opt.m.out_b[0] = 0.25;

    testutil::TempDir tmp("ckpt");
    const std::string path = tmp.str() + "/model.ckpt";
    Checkpoint ckpt = make_train_checkpoint(cfg, params, opt, 4);
    ckpt.meta["model"] = "sensemap";
    save_checkpoint(path, ckpt);

    const Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.config == cfg);
    CHECK(loaded.meta.at("model") == "sensemap");
    CHECK(loaded.meta.at("next_epoch") == "4");

    const NetParams back = params_from_checkpoint(loaded);
    bool same = true;
    std::vector<const Tensor*> lhs, rhs;
    params.for_each([&](const std::string&, const Tensor& t) { lhs.push_back(&t); });
    back.for_each([&](const std::string&, const Tensor& t) { rhs.push_back(&t); });
    for (std::size_t i = 0; i < lhs.size(); ++i)
        if (lhs[i]->raw() != rhs[i]->raw()) same = false;
    CHECK(same);

    const AdamState opt_back = adam_from_checkpoint(loaded);
    CHECK(opt_back.step == 7);
    CHECK(opt_back.m.out_b[0] == 0.25);

    CHECK_THROWS_AS(load_checkpoint(tmp.str() + "/missing.ckpt"), IoError);
    std::ofstream junk(tmp.str() + "/junk.ckpt");
    junk << "not a checkpoint";
    junk.close();
    CHECK_THROWS_AS(load_checkpoint(tmp.str() + "/junk.ckpt"), FormatError);
}

TEST_CASE("full pipeline: train, explore, eval") {
    testutil::TempDir tmp("pipe");
    ExperimentConfig cfg = small_config(tmp.str());
    cmd_gen_worlds(cfg);
    cmd_gen_data(cfg);

    const auto outputs = cmd_train(cfg, /*also_large=*/true);
    REQUIRE(outputs.size() == 2);
    CHECK(fs::exists(outputs[0].checkpoint_path));
    CHECK(fs::exists(outputs[1].checkpoint_path));
    CHECK(outputs[0].history.size() == 2);

    // resume reproduces the tail losses
    {
        ExperimentConfig first = cfg;
        first.train.epochs = 1;
        first.train.split_epoch = 1;
        testutil::TempDir tmp2("pipe_resume");
        ExperimentConfig cfg2 = first;
        cfg2.output_dir = tmp2.str();
        fs::create_directories(fs::path(tmp2.str()));
        fs::create_directories(fs::path(tmp2.str()) / "worlds");
        fs::copy(fs::path(tmp.str()) / "worlds", fs::path(tmp2.str()) / "worlds",
                 fs::copy_options::recursive | fs::copy_options::overwrite_existing);
        fs::create_directories(fs::path(tmp2.str()) / "dataset");
        fs::copy(fs::path(tmp.str()) / "dataset", fs::path(tmp2.str()) / "dataset",
                 fs::copy_options::recursive | fs::copy_options::overwrite_existing);
        const auto half = cmd_train(cfg2, false);
        ExperimentConfig full = cfg2;
        full.train.epochs = 2;
        full.train.split_epoch = 1;
        const auto resumed = cmd_train(full, false, half[0].checkpoint_path);
        REQUIRE(resumed[0].history.size() == 1);
        // epoch 2 of the resumed run equals epoch 2 of a fresh 2-epoch run
        ExperimentConfig fresh = full;
        const auto whole = cmd_train(fresh, false);
        CHECK(resumed[0].history[0].mean_hybrid == whole[0].history[1].mean_hybrid);
    }

    const auto report =
        cmd_explore(cfg, {"frontier", "identity", "oracle", "sensemap"}, 2);
    REQUIRE(report.methods.size() == 4);
    CHECK(report.methods[0].method == "frontier");
    CHECK(!report.methods[0].ra_applicable); // RA is n/a for the baseline
    CHECK(report.methods[2].ra_applicable);
    CHECK(fs::exists(report.report_csv));
    CHECK(fs::exists(report.report_json));
    CHECK(fs::exists(report.curves_csv));
    CHECK(fs::exists(report.curves_svg));
    {
        std::ifstream csv(report.report_csv);
        std::string header;
        std::getline(csv, header);
        CHECK(header ==
              "method,episodes,avg_steps,median_steps,avg_distance,avg_rho,avg_ra,completed");
        std::string frontier_row;
        std::getline(csv, frontier_row);
        CHECK(frontier_row.find("n/a") != std::string::npos);
    }

    // identical seeds -> identical reports
    const auto rerun =
        cmd_explore(cfg, {"frontier", "identity", "oracle", "sensemap"}, 1);
    CHECK(read_file(report.report_json) == read_file(rerun.report_json));

    const auto eval = cmd_eval(cfg, outputs[0].checkpoint_path, tmp.str() + "/dataset");
    REQUIRE(eval.rows.size() == 2);
    CHECK(eval.rows[0].model == "sensemap");
    CHECK(eval.rows[1].model == "identity");
    CHECK(eval.rows[1].mean_ssim > 0.0);
    CHECK(fs::exists(eval.report_path));
    {
        std::ifstream jf(eval.report_path);
        std::string text((std::istreambuf_iterator<char>(jf)),
                         std::istreambuf_iterator<char>());
        CHECK(text.find("config_hash") != std::string::npos);
        CHECK(text.find("phi_seed") != std::string::npos);
    }

    // missing checkpoint for a neural method is a config error
    ExperimentConfig bare = cfg;
    testutil::TempDir tmp3("bare");
    bare.output_dir = tmp3.str();
    CHECK_THROWS_AS(cmd_explore(bare, {"sensemap"}, 1), ConfigError);
}

TEST_CASE("explore validates method names and config coherence") {
    testutil::TempDir tmp("badcfg");
    ExperimentConfig cfg = small_config(tmp.str());
    CHECK_THROWS_AS(cmd_explore(cfg, {"warp-drive"}, 1), ConfigError);
    cfg.net.side = 32; // != 2 * range_L
    CHECK_THROWS_AS(cmd_explore(cfg, {"frontier"}, 1), ConfigError);
}
