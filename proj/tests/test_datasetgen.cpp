#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sensemap/datasetgen.hpp"
#include "sensemap/image_io.hpp"
#include "support/test_util.hpp"

using namespace sensemap;

namespace {

TrinaryMap two_room_map() {
    TrinaryMap m(32, 32, CellState::Obstacle);
    for (int r = 1; r < 31; ++r)
        for (int c = 1; c < 31; ++c)
            if (c != 16) m(r, c) = CellState::Free;
    for (int r = 1; r < 31; ++r)
        if (r != 16) m(r, 16) = CellState::Obstacle;
    m(16, 16) = CellState::Free;
    return m;
}

} // namespace

TEST_CASE("fully observed window: sample equals the gt crop with no uncertainty") {
    const TrinaryMap truth = two_room_map();
    // saturated observation: observed == truth, window fully interior
    DatasetSample s;
    s.obs = crop_local(truth, Cell{8, 8}, 4);
    s.gt = crop_local(truth, Cell{8, 8}, 4, CellState::Obstacle).cells;
    s.robot_local = Cell{4, 4};
    CHECK(s.obs.cells == s.gt);
    CHECK(s.obs.cells.count(CellState::Uncertain) == 0);
    CHECK_NOTHROW(validate_sample(s));
}

TEST_CASE("collect_episode: cadence, step-0 initial condition, and consistency") {
    const TrinaryMap truth = two_room_map();
    const SensorSpec spec{4, 180};
    const auto samples =
        collect_episode(truth, spec, frontier_policy(), 5, Cell{8, 8}, 3, 2000);
    REQUIRE(!samples.empty());

    // stride cadence
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(samples[i].step == static_cast<int>(i) * 5);
        CHECK(samples[i].map_id == 3);
    }

    // step-0 sample: cells beyond the first scan's reach remain Uncertain
    const DatasetSample& first = samples.front();
    CHECK(first.step == 0);
    CHECK(first.obs.cells.count(CellState::Uncertain) > 0);

    // cell-wise consistency oracle on every sample
    for (const auto& s : samples) {
        CHECK_NOTHROW(validate_sample(s));
        CHECK(s.gt.is_binary());
        for (int r = 0; r < s.obs.side; ++r)
            for (int c = 0; c < s.obs.side; ++c) {
                const CellState o = s.obs.cells(r, c);
                if (o != CellState::Uncertain) CHECK(o == s.gt(r, c));
            }
    }
}

TEST_CASE("collect_episode rejects bad starts and strides") {
    const TrinaryMap truth = two_room_map();
    const SensorSpec spec{4, 90};
    CHECK_THROWS_AS(collect_episode(truth, spec, frontier_policy(), 0, Cell{8, 8}, 0, 10),
                    DomainError);
    CHECK_THROWS_AS(
        collect_episode(truth, spec, frontier_policy(), 1, Cell{0, 0}, 0, 10),
        EpisodeError);
}

TEST_CASE("coverage is positive after the first scan") {
    const TrinaryMap truth = two_room_map();
    const auto samples =
        collect_episode(truth, SensorSpec{4, 180}, frontier_policy(), 3, Cell{8, 8}, 0, 500);
    for (const auto& s : samples) {
        const int gt_free = s.gt.count(CellState::Free);
        const int obs_free = s.obs.cells.count(CellState::Free);
        if (gt_free == 0) continue;
        const double cov = static_cast<double>(obs_free) / gt_free;
        CHECK(cov > 0.0);
        CHECK(cov <= 1.0);
    }
}

TEST_CASE("compute_stats arithmetic") {
    // single sample: 4x4 obs with 8 free px, gt with 16 free px
    DatasetSample s;
    s.obs.side = 4;
    s.obs.cells = TrinaryMap(4, 4, CellState::Uncertain);
    for (int i = 0; i < 8; ++i) s.obs.cells(i / 4, i % 4) = CellState::Free;
    s.gt = TrinaryMap(4, 4, CellState::Free);
    s.robot_local = Cell{2, 2};

    const DatasetStats one = compute_stats({s});
    CHECK(one.coverage.mean == doctest::Approx(0.5));
    CHECK(one.obs_free.mean == doctest::Approx(8.0));
    CHECK(one.gt_free.mean == doctest::Approx(16.0));
    CHECK(one.sample_count == 1);

    // duplicated sample: zero spread, var = std^2
    const DatasetStats two = compute_stats({s, s});
    CHECK(two.coverage.std == 0.0);
    CHECK(two.coverage.var == 0.0);
    CHECK(two.obs_free.min == two.obs_free.max);
    CHECK(two.obs_free.var == doctest::Approx(two.obs_free.std * two.obs_free.std));

    CHECK_THROWS_AS(compute_stats({}), DomainError);
}

TEST_CASE("stats aggregate invariants on collected data") {
    const TrinaryMap truth = two_room_map();
    const auto samples =
        collect_episode(truth, SensorSpec{4, 180}, frontier_policy(), 2, Cell{8, 8}, 0, 800);
    const DatasetStats stats = compute_stats(samples);
    for (const Aggregate* a : {&stats.obs_free, &stats.obs_uncertain, &stats.obs_obstacle,
                               &stats.gt_free, &stats.gt_obstacle, &stats.coverage}) {
        CHECK(a->min <= a->mean + 1e-12);
        CHECK(a->mean <= a->max + 1e-12);
        CHECK(a->var == doctest::Approx(a->std * a->std).epsilon(1e-12));
    }
}

TEST_CASE("write/read round trip preserves samples byte for byte") {
    const TrinaryMap truth = two_room_map();
    const auto samples =
        collect_episode(truth, SensorSpec{4, 180}, frontier_policy(), 5, Cell{8, 8}, 1, 600);
    REQUIRE(!samples.empty());

    testutil::TempDir tmp("dataset");
    write_dataset(samples, tmp.str(), {42, 43}, "7");
    const auto loaded = read_dataset(tmp.str());
    REQUIRE(loaded.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(loaded[i].obs.cells == samples[i].obs.cells);
        CHECK(loaded[i].obs.origin == samples[i].obs.origin);
        CHECK(loaded[i].gt == samples[i].gt);
        CHECK(loaded[i].map_id == samples[i].map_id);
        CHECK(loaded[i].step == samples[i].step);
    }

    // regeneration determinism: the same episode writes identical bytes
    testutil::TempDir tmp2("dataset2");
    const auto samples2 =
        collect_episode(truth, SensorSpec{4, 180}, frontier_policy(), 5, Cell{8, 8}, 1, 600);
    write_dataset(samples2, tmp2.str(), {42, 43}, "7");
    for (const char* rel : {"index.json", "obs/000000.png", "gt/000000.png"}) {
        const auto a = read_file(tmp.str() + "/" + rel);
        const auto b = read_file(tmp2.str() + "/" + rel);
        CHECK(a == b);
    }
}

TEST_CASE("read_dataset reports missing and malformed files") {
    const TrinaryMap truth = two_room_map();
    const auto samples =
        collect_episode(truth, SensorSpec{4, 90}, frontier_policy(), 10, Cell{8, 8}, 0, 300);
    REQUIRE(!samples.empty());

    {
        testutil::TempDir tmp("broken1");
        write_dataset(samples, tmp.str(), {1});
        std::filesystem::remove(tmp.path() / "obs" / "000000.png");
        CHECK_THROWS_AS(read_dataset(tmp.str()), IoError);
    }
    {
        testutil::TempDir tmp("broken2");
        write_dataset(samples, tmp.str(), {1});
        // swap in a single-channel image where a 3-channel one belongs
        const TrinaryMap gray(samples.front().obs.side, samples.front().obs.side,
                              CellState::Free);
        write_gt_image((tmp.path() / "obs" / "000000.png").string(), gray);
        CHECK_THROWS_AS(read_dataset(tmp.str()), FormatError);
    }
    CHECK_THROWS_AS(read_dataset("/nonexistent/nope"), IoError);
}

TEST_CASE("to_train_sample encodes observation and target") {
    const TrinaryMap truth = two_room_map();
    DatasetSample s;
    s.obs = crop_local(truth, Cell{8, 8}, 8);
    s.gt = crop_local(truth, Cell{8, 8}, 8, CellState::Obstacle).cells;
    const TrainSample t = to_train_sample(s);
    CHECK(t.x.shape() == std::vector<int>{3, 16, 16});
    CHECK(t.gt.shape() == std::vector<int>{1, 16, 16});
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c)
            CHECK(t.gt[static_cast<std::size_t>(r) * 16 + c] ==
                  (s.gt(r, c) == CellState::Obstacle ? 1.0 : 0.0));
}
