#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "sensemap/image_io.hpp"
#include "sensemap/simworld.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace sensemap;

namespace {

std::set<std::pair<int, int>> cell_set(const std::vector<Cell>& cells) {
    std::set<std::pair<int, int>> out;
    for (Cell c : cells) out.insert({c.row, c.col});
    return out;
}

} // namespace

TEST_CASE("floorplan generation is deterministic and well-formed") {
    FloorplanConfig cfg;
    cfg.width = 64;
    cfg.height = 48;
    cfg.seed = 1234;
    const TrinaryMap a = generate_floorplan(cfg);
    const TrinaryMap b = generate_floorplan(cfg);
    CHECK(a == b);

    // binary map, obstacle border
    CHECK(a.is_binary());
    for (int c = 0; c < a.width(); ++c) {
        CHECK(a(0, c) == CellState::Obstacle);
        CHECK(a(a.height() - 1, c) == CellState::Obstacle);
    }
    for (int r = 0; r < a.height(); ++r) {
        CHECK(a(r, 0) == CellState::Obstacle);
        CHECK(a(r, a.width() - 1) == CellState::Obstacle);
    }
}

TEST_CASE("floorplan free space is 4-connected (flood-fill oracle)") {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        FloorplanConfig cfg;
        cfg.seed = seed;
        const TrinaryMap m = generate_floorplan(cfg);
        CHECK(oracles::all_free_connected(m));
        CHECK(m.count(CellState::Free) > 0);
    }
}

TEST_CASE("floorplan config validation") {
    FloorplanConfig cfg;
    cfg.width = 16; // below minimum
    CHECK_THROWS_AS(generate_floorplan(cfg), ConfigError);
    cfg = FloorplanConfig{};
    cfg.min_rooms = 0;
    CHECK_THROWS_AS(generate_floorplan(cfg), ConfigError);
    // unsatisfiable: far more rooms than a 32x32 interior can hold
    cfg = FloorplanConfig{};
    cfg.width = 32;
    cfg.height = 32;
    cfg.min_rooms = 60;
    cfg.max_rooms = 60;
    CHECK_THROWS_AS(generate_floorplan(cfg), GenerationError);
}

TEST_CASE("floorplans load back from gt images") {
    testutil::TempDir tmp("worlds");
    FloorplanConfig cfg;
    cfg.seed = 5;
    const TrinaryMap m = generate_floorplan(cfg);
    write_gt_image(tmp.str() + "/w.png", m);
    CHECK(load_floorplan(tmp.str() + "/w.png") == m);
}

TEST_CASE("cast_beam: open corridor east") {
    TrinaryMap m(3, 12, CellState::Free);
    const BeamResult beam = cast_beam(m, Cell{1, 2}, 0.0, 5);
    CHECK(!beam.hit);
    // hand enumeration: five cells east of the origin
    const std::vector<Cell> expect{{1, 3}, {1, 4}, {1, 5}, {1, 6}, {1, 7}};
    CHECK(cell_set(beam.covered) == cell_set(expect));
}

TEST_CASE("cast_beam: wall three cells east") {
    TrinaryMap m(3, 12, CellState::Free);
    m(1, 5) = CellState::Obstacle; // three cells east of (1,2)
    const BeamResult beam = cast_beam(m, Cell{1, 2}, 0.0, 5);
    REQUIRE(beam.hit.has_value());
    CHECK(*beam.hit == Cell{1, 5});
    const std::vector<Cell> expect{{1, 3}, {1, 4}};
    CHECK(cell_set(beam.covered) == cell_set(expect));
}

TEST_CASE("cast_beam: adjacent wall at range 1") {
    TrinaryMap m(3, 3, CellState::Free);
    m(1, 2) = CellState::Obstacle;
    const BeamResult beam = cast_beam(m, Cell{1, 1}, 0.0, 1);
    CHECK(beam.covered.empty());
    REQUIRE(beam.hit.has_value());
    CHECK(*beam.hit == Cell{1, 2});
}

TEST_CASE("cast_beam: range bound is euclidean between centers") {
    TrinaryMap m(21, 21, CellState::Free);
    const double angle = std::atan2(1.0, 1.0); // 45 degrees
    const BeamResult beam = cast_beam(m, Cell{10, 10}, angle, 5);
    for (Cell c : beam.covered) {
        const long dr = c.row - 10, dc = c.col - 10;
        CHECK(dr * dr + dc * dc <= 25);
    }
    CHECK(!beam.covered.empty());
}

TEST_CASE("cast_beam rejects non-free origin") {
    TrinaryMap m(3, 3, CellState::Obstacle);
    CHECK_THROWS_AS(cast_beam(m, Cell{1, 1}, 0.0, 2), DomainError);
}

TEST_CASE("sense_and_update: small open room fully revealed") {
    // 5x5 walls around a 3x3 free room; everything within range 3.
    const TrinaryMap truth = testutil::open_room(5, 5);
    TrinaryMap observed(5, 5);
    RobotState robot{Cell{2, 2}, 0.0, 0};
    SensorSpec spec{3, 360};
    const int revealed = sense_and_update(truth, observed, robot, spec);

    // independent visibility count: in a convex open room every cell within
    // Euclidean range is revealed (8 free neighbors + robot cell + every wall
    // cell within range 3)
    int expect = 0;
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c) {
            const int dr = r - 2, dc = c - 2;
            if (dr * dr + dc * dc <= 9) ++expect;
        }
    CHECK(revealed == expect);
    for (int r = 1; r < 4; ++r)
        for (int c = 1; c < 4; ++c) CHECK(observed(r, c) == CellState::Free);

    // idempotence
    CHECK(sense_and_update(truth, observed, robot, spec) == 0);
}

TEST_CASE("sense_and_update with four beams equals the union of four casts") {
    // plus-shaped corridors so the axis beams are the only informative ones
    TrinaryMap truth(11, 11, CellState::Obstacle);
    for (int i = 1; i < 10; ++i) {
        truth(5, i) = CellState::Free;
        truth(i, 5) = CellState::Free;
    }
    TrinaryMap observed(11, 11);
    RobotState robot{Cell{5, 5}, 0.0, 0};
    SensorSpec spec{4, 4};
    sense_and_update(truth, observed, robot, spec);

    TrinaryMap expect(11, 11);
    expect.set(Cell{5, 5}, CellState::Free);
    const double tau = 6.283185307179586;
    for (int i = 0; i < 4; ++i) {
        const BeamResult beam = cast_beam(truth, Cell{5, 5}, tau * i / 4.0, 4);
        for (Cell c : beam.covered) expect.set(c, CellState::Free);
        if (beam.hit) expect.set(*beam.hit, CellState::Obstacle);
    }
    CHECK(observed == expect);
}

TEST_CASE("sense_and_update validates shapes and robot cell") {
    const TrinaryMap truth = testutil::open_room(8, 8);
    TrinaryMap observed(8, 9);
    SensorSpec spec{3, 90};
    CHECK_THROWS_AS(sense_and_update(truth, observed, RobotState{Cell{2, 2}, 0, 0}, spec),
                    DomainError);
    TrinaryMap ok(8, 8);
    CHECK_THROWS_AS(sense_and_update(truth, ok, RobotState{Cell{0, 0}, 0, 0}, spec),
                    DomainError);
}

TEST_CASE("sensing invariants over randomized worlds") {
    Rng rng(2024);
    for (int trial = 0; trial < 40; ++trial) {
        FloorplanConfig cfg;
        cfg.width = 48;
        cfg.height = 48;
        cfg.seed = rng.next_u64();
        const TrinaryMap truth = generate_floorplan(cfg);
        TrinaryMap observed(48, 48);
        SensorSpec spec{static_cast<int>(rng.uniform_int(2, 8)), 360};

        for (int step = 0; step < 5; ++step) {
            // random free start
            Cell robot{0, 0};
            do {
                robot = Cell{static_cast<int>(rng.uniform_int(0, 47)),
                             static_cast<int>(rng.uniform_int(0, 47))};
            } while (truth.at(robot) != CellState::Free);

            const TrinaryMap before = observed;
            sense_and_update(truth, observed, RobotState{robot, 0.0, 0}, spec);
            for (int r = 0; r < 48; ++r) {
                for (int c = 0; c < 48; ++c) {
                    const CellState now = observed(r, c);
                    const CellState was = before(r, c);
                    // never contradict truth
                    if (now != CellState::Uncertain) CHECK(now == truth(r, c));
                    // never un-observe
                    if (was != CellState::Uncertain) CHECK(now == was);
                    // range bound
                    const long dr = r - robot.row, dc = c - robot.col;
                    if (dr * dr + dc * dc > static_cast<long>(spec.range_L) * spec.range_L)
                        CHECK(now == was);
                }
            }
        }
    }
}

TEST_CASE("sensing is independent of robot orientation") {
    const TrinaryMap truth = testutil::open_room(16, 16);
    SensorSpec spec{5, 360};
    TrinaryMap obs_a(16, 16), obs_b(16, 16);
    sense_and_update(truth, obs_a, RobotState{Cell{8, 8}, 0.0, 0}, spec);
    sense_and_update(truth, obs_b, RobotState{Cell{8, 8}, 2.1, 7}, spec);
    CHECK(obs_a == obs_b);
}
