// Acceptance suite: every criterion prints one PASS/FAIL line with its
// measured evidence and wall time. Exit code 0 when all pass, 3 otherwise.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "sensemap/checkpoint.hpp"
#include "sensemap/datasetgen.hpp"
#include "sensemap/experiments.hpp"
#include "sensemap/explorer.hpp"
#include "sensemap/image_io.hpp"
#include "sensemap/metrics.hpp"
#include "sensemap/simworld.hpp"
#include "sensemap/training.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace sensemap;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double now_seconds() {
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), pattern, a, b, c);
    return buf;
}

// 1. A* path cost equals Dijkstra exactly on 100 seeded random 32x32 maps.
Outcome criterion_astar() {
    Rng rng(20240001);
    int compared = 0, maps = 0;
    while (maps < 100) {
        const TrinaryMap m = testutil::random_binary(32, 32, rng, 0.3);
        const Cell start{static_cast<int>(rng.uniform_int(0, 31)),
                         static_cast<int>(rng.uniform_int(0, 31))};
        const Cell goal{static_cast<int>(rng.uniform_int(0, 31)),
                        static_cast<int>(rng.uniform_int(0, 31))};
        if (m.at(start) != CellState::Free || m.at(goal) != CellState::Free) continue;
        ++maps;
        const auto oracle = oracles::dijkstra_cost(m, start, goal);
        if (!oracle) {
            try {
                astar(m, start, goal);
                return {false, "astar found a path where dijkstra found none"};
            } catch (const PathNotFoundError&) {
                continue;
            }
        }
        const auto path = astar(m, start, goal);
        if (!(path_cost(path) == *oracle))
            return {false, "cost mismatch on map " + std::to_string(maps)};
        ++compared;
    }
    return {true, std::to_string(maps) + " maps, " + std::to_string(compared) +
                      " reachable pairs, all costs exact"};
}

// 2. Frontier extraction equals the brute-force definition on 200 maps.
Outcome criterion_frontiers() {
    Rng rng(20240002);
    for (int trial = 0; trial < 200; ++trial) {
        ProbMap p(32, 32);
        for (int r = 0; r < 32; ++r)
            for (int c = 0; c < 32; ++c) p(r, c) = rng.uniform();
        const Cell robot{static_cast<int>(rng.uniform_int(0, 31)),
                         static_cast<int>(rng.uniform_int(0, 31))};
        p(robot.row, robot.col) = 0.02;
        const TrinaryMap classified = trinary_from_prob(p, 0.1, 0.5);

        std::set<std::pair<int, int>> got;
        for (Cell c : extract_frontiers(p, robot, 0.1, 0.5)) got.insert({c.row, c.col});
        if (got != oracles::frontier_brute(classified, robot))
            return {false, "set mismatch on trial " + std::to_string(trial)};
    }
    return {true, "200 maps, frontier sets exactly equal"};
}

// 3. Analytic gradients vs 5-point central differences, full parameter sweep
//    on NetConfig(S=16, p=4, b=2, depth=1, heads=2), 3 seeds, w = (10, 1).
Outcome criterion_gradients() {
    NetConfig cfg;
    cfg.side = 16;
    cfg.patch = 4;
    cfg.base = 2;
    cfg.depth = 1;
    cfg.heads = 2;
    double worst = 0.0;
    std::string worst_at;
    std::int64_t total = 0;
    for (std::uint64_t seed : {101ULL, 202ULL, 303ULL}) {
        auto problem = gradcheck::make_problem(cfg, seed);
        problem.w = LossWeights{10.0, 1.0};
        const auto res = gradcheck::sweep(problem, 1);
        total += res.checked;
        if (res.max_rel > worst) {
            worst = res.max_rel;
            worst_at = res.worst_name + " (seed " + std::to_string(seed) + ")";
        }
        if (res.dirty != 0)
            return {false, "unresolvable FD stencils at seed " + std::to_string(seed)};
    }
    return {worst < 1e-6, fmt("max rel err %.3g (tol 1e-6) over ", worst) +
                              std::to_string(total) + " params, worst at " + worst_at};
}

// 4. Metric fidelity: SSIM self/oracle, pFID closed form, rho/RA hand counts.
Outcome criterion_metrics() {
    Rng rng(20240004);
    // SSIM(x, x) = 1 +- 1e-12
    for (int i = 0; i < 5; ++i) {
        Tensor x({24, 24});
        for (std::size_t k = 0; k < x.size(); ++k) x[k] = rng.uniform();
        if (std::abs(ssim(x, x) - 1.0) > 1e-12)
            return {false, "ssim(x,x) deviates from 1"};
    }
    // SSIM equals the naive windowed oracle within 1e-9 on 50 random pairs
    SsimConfig scfg;
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        Tensor x({20, 20}), y({20, 20});
        for (std::size_t k = 0; k < x.size(); ++k) x[k] = rng.uniform();
        for (std::size_t k = 0; k < y.size(); ++k) y[k] = rng.uniform();
        const double diff = std::abs(
            ssim(x, y, scfg) -
            oracles::ssim_naive(x, y, scfg.window, scfg.sigma, scfg.c1(), scfg.c2()));
        worst = std::max(worst, diff);
    }
    if (worst >= 1e-9) return {false, fmt("ssim oracle gap %.3g >= 1e-9", worst)};

    // pFID vs the 2-D Gaussian closed form within 1e-6
    double worst_fid = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<std::vector<double>> x, y;
        for (int i = 0; i < 50; ++i) {
            const double a = rng.normal(), b = rng.normal();
            x.push_back({a, 0.3 * a + 0.9 * b});
            const double c = rng.normal(), d = rng.normal();
            y.push_back({0.8 + 0.6 * c, -0.2 + 0.2 * c + 1.3 * d});
        }
        auto moments = [](const std::vector<std::vector<double>>& f) {
            double m0 = 0, m1 = 0;
            for (const auto& v : f) {
                m0 += v[0];
                m1 += v[1];
            }
            m0 /= static_cast<double>(f.size());
            m1 /= static_cast<double>(f.size());
            double a = 0, b = 0, d = 0;
            for (const auto& v : f) {
                a += (v[0] - m0) * (v[0] - m0);
                b += (v[0] - m0) * (v[1] - m1);
                d += (v[1] - m1) * (v[1] - m1);
            }
            const double n = static_cast<double>(f.size()) - 1.0;
            return std::array<double, 5>{m0, m1, a / n, b / n, d / n};
        };
        const auto mx = moments(x), my = moments(y);
        const double p00 = mx[2] * my[2] + mx[3] * my[3];
        const double p01 = mx[2] * my[3] + mx[3] * my[4];
        const double p10 = mx[3] * my[2] + mx[4] * my[3];
        const double p11 = mx[3] * my[3] + mx[4] * my[4];
        const double tr = p00 + p11, det = p00 * p11 - p01 * p10;
        const double disc = std::sqrt(std::max(0.0, tr * tr - 4 * det));
        const double tr_sqrt = std::sqrt(std::max(0.0, 0.5 * (tr + disc))) +
                               std::sqrt(std::max(0.0, 0.5 * (tr - disc)));
        const double expect = (mx[0] - my[0]) * (mx[0] - my[0]) +
                              (mx[1] - my[1]) * (mx[1] - my[1]) + mx[2] + mx[4] +
                              my[2] + my[4] - 2.0 * tr_sqrt;
        worst_fid = std::max(worst_fid, std::abs(pfid(x, y) - expect));
    }
    if (worst_fid >= 1e-6) return {false, fmt("pfid closed-form gap %.3g", worst_fid)};

    // rho / RA hand-counted cases, exact
    TrinaryMap truth(4, 4, CellState::Free);
    TrinaryMap half(4, 4, CellState::Uncertain);
    for (int c = 0; c < 4; ++c) {
        half(0, c) = CellState::Free;
        half(1, c) = CellState::Free;
    }
    if (coverage_rho(half, truth) != 0.5) return {false, "rho hand count failed"};
    if (coverage_rho(truth, truth) != 1.0) return {false, "rho identity failed"};
    TrinaryMap claims(4, 4, CellState::Uncertain);
    TrinaryMap truth2(4, 4, CellState::Obstacle);
    claims(0, 0) = claims(0, 1) = claims(0, 2) = claims(0, 3) = CellState::Free;
    truth2(0, 0) = truth2(0, 1) = CellState::Free;
    if (reconstruction_accuracy(claims, truth2) != 0.5)
        return {false, "RA hand count failed"};
    return {true, fmt("ssim oracle gap %.2g, pfid gap %.2g, hand counts exact", worst,
                      worst_fid)};
}

// 5. Training sanity: base-4 S=32 model, 500 optimizer steps on 16 samples.
Outcome criterion_training() {
    NetConfig cfg;
    cfg.side = 32;
    cfg.base = 4; // patch 8, depth 4, heads 4 defaults
    FloorplanConfig wcfg;
    wcfg.width = 96;
    wcfg.height = 96;
    wcfg.seed = 6021;
    const TrinaryMap truth = generate_floorplan(wcfg);

    // 16 samples from one collection episode
    Cell start{0, 0};
    for (int r = 0; r < 96 && start.row == 0; ++r)
        for (int c = 0; c < 96; ++c)
            if (truth(r, c) == CellState::Free) {
                start = Cell{r, c};
                break;
            }
    const SensorSpec spec{16, 360};
    auto samples = collect_episode(truth, spec, frontier_policy(), 5, start, 0, 2000);
    if (samples.size() < 16) return {false, "collection produced too few samples"};
    samples.resize(16);

    std::vector<TrainSample> data;
    for (const auto& s : samples) data.push_back(to_train_sample(s));

    TrainConfig tcfg;
    tcfg.batch_size = 8;          // 2 steps/epoch
    tcfg.epochs = 250;            // 500 optimizer steps
    tcfg.seed = 515;
    const FeatureNet phi(99);
    const LossWeights w{10.0, 1.0};
    const TrainResult result = train(data, cfg, tcfg, w, phi);

    const double first = result.history.front().mean_hybrid;
    const double last = result.history.back().mean_hybrid;
    if (!(last <= 0.1 * first))
        return {false, fmt("final loss %.4f > 10%% of epoch-1 mean %.4f", last, first)};

    // held-in SSIM must strictly beat the identity predictor
    const NetPredictor net(cfg, result.params);
    const IdentityPredictor identity;
    double net_ssim = 0.0, id_ssim = 0.0;
    for (const auto& s : samples) {
        const Tensor gt_img = image_from_trinary(s.gt);
        net_ssim += ssim(image_from_prob(net.predict(s.obs)), gt_img);
        id_ssim += ssim(image_from_prob(identity.predict(s.obs)), gt_img);
    }
    net_ssim /= 16.0;
    id_ssim /= 16.0;
    if (!(net_ssim > id_ssim))
        return {false, fmt("held-in ssim %.4f not above identity %.4f", net_ssim, id_ssim)};
    return {true, fmt("loss %.4f -> %.4f (<= 10%%), ssim %.4f > identity ", first, last,
                      net_ssim) +
                      fmt("%.4f", id_ssim)};
}

// 6. Exploration efficiency: oracle-predictor median steps <= 0.9x frontier
//    baseline over 20 seeded 64x64 maps (L = 16), with rho/RA >= 0.85.
Outcome criterion_efficiency() {
    const int n_maps = 20;
    const SensorSpec spec{16, 360};
    std::vector<double> frontier_steps, oracle_steps;
    double min_rho = 1.0, min_ra = 1.0;
    for (int m = 0; m < n_maps; ++m) {
        FloorplanConfig wcfg;
        wcfg.width = 64;
        wcfg.height = 64;
        wcfg.min_rooms = 5;
        wcfg.max_rooms = 9;
        wcfg.seed = 9000 + static_cast<std::uint64_t>(m);
        const TrinaryMap truth = generate_floorplan(wcfg);
        Rng rng(Rng::mix(424242, static_cast<std::uint64_t>(m)));
        Cell start{0, 0};
        do {
            start = Cell{static_cast<int>(rng.uniform_int(0, 63)),
                         static_cast<int>(rng.uniform_int(0, 63))};
        } while (truth.at(start) != CellState::Free);

        const auto base = run_frontier_baseline(truth, spec, 6000, start);
        const OraclePredictor oracle(truth);
        const auto smart = run_exploration(truth, spec, oracle, FusionConfig{},
                                           CostWeights::for_map_side(64), 6000, start);
        frontier_steps.push_back(base.steps);
        oracle_steps.push_back(smart.steps);
        min_rho = std::min(min_rho, coverage_rho(smart.final_map, truth));
        min_ra = std::min(min_ra, reconstruction_accuracy(smart.final_map, truth));
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    const double mf = median(frontier_steps);
    const double mo = median(oracle_steps);
    const bool pass = mo <= 0.9 * mf && min_rho >= 0.85 && min_ra >= 0.85;
    return {pass, fmt("median steps oracle %.1f vs frontier %.1f (ratio %.3f), ", mo, mf,
                      mf > 0 ? mo / mf : 0.0) +
                      fmt("min rho %.3f, min RA %.3f (>= 0.85)", min_rho, min_ra)};
}

// 7. Simulation invariants over 1000 randomized sensing calls.
Outcome criterion_sim_invariants() {
    Rng rng(20240007);
    int calls = 0;
    while (calls < 1000) {
        FloorplanConfig cfg;
        cfg.width = 40;
        cfg.height = 40;
        cfg.seed = rng.next_u64();
        const TrinaryMap truth = generate_floorplan(cfg);
        TrinaryMap observed(40, 40);
        const SensorSpec spec{static_cast<int>(rng.uniform_int(2, 10)), 360};
        for (int k = 0; k < 25 && calls < 1000; ++k) {
            Cell robot{static_cast<int>(rng.uniform_int(0, 39)),
                       static_cast<int>(rng.uniform_int(0, 39))};
            if (truth.at(robot) != CellState::Free) continue;
            const TrinaryMap before = observed;
            sense_and_update(truth, observed, RobotState{robot, 0.0, 0}, spec);
            ++calls;
            for (int r = 0; r < 40; ++r) {
                for (int c = 0; c < 40; ++c) {
                    const CellState now = observed(r, c), was = before(r, c);
                    if (now != CellState::Uncertain && now != truth(r, c))
                        return {false, "observation contradicts ground truth"};
                    if (was != CellState::Uncertain && now != was)
                        return {false, "a sensed cell was un-observed"};
                    const long dr = r - robot.row, dc = c - robot.col;
                    if (dr * dr + dc * dc >
                            static_cast<long>(spec.range_L) * spec.range_L &&
                        now != was)
                        return {false, "a cell beyond range L changed"};
                }
            }
        }
    }
    return {true, "1000 calls: no contradiction, no un-observe, range respected"};
}

// 8. Dataset PNG format fidelity on 100 random patches.
Outcome criterion_format() {
    Rng rng(20240008);
    for (int i = 0; i < 100; ++i) {
        const TrinaryMap m = testutil::random_trinary(16, 16, rng);
        const auto bytes = encode_obs_image(m);
        if (decode_obs_image(bytes) != m) return {false, "obs round trip mismatch"};
        if (encode_obs_image(m) != bytes) return {false, "obs encoding not stable"};

        const TrinaryMap b = testutil::random_binary(16, 16, rng);
        if (decode_gt_image(encode_gt_image(b)) != b)
            return {false, "gt round trip mismatch"};
    }
    // channel convention: blue=255 is free, green uncertain, red obstacle
    TrinaryMap one(1, 3);
    one(0, 0) = CellState::Free;
    one(0, 1) = CellState::Uncertain;
    one(0, 2) = CellState::Obstacle;
    const TrinaryMap back = decode_obs_image(encode_obs_image(one));
    if (back(0, 0) != CellState::Free || back(0, 1) != CellState::Uncertain ||
        back(0, 2) != CellState::Obstacle)
        return {false, "channel convention violated"};
    return {true, "100 patches bit-exact, channel convention held"};
}

// 9. Byte-identical reruns of explore and train.
Outcome criterion_determinism() {
    testutil::TempDir tmp_a("accept_det_a");
    testutil::TempDir tmp_b("accept_det_b");
    ExperimentConfig cfg;
    cfg.world = FloorplanConfig{40, 40, 3, 4, 1, 4242};
    cfg.map_count = 2;
    cfg.sensor = SensorSpec{8, 180};
    cfg.net = NetConfig{16, 2, 4, 1, 2, 2};
    cfg.train.epochs = 2;
    cfg.train.batch_size = 4;
    cfg.budget = 700;
    cfg.data_stride = 6;
    cfg.seeds = {77};

    auto run_all = [&](const std::string& out, int workers) {
        ExperimentConfig c = cfg;
        c.output_dir = out;
        cmd_gen_worlds(c);
        cmd_gen_data(c);
        cmd_train(c, false);
        cmd_explore(c, {"frontier", "oracle"}, workers);
    };
    run_all(tmp_a.str(), 2);
    run_all(tmp_b.str(), 1);

    for (const char* rel :
         {"explore/report.csv", "explore/report.json", "explore/curves.csv",
          "loss_history_sensemap.csv", "checkpoints/sensemap.ckpt",
          "dataset/index.json"}) {
        const auto a = read_file(tmp_a.str() + "/" + rel);
        const auto b = read_file(tmp_b.str() + "/" + rel);
        if (a != b) return {false, std::string("rerun differs in ") + rel};
    }
    return {true, "reports, histories, checkpoints and datasets byte-identical"};
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<Outcome()> fn;
    };
    const std::vector<Criterion> criteria{
        {1, "oracle equivalence - A* vs Dijkstra", 10.0, criterion_astar},
        {2, "oracle equivalence - frontier extraction", 10.0, criterion_frontiers},
        {3, "gradient correctness (5-point FD, full sweep)", 120.0, criterion_gradients},
        {4, "metric fidelity (SSIM, pFID, rho, RA)", 60.0, criterion_metrics},
        {5, "training sanity (overfit + SSIM vs identity)", 300.0, criterion_training},
        {6, "exploration efficiency (oracle vs frontier)", 600.0, criterion_efficiency},
        {7, "simulation invariants (1000 sensing calls)", 30.0, criterion_sim_invariants},
        {8, "dataset format fidelity", 5.0, criterion_format},
        {9, "determinism of explore and train", 600.0, criterion_determinism},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        const double t0 = now_seconds();
        Outcome outcome;
        try {
            outcome = criterion.fn();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        const double dt = now_seconds() - t0;
        const bool in_budget = dt < criterion.budget_s;
        const bool pass = outcome.pass && in_budget;
        if (!pass) ++failures;
        std::printf("[%s] %d. %s: %s (%.1fs%s)\n", pass ? "PASS" : "FAIL", criterion.id,
                    criterion.name, outcome.detail.c_str(), dt,
                    in_budget ? "" : fmt(" > budget %.0fs", criterion.budget_s).c_str());
        std::fflush(stdout);
    }
    if (failures) {
        std::printf("%d criterion(s) FAILED\n", failures);
        return 3;
    }
    std::printf("all %zu criteria passed\n", criteria.size());
    return 0;
}
