#include "sensemap/explorer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <queue>

#include "sensemap/metrics.hpp"

namespace sensemap {

void FusionConfig::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw ConfigError("FusionConfig: alpha must be in (0, 1]");
    if (!(tau >= 0.0 && tau < nu && nu <= 1.0))
        throw ConfigError("FusionConfig: need 0 <= tau < nu <= 1");
    if (predict_stride < 1)
        throw ConfigError("FusionConfig: predict_stride must be >= 1");
}

CostWeights CostWeights::for_map_side(int map_side) {
    if (map_side < 1) throw ConfigError("CostWeights: map_side must be >= 1");
    return CostWeights{1.0, 1.0 / map_side};
}

void fuse_prediction(ProbMap& prob, const ProbMap& pred, Cell robot, double alpha) {
    if (pred.height() != pred.width() || pred.height() % 2 != 0)
        throw ShapeError("fuse_prediction: prediction must be square with even side, got " +
                         std::to_string(pred.height()) + "x" + std::to_string(pred.width()));
    if (!prob.in_bounds(robot))
        throw DomainError("fuse_prediction: robot outside map");
    const int range = pred.height() / 2;
    const int r0 = robot.row - range, c0 = robot.col - range;
    for (int r = 0; r < pred.height(); ++r) {
        const int gr = r0 + r;
        if (gr < 0 || gr >= prob.height()) continue;
        for (int c = 0; c < pred.width(); ++c) {
            const int gc = c0 + c;
            if (gc < 0 || gc >= prob.width()) continue;
            const double v = alpha * pred(r, c) + (1.0 - alpha) * prob(gr, gc);
            prob(gr, gc) = std::clamp(v, 0.0, 1.0);
        }
    }
}

void observe_clamp(ProbMap& prob, const TrinaryMap& observed) {
    if (prob.height() != observed.height() || prob.width() != observed.width())
        throw ShapeError("observe_clamp: shape mismatch");
    for (int r = 0; r < prob.height(); ++r) {
        for (int c = 0; c < prob.width(); ++c) {
            const CellState s = observed(r, c);
            if (s == CellState::Free) prob(r, c) = 0.0;
            else if (s == CellState::Obstacle) prob(r, c) = 1.0;
        }
    }
}

std::vector<Cell> extract_frontiers(const TrinaryMap& classified, Cell robot) {
    if (!classified.in_bounds(robot) || classified.at(robot) != CellState::Free)
        throw DomainError("extract_frontiers: robot cell (" + std::to_string(robot.row) +
                          ", " + std::to_string(robot.col) + ") is not Free");
    const int h = classified.height(), w = classified.width();
    std::vector<char> seen(static_cast<std::size_t>(h) * w, 0);
    std::deque<Cell> queue{robot};
    seen[static_cast<std::size_t>(robot.row) * w + robot.col] = 1;
    std::vector<Cell> frontiers;
    const int dr[4] = {-1, 1, 0, 0};
    const int dc[4] = {0, 0, -1, 1};
    while (!queue.empty()) {
        const Cell cur = queue.front();
        queue.pop_front();
        bool frontier = false;
        for (int k = 0; k < 4; ++k) {
            const Cell nb{cur.row + dr[k], cur.col + dc[k]};
            if (!classified.in_bounds(nb)) continue;
            const CellState s = classified(nb.row, nb.col);
            if (s == CellState::Uncertain) frontier = true;
            if (s != CellState::Free) continue;
            char& flag = seen[static_cast<std::size_t>(nb.row) * w + nb.col];
            if (flag) continue;
            flag = 1;
            queue.push_back(nb);
        }
        if (frontier) frontiers.push_back(cur);
    }
    std::sort(frontiers.begin(), frontiers.end(), [](Cell a, Cell b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    return frontiers;
}

std::vector<Cell> extract_frontiers(const ProbMap& prob, Cell robot, double tau,
                                    double nu) {
    return extract_frontiers(trinary_from_prob(prob, tau, nu), robot);
}

std::vector<FrontierCluster> cluster_frontiers(const std::vector<Cell>& cells) {
    if (cells.empty()) return {};
    std::vector<Cell> sorted = cells;
    std::sort(sorted.begin(), sorted.end(), [](Cell a, Cell b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    auto key = [](Cell c) {
        return (static_cast<std::int64_t>(c.row) << 32) |
               static_cast<std::uint32_t>(c.col);
    };
    std::vector<std::int64_t> keys;
    keys.reserve(sorted.size());
    for (Cell c : sorted) keys.push_back(key(c));
    auto contains = [&](Cell c) {
        return std::binary_search(keys.begin(), keys.end(), key(c));
    };
    auto index_of = [&](Cell c) {
        return static_cast<std::size_t>(
            std::lower_bound(keys.begin(), keys.end(), key(c)) - keys.begin());
    };

    std::vector<char> used(sorted.size(), 0);
    std::vector<FrontierCluster> clusters;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (used[i]) continue;
        FrontierCluster cluster;
        std::deque<Cell> queue{sorted[i]};
        used[i] = 1;
        while (!queue.empty()) {
            const Cell cur = queue.front();
            queue.pop_front();
            cluster.members.push_back(cur);
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const Cell nb{cur.row + dr, cur.col + dc};
                    if (!contains(nb)) continue;
                    const std::size_t j = index_of(nb);
                    if (used[j]) continue;
                    used[j] = 1;
                    queue.push_back(nb);
                }
            }
        }
        std::sort(cluster.members.begin(), cluster.members.end(), [](Cell a, Cell b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        double sr = 0.0, sc = 0.0;
        for (Cell c : cluster.members) {
            sr += c.row;
            sc += c.col;
        }
        cluster.centroid_row = sr / static_cast<double>(cluster.members.size());
        cluster.centroid_col = sc / static_cast<double>(cluster.members.size());
        clusters.push_back(std::move(cluster));
    }
    return clusters;
}

double cluster_cost(const FrontierCluster& cluster, const ProbMap& prob, Cell robot,
                    const CostWeights& w) {
    if (cluster.members.empty())
        throw DomainError("cluster_cost: empty cluster");
    double prob_term = 0.0;
    for (Cell c : cluster.members) prob_term += std::abs(0.5 - prob.at(c));
    prob_term /= static_cast<double>(cluster.members.size());
    const double dr = cluster.centroid_row - robot.row;
    const double dc = cluster.centroid_col - robot.col;
    return w.w_prob * prob_term + w.w_dis * std::sqrt(dr * dr + dc * dc);
}

namespace {

std::vector<char> reachable_free(const TrinaryMap& passable, Cell from) {
    const int h = passable.height(), w = passable.width();
    std::vector<char> seen(static_cast<std::size_t>(h) * w, 0);
    if (!passable.in_bounds(from) || passable.at(from) != CellState::Free) return seen;
    std::deque<Cell> queue{from};
    seen[static_cast<std::size_t>(from.row) * w + from.col] = 1;
    const int dr[4] = {-1, 1, 0, 0};
    const int dc[4] = {0, 0, -1, 1};
    while (!queue.empty()) {
        const Cell cur = queue.front();
        queue.pop_front();
        for (int k = 0; k < 4; ++k) {
            const Cell nb{cur.row + dr[k], cur.col + dc[k]};
            if (!passable.in_bounds(nb)) continue;
            if (passable(nb.row, nb.col) != CellState::Free) continue;
            char& flag = seen[static_cast<std::size_t>(nb.row) * w + nb.col];
            if (flag) continue;
            flag = 1;
            queue.push_back(nb);
        }
    }
    return seen;
}

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

} // namespace

WaypointChoice select_waypoint(const std::vector<FrontierCluster>& clusters,
                               const ProbMap& prob, Cell robot, const CostWeights& w,
                               const TrinaryMap& passable, int snap_radius) {
    if (clusters.empty()) return {std::nullopt, false};

    struct Candidate {
        double cost;
        Cell rounded;
    };
    std::vector<Candidate> cands;
    cands.reserve(clusters.size());
    for (const auto& cluster : clusters) {
        cands.push_back({cluster_cost(cluster, prob, robot, w),
                         Cell{round_half_up(cluster.centroid_row),
                              round_half_up(cluster.centroid_col)}});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.cost != b.cost) return a.cost < b.cost;
        if (a.rounded.row != b.rounded.row) return a.rounded.row < b.rounded.row;
        return a.rounded.col < b.rounded.col;
    });

    const std::vector<char> reach = reachable_free(passable, robot);
    const int h = passable.height(), wdt = passable.width();
    // The robot's own cell is never a waypoint: standing still cannot resolve
    // a frontier, and selecting it would stall the exploration loop.
    auto ok = [&](Cell c) {
        return passable.in_bounds(c) && !(c == robot) &&
               reach[static_cast<std::size_t>(c.row) * wdt + c.col];
    };

    for (const auto& cand : cands) {
        if (ok(cand.rounded)) return {cand.rounded, false};
        // BFS ring search around the rounded centroid for the nearest
        // reachable Free cell.
        std::vector<char> seen(static_cast<std::size_t>(h) * wdt, 0);
        std::deque<std::pair<Cell, int>> queue;
        if (passable.in_bounds(cand.rounded)) {
            queue.push_back({cand.rounded, 0});
            seen[static_cast<std::size_t>(cand.rounded.row) * wdt + cand.rounded.col] = 1;
        }
        const int dr[4] = {-1, 1, 0, 0};
        const int dc[4] = {0, 0, -1, 1};
        std::optional<Cell> snapped;
        while (!queue.empty() && !snapped) {
            const auto [cur, dist] = queue.front();
            queue.pop_front();
            if (dist >= snap_radius) continue;
            for (int k = 0; k < 4; ++k) {
                const Cell nb{cur.row + dr[k], cur.col + dc[k]};
                if (!passable.in_bounds(nb)) continue;
                char& flag = seen[static_cast<std::size_t>(nb.row) * wdt + nb.col];
                if (flag) continue;
                flag = 1;
                if (ok(nb)) {
                    snapped = nb;
                    break;
                }
                queue.push_back({nb, dist + 1});
            }
        }
        if (snapped) return {snapped, false};
        // cluster discarded; try the next-best one
    }
    return {std::nullopt, true};
}

std::vector<Cell> astar(const TrinaryMap& passable, Cell start, Cell goal) {
    if (!passable.in_bounds(start) || passable.at(start) != CellState::Free)
        throw DomainError("astar: start is not a Free cell");
    if (!passable.in_bounds(goal) || passable.at(goal) != CellState::Free)
        throw DomainError("astar: goal is not a Free cell");

    const int h = passable.height(), w = passable.width();
    const int n = h * w;
    auto id = [&](Cell c) { return c.row * w + c.col; };
    const double kSqrt2 = 1.4142135623730950488;

    auto heuristic = [&](Cell c) {
        const double dr = std::abs(c.row - goal.row);
        const double dc = std::abs(c.col - goal.col);
        return std::max(dr, dc) + (kSqrt2 - 1.0) * std::min(dr, dc);
    };

    std::vector<double> g(static_cast<std::size_t>(n),
                          std::numeric_limits<double>::infinity());
    std::vector<int> parent(static_cast<std::size_t>(n), -1);
    std::vector<char> closed(static_cast<std::size_t>(n), 0);

    struct Node {
        double f;
        double g;
        int id;
    };
    auto worse = [](const Node& a, const Node& b) {
        if (a.f != b.f) return a.f > b.f;
        if (a.g != b.g) return a.g < b.g; // prefer deeper on f-ties
        return a.id > b.id;
    };
    std::priority_queue<Node, std::vector<Node>, decltype(worse)> open(worse);

    g[static_cast<std::size_t>(id(start))] = 0.0;
    open.push({heuristic(start), 0.0, id(start)});

    while (!open.empty()) {
        const Node top = open.top();
        open.pop();
        if (closed[static_cast<std::size_t>(top.id)]) continue;
        closed[static_cast<std::size_t>(top.id)] = 1;
        const Cell cur{top.id / w, top.id % w};
        if (cur == goal) break;
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                const Cell nb{cur.row + dr, cur.col + dc};
                if (!passable.in_bounds(nb)) continue;
                if (passable(nb.row, nb.col) != CellState::Free) continue;
                const bool diagonal = dr != 0 && dc != 0;
                if (diagonal) {
                    // no corner cutting: at least one orthogonal neighbor Free
                    const bool row_ok = passable(cur.row + dr, cur.col) == CellState::Free;
                    const bool col_ok = passable(cur.row, cur.col + dc) == CellState::Free;
                    if (!row_ok && !col_ok) continue;
                }
                const double step = diagonal ? kSqrt2 : 1.0;
                const double cand = top.g + step;
                double& best = g[static_cast<std::size_t>(id(nb))];
                if (cand < best) {
                    best = cand;
                    parent[static_cast<std::size_t>(id(nb))] = top.id;
                    open.push({cand + heuristic(nb), cand, id(nb)});
                }
            }
        }
    }

    if (!closed[static_cast<std::size_t>(id(goal))])
        throw PathNotFoundError("astar: no path from (" + std::to_string(start.row) +
                                ", " + std::to_string(start.col) + ") to (" +
                                std::to_string(goal.row) + ", " +
                                std::to_string(goal.col) + ")");

    std::vector<Cell> path;
    for (int cur = id(goal); cur != -1; cur = parent[static_cast<std::size_t>(cur)])
        path.push_back(Cell{cur / w, cur % w});
    std::reverse(path.begin(), path.end());
    return path;
}

PathCost path_cost(const std::vector<Cell>& path) {
    PathCost cost;
    for (std::size_t i = 1; i < path.size(); ++i) {
        const int dr = std::abs(path[i].row - path[i - 1].row);
        const int dc = std::abs(path[i].col - path[i - 1].col);
        if (dr + dc == 1) ++cost.straight;
        else ++cost.diag;
    }
    return cost;
}

TrinaryMap binarize_prob(const ProbMap& prob) {
    TrinaryMap out(prob.height(), prob.width());
    for (int r = 0; r < prob.height(); ++r) {
        for (int c = 0; c < prob.width(); ++c) {
            const double v = prob(r, c);
            if (v < 0.5) out(r, c) = CellState::Free;
            else if (v > 0.5) out(r, c) = CellState::Obstacle;
            else out(r, c) = CellState::Uncertain;
        }
    }
    return out;
}

const char* termination_name(Termination t) {
    switch (t) {
        case Termination::Complete: return "complete";
        case Termination::BudgetExhausted: return "budget_exhausted";
        case Termination::Stuck: return "stuck";
    }
    return "?";
}

std::string trace_json_line(const StepTrace& t) {
    char rho[32];
    std::snprintf(rho, sizeof(rho), "%.6f", t.rho);
    std::string wp = "null";
    if (t.waypoint)
        wp = "[" + std::to_string(t.waypoint->row) + "," +
             std::to_string(t.waypoint->col) + "]";
    return "{\"step\":" + std::to_string(t.step) + ",\"robot\":[" +
           std::to_string(t.robot.row) + "," + std::to_string(t.robot.col) +
           "],\"revealed\":" + std::to_string(t.revealed) + ",\"rho\":" + rho +
           ",\"waypoint\":" + wp + ",\"action\":\"" + t.action + "\"}";
}

namespace {

struct EpisodeEngine {
    const TrinaryMap& truth;
    const SensorSpec& spec;
    const Predictor* predictor; // null for the frontier baseline
    FusionConfig fusion;
    CostWeights weights;
    int budget;
    Cell start;
    const TraceSink& on_step;
    const MapObserver& on_sense;

    ExplorationResult run() {
        spec.validate();
        fusion.validate();
        if (budget < 0) throw DomainError("run_exploration: negative budget");
        if (!truth.in_bounds(start) || truth.at(start) != CellState::Free)
            throw DomainError("run_exploration: start cell is not Free in truth");
        const int truth_free = truth.count(CellState::Free);
        if (truth_free == 0) throw DomainError("run_exploration: truth has no Free cells");

        const bool predictive = predictor != nullptr;
        TrinaryMap observed(truth.height(), truth.width());
        ProbMap prob(truth.height(), truth.width()); // uniform 0.5
        RobotState robot{start, 0.0, 0};

        ExplorationResult result;
        result.terminated = Termination::BudgetExhausted;

        auto reconstruction = [&]() -> TrinaryMap {
            return predictive ? binarize_prob(prob) : observed;
        };
        auto rho_now = [&]() {
            return coverage_rho(reconstruction(), truth);
        };

        const int snap_radius = 2 * spec.range_L;
        std::optional<Cell> waypoint;
        std::vector<Cell> path;
        std::size_t path_pos = 0;

        auto sense_fuse = [&](int step) {
            const int revealed = sense_and_update(truth, observed, robot, spec);
            if (predictive && step % fusion.predict_stride == 0) {
                const LocalPatch patch = crop_local(observed, robot.position, spec.range_L);
                const ProbMap pred = predictor->predict(patch);
                fuse_prediction(prob, pred, robot.position, fusion.alpha);
            }
            // Sensor truth dominates: clamp after every scan (and fusion).
            observe_clamp(prob, observed);
            if (on_sense) on_sense(step, robot.position, observed);
            return revealed;
        };

        auto select = [&]() -> WaypointChoice {
            std::vector<Cell> frontiers =
                predictive
                    ? extract_frontiers(prob, robot.position, fusion.tau, fusion.nu)
                    : extract_frontiers(observed, robot.position);
            const auto clusters = cluster_frontiers(frontiers);
            // Reachability/snapping runs on the observed map, the same map A*
            // plans on, so a selected waypoint is always plannable.
            return select_waypoint(clusters, prob, robot.position, weights, observed,
                                   snap_radius);
        };

        const int revealed0 = sense_fuse(0);
        result.coverage_curve.push_back({0, rho_now()});
        if (on_step)
            on_step(StepTrace{0, robot.position, revealed0,
                              result.coverage_curve.back().second, waypoint, "init"});

        int steps = 0;
        while (true) {
            if (steps >= budget) {
                result.terminated = Termination::BudgetExhausted;
                break;
            }
            // (Re)select when there is no waypoint, it was invalidated, or it
            // was reached.
            if (waypoint &&
                (observed.at(*waypoint) != CellState::Free ||
                 robot.position == *waypoint))
                waypoint.reset();
            if (!waypoint) {
                const WaypointChoice choice = select();
                if (!choice.waypoint) {
                    result.terminated =
                        choice.stuck ? Termination::Stuck : Termination::Complete;
                    break;
                }
                waypoint = choice.waypoint;
                path = astar(observed, robot.position, *waypoint);
                path_pos = 1;
            }
            if (path_pos >= path.size() ||
                observed.at(path[path_pos]) != CellState::Free) {
                // Path consumed or blocked by a new observation: replan.
                path = astar(observed, robot.position, *waypoint);
                path_pos = 1;
                if (path.size() < 2) {
                    waypoint.reset();
                    continue;
                }
            }

            const Cell next = path[path_pos++];
            const bool diagonal =
                next.row != robot.position.row && next.col != robot.position.col;
            result.distance += diagonal ? 1.4142135623730950488 : 1.0;
            robot.position = next;
            ++robot.time_step;
            ++steps;
            const int revealed = sense_fuse(steps);
            result.coverage_curve.push_back({steps, rho_now()});
            if (on_step)
                on_step(StepTrace{steps, robot.position, revealed,
                                  result.coverage_curve.back().second, waypoint,
                                  "move"});
            if (waypoint && robot.position == *waypoint) waypoint.reset();
        }

        result.steps = steps;
        result.final_map = reconstruction();
        result.final_prob = std::move(prob);
        return result;
    }
};

} // namespace

ExplorationResult run_exploration(const TrinaryMap& truth, const SensorSpec& spec,
                                  const Predictor& predictor,
                                  const FusionConfig& fusion,
                                  const CostWeights& weights, int budget, Cell start,
                                  const TraceSink& on_step, const MapObserver& on_sense) {
    EpisodeEngine engine{truth, spec, &predictor, fusion, weights,
                         budget, start, on_step, on_sense};
    return engine.run();
}

ExplorationResult run_frontier_baseline(const TrinaryMap& truth, const SensorSpec& spec,
                                        int budget, Cell start,
                                        const TraceSink& on_step,
                                        const MapObserver& on_sense) {
    FusionConfig fusion; // defaults; classification unused by the baseline
    CostWeights weights{0.0, 1.0};
    EpisodeEngine engine{truth, spec, nullptr, fusion, weights,
                         budget, start, on_step, on_sense};
    return engine.run();
}

} // namespace sensemap
