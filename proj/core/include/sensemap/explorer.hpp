#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sensemap/gridmap.hpp"
#include "sensemap/nnet.hpp"
#include "sensemap/simworld.hpp"

namespace sensemap {

/// Probability-map update parameters (fusion weight and the free/obstacle
/// classification thresholds).
struct FusionConfig {
    double alpha = 0.25;
    double tau = 0.1;
    double nu = 0.5;
    int predict_stride = 1;

    void validate() const;
};

/// Connected group of frontier cells. dis/cost are filled during waypoint
/// selection; cluster_frontiers leaves them zero.
struct FrontierCluster {
    std::vector<Cell> members; // sorted row-major, 8-connected
    double centroid_row = 0.0;
    double centroid_col = 0.0;
    double dis = 0.0;
    double cost = 0.0;
};

struct CostWeights {
    double w_prob = 1.0;
    double w_dis = 1.0;

    /// Distance weight 1/map_side normalizes the distance term to about [0,1].
    static CostWeights for_map_side(int map_side);
};

/// Blend an S-by-S prediction into the global probability map over the
/// window centered on the robot (rows [P-L, P+L-1], same window crop_local
/// reads): v <- alpha*pred + (1-alpha)*v. Out-of-map window cells are
/// skipped. Throws ShapeError unless pred is square with even side.
void fuse_prediction(ProbMap& prob, const ProbMap& pred, Cell robot, double alpha);

/// Force directly sensed cells onto the probability map: observed Free -> 0,
/// observed Obstacle -> 1, Uncertain untouched.
void observe_clamp(ProbMap& prob, const TrinaryMap& observed);

/// Frontier cells of a classified map: Free cells, reachable from the robot
/// through 4-connected Free space, that have at least one Uncertain
/// 4-neighbor. Throws DomainError if the robot cell is not Free.
std::vector<Cell> extract_frontiers(const TrinaryMap& classified, Cell robot);

/// Classify the probability map with (tau, nu), then extract frontiers.
std::vector<Cell> extract_frontiers(const ProbMap& prob, Cell robot,
                                    double tau, double nu);

/// Group frontier cells into 8-connected components with mean centroids.
/// Output clusters and their member lists are in row-major order.
std::vector<FrontierCluster> cluster_frontiers(const std::vector<Cell>& cells);

/// Eq-style cluster cost: w_prob * mean over members of |0.5 - prob(cell)|
/// plus w_dis * Euclidean(robot, centroid). Lower is better, so maximally
/// uncertain nearby clusters win.
double cluster_cost(const FrontierCluster& cluster, const ProbMap& prob,
                    Cell robot, const CostWeights& w);

struct WaypointChoice {
    std::optional<Cell> waypoint;
    bool stuck = false; // all clusters discarded (no reachable snap target)
};

/// Pick the minimum-cost cluster's centroid, rounded to the nearest cell and
/// snapped (BFS ring search, radius snap_radius) to the nearest cell that is
/// Free in `passable` and reachable from the robot through it. Ties break by
/// (cost, row, col). Empty input means exploration is complete.
WaypointChoice select_waypoint(const std::vector<FrontierCluster>& clusters,
                               const ProbMap& prob, Cell robot,
                               const CostWeights& w, const TrinaryMap& passable,
                               int snap_radius);

/// Path cost decomposed into straight and diagonal steps so costs compare
/// exactly (a + b*sqrt(2) has a unique integer representation).
struct PathCost {
    int straight = 0;
    int diag = 0;

    double value() const { return straight + diag * 1.4142135623730950488; }
    friend bool operator==(const PathCost&, const PathCost&) = default;
};

/// 8-connected A* over Free cells of `passable` (straight cost 1, diagonal
/// sqrt(2); diagonal moves are forbidden when both orthogonal neighbors are
/// blocked). Returns the path start..goal inclusive. Throws DomainError when
/// start/goal are not Free and PathNotFoundError when no path exists.
std::vector<Cell> astar(const TrinaryMap& passable, Cell start, Cell goal);

PathCost path_cost(const std::vector<Cell>& path);

/// Midpoint binarization of the probability map: v < 0.5 Free, v > 0.5
/// Obstacle, exactly 0.5 (never touched) Uncertain.
TrinaryMap binarize_prob(const ProbMap& prob);

enum class Termination {
    Complete,
    BudgetExhausted,
    Stuck,
};

const char* termination_name(Termination t);

struct ExplorationResult {
    int steps = 0;
    double distance = 0.0;
    std::vector<std::pair<int, double>> coverage_curve; // (step, rho)
    ProbMap final_prob;
    TrinaryMap final_map;
    Termination terminated = Termination::Complete;
};

/// One line of the episode trace.
struct StepTrace {
    int step = 0;
    Cell robot;
    int revealed = 0;
    double rho = 0.0;
    std::optional<Cell> waypoint;
    std::string action;
};

using TraceSink = std::function<void(const StepTrace&)>;

/// Called after each scan with the step index, robot cell and the observed
/// map; dataset collection taps episodes through this.
using MapObserver = std::function<void(int step, Cell robot, const TrinaryMap& observed)>;

/// JSON-lines rendering of a trace record (the episode trace file format).
std::string trace_json_line(const StepTrace& t);

/// Full SenseMap loop: scan, predict into the probability map, clamp sensed
/// cells, pick frontier waypoints on the classified probability map, plan
/// with A* on the observed map, move one cell per step. Stops when no
/// frontier remains (complete), the step budget runs out, or every candidate
/// waypoint is unreachable (stuck); the final map is the binarized
/// probability map.
ExplorationResult run_exploration(const TrinaryMap& truth, const SensorSpec& spec,
                                  const Predictor& predictor,
                                  const FusionConfig& fusion,
                                  const CostWeights& weights, int budget,
                                  Cell start, const TraceSink& on_step = {},
                                  const MapObserver& on_sense = {});

/// Plain frontier baseline: no predictor, frontiers on the observed map,
/// cost is distance only. The final map is the observed map itself.
ExplorationResult run_frontier_baseline(const TrinaryMap& truth,
                                        const SensorSpec& spec, int budget,
                                        Cell start, const TraceSink& on_step = {},
                                        const MapObserver& on_sense = {});

} // namespace sensemap
