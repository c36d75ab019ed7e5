#include "sensemap/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include "sensemap/image_io.hpp"
#include "sensemap/rng.hpp"

namespace sensemap {

void SensorSpec::validate() const {
    if (range_L < 1) throw ConfigError("SensorSpec: range_L must be >= 1");
    if (beam_count < 4) throw ConfigError("SensorSpec: beam_count must be >= 4");
}

namespace {

struct Rect {
    int r0, c0, r1, c1; // inclusive

    int height() const { return r1 - r0 + 1; }
    int width() const { return c1 - c0 + 1; }
};

struct Room {
    Rect rect;
    Cell center() const {
        return Cell{(rect.r0 + rect.r1) / 2, (rect.c0 + rect.c1) / 2};
    }
};

// Leaves must hold a room of at least 3x3 plus one cell of wall on each side.
constexpr int kMinLeaf = 5;

void carve_rect(TrinaryMap& map, const Rect& r) {
    for (int row = r.r0; row <= r.r1; ++row)
        for (int col = r.c0; col <= r.c1; ++col)
            map(row, col) = CellState::Free;
}

// Carve an L-shaped corridor between two cells, `width` cells wide, clamped
// to the interior so the border ring stays intact.
void carve_corridor(TrinaryMap& map, Cell a, Cell b, int width, Rng& rng) {
    const int hi_r = map.height() - 2;
    const int hi_c = map.width() - 2;
    auto clamp_r = [&](int r) { return std::clamp(r, 1, hi_r); };
    auto clamp_c = [&](int c) { return std::clamp(c, 1, hi_c); };

    Cell elbow = rng.uniform() < 0.5 ? Cell{a.row, b.col} : Cell{b.row, a.col};

    auto carve_h = [&](int row, int c_from, int c_to) {
        if (c_from > c_to) std::swap(c_from, c_to);
        Rect r{clamp_r(row), clamp_c(c_from), clamp_r(row + width - 1), clamp_c(c_to)};
        carve_rect(map, r);
    };
    auto carve_v = [&](int col, int r_from, int r_to) {
        if (r_from > r_to) std::swap(r_from, r_to);
        Rect r{clamp_r(r_from), clamp_c(col), clamp_r(r_to), clamp_c(col + width - 1)};
        carve_rect(map, r);
    };

    if (elbow.row == a.row) {
        carve_h(a.row, a.col, elbow.col);
        carve_v(elbow.col, elbow.row, b.row);
    } else {
        carve_v(a.col, a.row, elbow.row);
        carve_h(elbow.row, elbow.col, b.col);
    }
}

struct BspNode {
    Rect rect;
    int left = -1, right = -1;
    std::vector<int> rooms; // indices into the room list, filled bottom-up
};

bool all_free_connected(const TrinaryMap& map) {
    const int n_free = map.count(CellState::Free);
    if (n_free == 0) return false;
    Cell start{-1, -1};
    for (int r = 0; r < map.height() && start.row < 0; ++r)
        for (int c = 0; c < map.width(); ++c)
            if (map(r, c) == CellState::Free) {
                start = Cell{r, c};
                break;
            }
    std::vector<char> seen(map.height() * map.width(), 0);
    std::deque<Cell> queue{start};
    seen[start.row * map.width() + start.col] = 1;
    int reached = 0;
    const int dr[4] = {-1, 1, 0, 0};
    const int dc[4] = {0, 0, -1, 1};
    while (!queue.empty()) {
        Cell cur = queue.front();
        queue.pop_front();
        ++reached;
        for (int k = 0; k < 4; ++k) {
            Cell nb{cur.row + dr[k], cur.col + dc[k]};
            if (!map.in_bounds(nb)) continue;
            if (map(nb.row, nb.col) != CellState::Free) continue;
            char& flag = seen[nb.row * map.width() + nb.col];
            if (flag) continue;
            flag = 1;
            queue.push_back(nb);
        }
    }
    return reached == n_free;
}

bool try_generate(const FloorplanConfig& cfg, std::uint64_t seed, TrinaryMap& out) {
    Rng rng(seed);
    TrinaryMap map(cfg.height, cfg.width, CellState::Obstacle);

    const int target_rooms =
        static_cast<int>(rng.uniform_int(cfg.min_rooms, cfg.max_rooms));

    std::vector<BspNode> nodes;
    nodes.push_back(BspNode{Rect{1, 1, cfg.height - 2, cfg.width - 2}, -1, -1, {}});
    std::vector<int> leaves{0};

    while (static_cast<int>(leaves.size()) < target_rooms) {
        // Split the largest splittable leaf; area ties resolve to the oldest.
        int best = -1;
        long best_area = -1;
        for (int idx : leaves) {
            const Rect& r = nodes[idx].rect;
            if (r.height() < 2 * kMinLeaf + 1 && r.width() < 2 * kMinLeaf + 1) continue;
            const long area = static_cast<long>(r.height()) * r.width();
            if (area > best_area) {
                best_area = area;
                best = idx;
            }
        }
        if (best < 0) return false; // rooms cannot fit

        // Split along the longer axis; a splittable leaf is always splittable
        // along its longer axis.
        const Rect r = nodes[best].rect;
        const bool split_rows = r.height() >= r.width();
        BspNode left, right;
        if (split_rows) {
            const int cut = static_cast<int>(
                rng.uniform_int(r.r0 + kMinLeaf, r.r1 - kMinLeaf));
            left.rect = Rect{r.r0, r.c0, cut - 1, r.c1};
            right.rect = Rect{cut + 1, r.c0, r.r1, r.c1};
        } else {
            const int cut = static_cast<int>(
                rng.uniform_int(r.c0 + kMinLeaf, r.c1 - kMinLeaf));
            left.rect = Rect{r.r0, r.c0, r.r1, cut - 1};
            right.rect = Rect{r.r0, cut + 1, r.r1, r.c1};
        }
        const int li = static_cast<int>(nodes.size());
        nodes.push_back(left);
        const int ri = static_cast<int>(nodes.size());
        nodes.push_back(right);
        nodes[best].left = li;
        nodes[best].right = ri;
        leaves.erase(std::find(leaves.begin(), leaves.end(), best));
        leaves.push_back(li);
        leaves.push_back(ri);
    }

    // Carve one room per leaf.
    std::vector<Room> rooms;
    for (int idx : leaves) {
        const Rect& leaf = nodes[idx].rect;
        const int max_h = leaf.height() - 2;
        const int max_w = leaf.width() - 2;
        if (max_h < 3 || max_w < 3) return false;
        const int h = static_cast<int>(rng.uniform_int(3, max_h));
        const int w = static_cast<int>(rng.uniform_int(3, max_w));
        const int r0 = static_cast<int>(rng.uniform_int(leaf.r0 + 1, leaf.r1 - h));
        const int c0 = static_cast<int>(rng.uniform_int(leaf.c0 + 1, leaf.c1 - w));
        Room room{Rect{r0, c0, r0 + h - 1, c0 + w - 1}};
        carve_rect(map, room.rect);
        nodes[idx].rooms.push_back(static_cast<int>(rooms.size()));
        rooms.push_back(room);
    }

    // Connect sibling subtrees bottom-up; each internal node links a random
    // room from each side, which keeps the whole tree connected.
    for (int i = static_cast<int>(nodes.size()) - 1; i >= 0; --i) {
        BspNode& node = nodes[i];
        if (node.left < 0) continue;
        const auto& lr = nodes[node.left].rooms;
        const auto& rr = nodes[node.right].rooms;
        if (lr.empty() || rr.empty()) return false;
        const int a = lr[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(lr.size()) - 1))];
        const int b = rr[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(rr.size()) - 1))];
        carve_corridor(map, rooms[a].center(), rooms[b].center(), cfg.corridor_width, rng);
        node.rooms = lr;
        node.rooms.insert(node.rooms.end(), rr.begin(), rr.end());
    }

    if (!all_free_connected(map)) return false;
    out = std::move(map);
    return true;
}

} // namespace

TrinaryMap generate_floorplan(const FloorplanConfig& cfg) {
    if (cfg.width < 32 || cfg.height < 32)
        throw ConfigError("generate_floorplan: dimensions must be >= 32");
    if (cfg.min_rooms < 1 || cfg.max_rooms < cfg.min_rooms)
        throw ConfigError("generate_floorplan: invalid room_count range");
    if (cfg.corridor_width < 1)
        throw ConfigError("generate_floorplan: corridor_width must be >= 1");

    constexpr int kMaxAttempts = 16;
    TrinaryMap map;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        if (try_generate(cfg, Rng::mix(cfg.seed, attempt), map)) return map;
    }
    throw GenerationError("generate_floorplan: could not satisfy config after " +
                          std::to_string(kMaxAttempts) + " attempts (seed " +
                          std::to_string(cfg.seed) + ")");
}

TrinaryMap load_floorplan(const std::string& path) { return read_gt_image(path); }

BeamResult cast_beam(const TrinaryMap& truth, Cell origin, double angle, int range_L) {
    if (range_L < 1) throw DomainError("cast_beam: range_L must be >= 1");
    if (!truth.in_bounds(origin) || truth.at(origin) != CellState::Free)
        throw DomainError("cast_beam: origin (" + std::to_string(origin.row) + ", " +
                          std::to_string(origin.col) + ") is not a Free cell");

    BeamResult result;
    const double dir_c = std::cos(angle);
    const double dir_r = std::sin(angle);

    // Amanatides-Woo traversal from the cell center.
    int r = origin.row, c = origin.col;
    const int step_r = dir_r > 0 ? 1 : (dir_r < 0 ? -1 : 0);
    const int step_c = dir_c > 0 ? 1 : (dir_c < 0 ? -1 : 0);
    const double inf = std::numeric_limits<double>::infinity();
    const double t_delta_r = step_r != 0 ? 1.0 / std::abs(dir_r) : inf;
    const double t_delta_c = step_c != 0 ? 1.0 / std::abs(dir_c) : inf;
    // Distance from the center (0.5 into the cell) to the first boundary.
    double t_max_r = step_r != 0 ? 0.5 * t_delta_r : inf;
    double t_max_c = step_c != 0 ? 0.5 * t_delta_c : inf;

    const long range_sq = static_cast<long>(range_L) * range_L;
    while (true) {
        if (t_max_r < t_max_c) {
            r += step_r;
            t_max_r += t_delta_r;
        } else if (t_max_c < t_max_r) {
            c += step_c;
            t_max_c += t_delta_c;
        } else {
            // Exact corner crossing: enter the diagonal cell directly.
            r += step_r;
            c += step_c;
            t_max_r += t_delta_r;
            t_max_c += t_delta_c;
        }
        const long dr = r - origin.row;
        const long dc = c - origin.col;
        if (dr * dr + dc * dc > range_sq) break;
        if (!truth.in_bounds(Cell{r, c})) break;
        if (truth(r, c) == CellState::Obstacle) {
            result.hit = Cell{r, c};
            break;
        }
        result.covered.push_back(Cell{r, c});
    }
    return result;
}

int sense_and_update(const TrinaryMap& truth, TrinaryMap& observed,
                     const RobotState& robot, const SensorSpec& spec) {
    spec.validate();
    if (truth.height() != observed.height() || truth.width() != observed.width())
        throw DomainError("sense_and_update: observed map shape " +
                          std::to_string(observed.height()) + "x" +
                          std::to_string(observed.width()) + " != truth " +
                          std::to_string(truth.height()) + "x" +
                          std::to_string(truth.width()));
    if (!truth.in_bounds(robot.position) ||
        truth.at(robot.position) != CellState::Free)
        throw DomainError("sense_and_update: robot is not on a Free truth cell");

    int revealed = 0;
    auto mark = [&](Cell cell, CellState s) {
        CellState& slot = observed(cell.row, cell.col);
        if (slot == CellState::Uncertain && s != CellState::Uncertain) ++revealed;
        slot = s;
    };

    mark(robot.position, CellState::Free);
    const double step = 6.283185307179586476925286766559 / spec.beam_count;
    for (int i = 0; i < spec.beam_count; ++i) {
        const BeamResult beam = cast_beam(truth, robot.position, i * step, spec.range_L);
        for (Cell cell : beam.covered) mark(cell, CellState::Free);
        if (beam.hit) mark(*beam.hit, CellState::Obstacle);
    }
    return revealed;
}

} // namespace sensemap
