#include "sensemap/gridmap.hpp"

#include <algorithm>
#include <string>

namespace sensemap {

CellState cell_from_value(double v) {
    if (v == 0.0) return CellState::Free;
    if (v == 0.5) return CellState::Uncertain;
    if (v == 1.0) return CellState::Obstacle;
    throw DomainError("cell_from_value: " + std::to_string(v) +
                      " is not one of {0, 0.5, 1}");
}

TrinaryMap::TrinaryMap(int height, int width, CellState fill)
    : height_(height), width_(width) {
    if (height < 0 || width < 0)
        throw DomainError("TrinaryMap: negative dimensions");
    cells_.assign(static_cast<std::size_t>(height) * width, fill);
}

void TrinaryMap::check_bounds(Cell c) const {
    if (!in_bounds(c))
        throw DomainError("TrinaryMap: cell (" + std::to_string(c.row) + ", " +
                          std::to_string(c.col) + ") outside " +
                          std::to_string(height_) + "x" + std::to_string(width_));
}

int TrinaryMap::count(CellState s) const {
    return static_cast<int>(std::count(cells_.begin(), cells_.end(), s));
}

bool TrinaryMap::is_binary() const {
    return std::none_of(cells_.begin(), cells_.end(),
                        [](CellState s) { return s == CellState::Uncertain; });
}

ProbMap::ProbMap(int height, int width, double fill) : height_(height), width_(width) {
    if (height < 0 || width < 0)
        throw DomainError("ProbMap: negative dimensions");
    if (fill < 0.0 || fill > 1.0)
        throw DomainError("ProbMap: fill value outside [0, 1]");
    values_.assign(static_cast<std::size_t>(height) * width, fill);
}

void ProbMap::check_bounds(Cell c) const {
    if (!in_bounds(c))
        throw DomainError("ProbMap: cell (" + std::to_string(c.row) + ", " +
                          std::to_string(c.col) + ") outside " +
                          std::to_string(height_) + "x" + std::to_string(width_));
}

void ProbMap::set(Cell c, double v) {
    check_bounds(c);
    if (v < 0.0 || v > 1.0)
        throw DomainError("ProbMap: value " + std::to_string(v) + " outside [0, 1]");
    values_[static_cast<std::size_t>(c.row) * width_ + c.col] = v;
}

LocalPatch crop_local(const TrinaryMap& map, Cell robot, int range_L, CellState pad) {
    if (range_L < 1)
        throw DomainError("crop_local: range_L must be >= 1");
    if (!map.in_bounds(robot))
        throw DomainError("crop_local: robot (" + std::to_string(robot.row) + ", " +
                          std::to_string(robot.col) + ") outside map");

    const int side = 2 * range_L;
    LocalPatch patch;
    patch.side = side;
    patch.origin = Cell{robot.row - range_L, robot.col - range_L};
    patch.center = robot;
    patch.cells = TrinaryMap(side, side, pad);
    for (int r = 0; r < side; ++r) {
        const int gr = patch.origin.row + r;
        if (gr < 0 || gr >= map.height()) continue;
        for (int c = 0; c < side; ++c) {
            const int gc = patch.origin.col + c;
            if (gc < 0 || gc >= map.width()) continue;
            patch.cells(r, c) = map(gr, gc);
        }
    }
    return patch;
}

CellState classify_prob(double v, double tau, double nu) {
    if (v < tau) return CellState::Free;
    if (v > nu) return CellState::Obstacle;
    return CellState::Uncertain;
}

TrinaryMap trinary_from_prob(const ProbMap& p, double tau, double nu) {
    if (!(tau >= 0.0 && tau < nu && nu <= 1.0))
        throw ConfigError("trinary_from_prob: need 0 <= tau < nu <= 1, got tau=" +
                          std::to_string(tau) + " nu=" + std::to_string(nu));
    TrinaryMap out(p.height(), p.width());
    for (int r = 0; r < p.height(); ++r)
        for (int c = 0; c < p.width(); ++c)
            out(r, c) = classify_prob(p(r, c), tau, nu);
    return out;
}

} // namespace sensemap
