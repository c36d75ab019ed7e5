#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sensemap/errors.hpp"

namespace sensemap {

/// Cell state of the trinary occupancy map. The numeric encoding is fixed:
/// free = 0.0, uncertain = 0.5, obstacle = 1.0.
enum class CellState : std::uint8_t {
    Free = 0,
    Uncertain = 1,
    Obstacle = 2,
};

/// Numeric value of a cell state (free 0.0, uncertain 0.5, obstacle 1.0).
constexpr double cell_value(CellState s) {
    switch (s) {
        case CellState::Free: return 0.0;
        case CellState::Uncertain: return 0.5;
        case CellState::Obstacle: return 1.0;
    }
    return 0.5;
}

/// Inverse of cell_value. Throws DomainError for any other value.
CellState cell_from_value(double v);

/// Grid coordinate (row, col). Signed so that window origins may lie outside
/// the map when a crop window is padded; bounds are enforced at indexing time.
struct Cell {
    int row = 0;
    int col = 0;

    friend bool operator==(const Cell&, const Cell&) = default;
};

/// Row-major trinary occupancy map.
class TrinaryMap {
public:
    TrinaryMap() = default;
    TrinaryMap(int height, int width, CellState fill = CellState::Uncertain);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return cells_.size(); }

    bool in_bounds(Cell c) const {
        return c.row >= 0 && c.row < height_ && c.col >= 0 && c.col < width_;
    }

    CellState at(Cell c) const {
        check_bounds(c);
        return cells_[static_cast<std::size_t>(c.row) * width_ + c.col];
    }
    void set(Cell c, CellState s) {
        check_bounds(c);
        cells_[static_cast<std::size_t>(c.row) * width_ + c.col] = s;
    }

    /// Unchecked row-major access for hot loops.
    CellState operator()(int row, int col) const {
        return cells_[static_cast<std::size_t>(row) * width_ + col];
    }
    CellState& operator()(int row, int col) {
        return cells_[static_cast<std::size_t>(row) * width_ + col];
    }

    const std::vector<CellState>& cells() const { return cells_; }

    int count(CellState s) const;

    /// True when no cell is Uncertain.
    bool is_binary() const;

    friend bool operator==(const TrinaryMap&, const TrinaryMap&) = default;

private:
    void check_bounds(Cell c) const;

    int height_ = 0;
    int width_ = 0;
    std::vector<CellState> cells_;
};

/// Row-major per-cell obstacle probability map. A fresh map is uniform 0.5
/// (everything unknown).
class ProbMap {
public:
    ProbMap() = default;
    ProbMap(int height, int width, double fill = 0.5);

    int height() const { return height_; }
    int width() const { return width_; }

    bool in_bounds(Cell c) const {
        return c.row >= 0 && c.row < height_ && c.col >= 0 && c.col < width_;
    }

    double at(Cell c) const {
        check_bounds(c);
        return values_[static_cast<std::size_t>(c.row) * width_ + c.col];
    }
    void set(Cell c, double v);

    double operator()(int row, int col) const {
        return values_[static_cast<std::size_t>(row) * width_ + col];
    }
    double& operator()(int row, int col) {
        return values_[static_cast<std::size_t>(row) * width_ + col];
    }

    const std::vector<double>& values() const { return values_; }

    friend bool operator==(const ProbMap&, const ProbMap&) = default;

private:
    void check_bounds(Cell c) const;

    int height_ = 0;
    int width_ = 0;
    std::vector<double> values_;
};

/// Square local observation window around the robot. side = 2 * range_L; the
/// robot sits at local index (range_L, range_L). origin is the global cell of
/// the window's top-left corner and may lie outside the map; cells beyond the
/// map edge are padded Uncertain.
struct LocalPatch {
    int side = 0;
    TrinaryMap cells;
    Cell origin;
    Cell center;
};

/// Crop the 2L-sided window centered on the robot: rows [robot.row - L,
/// robot.row + L - 1], cols likewise. Out-of-map cells pad as `pad`.
/// Throws DomainError if the robot is out of bounds or range_L < 1.
LocalPatch crop_local(const TrinaryMap& map, Cell robot, int range_L,
                      CellState pad = CellState::Uncertain);

/// Classify probabilities: v < tau -> Free, v > nu -> Obstacle, otherwise
/// Uncertain (boundary values inclusive to Uncertain).
/// Throws ConfigError unless 0 <= tau < nu <= 1.
TrinaryMap trinary_from_prob(const ProbMap& p, double tau, double nu);

/// Single-cell classification with the same boundary rule.
CellState classify_prob(double v, double tau, double nu);

} // namespace sensemap
