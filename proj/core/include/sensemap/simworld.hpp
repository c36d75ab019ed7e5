#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sensemap/gridmap.hpp"

namespace sensemap {

/// Robot pose on the grid. Orientation is stored because the state carries
/// it, but the omnidirectional sensor never reads it.
struct RobotState {
    Cell position;
    double orientation = 0.0; // radians in (-pi, pi]
    int time_step = 0;
};

/// 360-degree LiDAR: beam_count beams uniformly spaced over 2*pi, Euclidean
/// range range_L measured between cell centers.
struct SensorSpec {
    int range_L = 16;
    int beam_count = 360;

    void validate() const;
};

/// Procedural floorplan parameters. Stands in for external floorplan corpora;
/// any map in the gt-image format loads through load_floorplan instead.
struct FloorplanConfig {
    int width = 64;
    int height = 64;
    int min_rooms = 4;
    int max_rooms = 8;
    int corridor_width = 1;
    std::uint64_t seed = 0;
};

/// Generate a binary floorplan: outer border all Obstacle, every Free cell
/// 4-connected, deterministic in cfg.seed. Throws ConfigError for bad
/// dimensions and GenerationError when the room constraints cannot be met
/// after bounded retries.
TrinaryMap generate_floorplan(const FloorplanConfig& cfg);

/// Load a floorplan from a gt-format PNG (single channel, 255 = obstacle).
TrinaryMap load_floorplan(const std::string& path);

struct BeamResult {
    std::vector<Cell> covered;  // Free cells the beam passed, origin excluded
    std::optional<Cell> hit;    // first Obstacle cell within range
};

/// Trace one beam from the center of `origin` at `angle` (0 = +col, pi/2 =
/// +row), stepping through every cell the ray crosses. A cell is in range
/// when its center is within Euclidean distance range_L of the origin
/// center; the beam stops at the first Obstacle cell, at the map edge, or
/// when it leaves range. Corner crossings step diagonally.
/// Throws DomainError if origin is not Free in truth.
BeamResult cast_beam(const TrinaryMap& truth, Cell origin, double angle, int range_L);

/// Scan with every beam of `spec` and write the results into `observed`:
/// covered cells become Free, hit cells become Obstacle, the robot's own cell
/// becomes Free. Returns the number of cells that changed from Uncertain.
/// Throws DomainError on shape mismatch or when the robot is not on a Free
/// truth cell.
int sense_and_update(const TrinaryMap& truth, TrinaryMap& observed,
                     const RobotState& robot, const SensorSpec& spec);

} // namespace sensemap
