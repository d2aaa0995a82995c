#pragma once

#include <cstdint>
#include <vector>

#include "mast/ppm.hpp"
#include "mast/sensor.hpp"
#include "mast/world.hpp"

namespace mast {

// Per-cell channel bits: bit 0 = traversable, bits 1..N_c = semantic classes
// observed at that cell. All-zero means unexplored. Accumulation is
// bitwise-OR, so bits are monotone within an episode.
using CellBits = std::uint32_t;
inline constexpr int kTraversableBit = 0;

/// Allocentric accumulated bag-of-classes map, same extent as the world.
class WorldSemanticMap {
 public:
  WorldSemanticMap(int width, int height, int n_classes);

  int width() const { return width_; }
  int height() const { return height_; }
  int n_classes() const { return n_classes_; }
  int n_channels() const { return n_classes_ + 1; }

  CellBits bits(int x, int y) const {
    return cells_[static_cast<std::size_t>(y) * width_ + x];
  }
  bool revealed(int x, int y) const { return bits(x, y) != 0; }
  std::int64_t revealed_count() const;

  /// OR observation rays into the map from the observing pose: cells the ray
  /// passed through become traversable, the hit cell gains its class bit, and
  /// the agent's own cell becomes traversable.
  void integrate(const Pose& pose, const Rays& rays);

  /// Fraction of world cells revealed, in [0,1].
  double coverage() const;

  bool operator==(const WorldSemanticMap&) const = default;

 private:
  int width_, height_, n_classes_;
  std::vector<CellBits> cells_;
};

/// (2r+1) x (2r+1) window centered on the agent, rotated heading-up. Cell
/// (row 0, col r) lies r cells ahead of the agent.
struct EgoMap {
  int radius = 0;
  int n_classes = 0;
  std::vector<CellBits> cells;  // row-major, side = 2r+1

  int side() const { return 2 * radius + 1; }
  CellBits at(int row, int col) const {
    return cells[static_cast<std::size_t>(row) * side() + col];
  }
  bool operator==(const EgoMap&) const = default;
};

EgoMap egocentric_crop(const WorldSemanticMap& map, const Pose& pose, int radius);

/// Rotate an egomap 90 degrees clockwise (top row becomes right column).
EgoMap rot90_clockwise(const EgoMap& ego);

enum class OccCell : std::uint8_t { Unexplored = 0, Traversable = 1, Obstacle = 2 };

struct OccupancyView {
  int radius = 0;
  std::vector<OccCell> cells;
  int side() const { return 2 * radius + 1; }
  OccCell at(int row, int col) const {
    return cells[static_cast<std::size_t>(row) * side() + col];
  }
};

/// Collapse class detail: any class bit makes a cell an Obstacle, a lone
/// traversable bit makes it Traversable, nothing observed is Unexplored.
OccupancyView occupancy_view(const EgoMap& ego);

/// beta * (curr - prev); both coverages in [0,1] and non-decreasing.
double exploration_reward(double prev_cov, double curr_cov, double beta);

/// Debug dump: one pixel per cell, colored by the lowest set class bit,
/// gray for traversable-only cells, black for unexplored.
PpmImage egomap_to_ppm(const EgoMap& ego);

}  // namespace mast
