#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mast/common.hpp"

namespace mast {

// Grid coordinates: x grows east (columns), y grows south (rows, row 0 on
// top). Cell value 0 is free space; any other value is an obstacle of that
// semantic class. Class 1 is reserved for walls.
inline constexpr int kWallClass = 1;

enum class Heading : int { North = 0, East = 1, South = 2, West = 3 };

inline Heading turn_left(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 3) % 4); }
inline Heading turn_right(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 1) % 4); }
/// Unit step (dx, dy) of a heading.
std::array<int, 2> heading_delta(Heading h);
/// Compass angle in radians: North 0, East pi/2 (clockwise positive).
double heading_angle(Heading h);

enum class Action : int { MoveForward = 0, TurnLeft = 1, TurnRight = 2, Stop = 3 };
inline constexpr int kNumActions = 4;

struct ClassInfo {
  int id = 0;
  char glyph = '?';
  std::string name;
  bool operator==(const ClassInfo&) const = default;
};

struct World {
  int width = 0;
  int height = 0;
  int n_classes = 0;              // classes are 1..n_classes
  std::vector<std::uint8_t> cells;  // row-major; 0 = free, else class id
  std::vector<ClassInfo> classes;   // one entry per class, id ascending

  int cell(int x, int y) const { return cells[static_cast<std::size_t>(y) * width + x]; }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  bool is_free(int x, int y) const { return in_bounds(x, y) && cell(x, y) == 0; }
  std::int64_t free_cell_count() const;
  bool operator==(const World&) const = default;

  std::array<double, 3> class_color(int class_id) const;
};

/// Palette color of a class id in [0,1]^3; class 0 maps to black, class 1
/// (walls) to gray, higher classes to a fixed hue wheel.
std::array<double, 3> class_color(int class_id);

struct Pose {
  int x = 0;
  int y = 0;
  Heading heading = Heading::North;
  bool operator==(const Pose&) const = default;
};

struct WorldGenParams {
  int width = 15;
  int height = 15;
  int n_rooms = 3;
  int n_classes = 8;
  double furniture_density = 0.10;
};

/// Procedurally generate a multi-room world: border walls, straight interior
/// walls with one-cell door gaps, furniture obstacles of classes 2..N_c.
/// The free region is guaranteed 4-connected.
World generate_world(const WorldGenParams& params, Rng& rng);

/// True iff all free cells form one 4-connected component (and at least one
/// free cell exists).
bool free_cells_connected(const World& w);

/// Shortest 4-connected free path length in cells; +infinity if unreachable.
/// Both endpoints must be free.
double geodesic_distance(const World& w, int ax, int ay, int bx, int by);

/// BFS distance field (in cells) from (x, y) over free space; -1 where
/// unreachable or blocked.
std::vector<int> distance_field(const World& w, int x, int y);

// SEMWORLD v1 text format.
std::string save_world(const World& w);
World load_world(const std::string& text);
World load_world_file(const std::string& path);
void save_world_file(const World& w, const std::string& path);

struct Episode {
  std::shared_ptr<const World> world;
  Pose start;
  int goal_x = 0;
  int goal_y = 0;
  double shortest_path = 0.0;    // geodesic start -> goal, in cells
  std::vector<int> goal_field;   // BFS distances to the goal (reward oracle)
};

/// Sample start pose and goal with geodesic distance in [min_geo, max_geo].
Episode sample_episode(std::shared_ptr<const World> world, Rng& rng, double min_geo,
                       double max_geo);

}  // namespace mast
