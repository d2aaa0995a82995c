#pragma once

#include <utility>
#include <vector>

#include "mast/tensor.hpp"
#include "mast/world.hpp"

namespace mast {

struct SensorConfig {
  int n_rays = 64;
  double fov_deg = 90.0;
  double max_range = 10.0;  // cells
  int image_h = 64;
};

struct RayHit {
  double depth = 0.0;  // distance from agent center to the hit cell's near face
  int class_id = 0;    // 0 = nothing within range
};

/// Exact grid traversal from (px, py) along compass bearing (radians,
/// North 0, clockwise). When a crossing lands exactly on a cell corner the
/// ray steps diagonally. `visited`, when given, receives the free cells the
/// ray passes through (entry distance < min(hit, max_range)), excluding the
/// starting cell and the hit cell.
RayHit cast_ray(const World& w, double px, double py, double bearing, double max_range,
                std::vector<std::pair<int, int>>* visited = nullptr);

struct Rays {
  std::vector<double> depth;    // size n_rays, in (0, max_range]
  std::vector<int> cls;         // size n_rays, 0 iff no hit within range
  std::vector<double> bearing;  // absolute compass bearing per ray, radians
};

/// Fan of n_rays across fov centered on the pose heading; ray i bears
/// heading + fov*(i/(n-1) - 1/2).
Rays render_rays(const World& w, const Pose& pose, const SensorConfig& sensor);

/// Column renderer: each ray paints a centered vertical bar of height
/// min(H, round(H / depth)) in its class palette color (black background);
/// channel 3 carries depth / max_range down the whole column. Output [H,W,4]
/// with values in [0,1].
Tensor render_image(const Rays& rays, const SensorConfig& sensor);

}  // namespace mast
