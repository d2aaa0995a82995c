#include "mast/mapper.hpp"

#include <cmath>
#include <limits>

namespace mast {

WorldSemanticMap::WorldSemanticMap(int width, int height, int n_classes)
    : width_(width), height_(height), n_classes_(n_classes) {
  if (width < 1 || height < 1 || n_classes < 1)
    throw ContractError("WorldSemanticMap: bad extent");
  if (n_classes + 1 > 32) throw ContractError("WorldSemanticMap: more than 31 classes");
  cells_.assign(static_cast<std::size_t>(width) * height, 0);
}

std::int64_t WorldSemanticMap::revealed_count() const {
  std::int64_t n = 0;
  for (CellBits b : cells_)
    if (b != 0) ++n;
  return n;
}

void WorldSemanticMap::integrate(const Pose& pose, const Rays& rays) {
  auto mark = [&](int x, int y, CellBits bit) {
    if (x < 0 || x >= width_ || y < 0 || y >= height_) return;
    cells_[static_cast<std::size_t>(y) * width_ + x] |= bit;
  };
  mark(pose.x, pose.y, 1u << kTraversableBit);

  const double px = pose.x + 0.5, py = pose.y + 0.5;
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rays.depth.size(); ++i) {
    const double d = rays.depth[i];
    const int cls = rays.cls[i];
    const double bearing = rays.bearing[i];
    // Same traversal and tie rule as cast_ray, so entry distances reproduce
    // the sensor's arithmetic exactly.
    const double dx = std::sin(bearing);
    const double dy = -std::cos(bearing);
    int cx = pose.x, cy = pose.y;
    const int step_x = dx > 0 ? 1 : dx < 0 ? -1 : 0;
    const int step_y = dy > 0 ? 1 : dy < 0 ? -1 : 0;
    double t_max_x = inf, t_delta_x = inf, t_max_y = inf, t_delta_y = inf;
    if (step_x > 0) {
      t_max_x = (cx + 1 - px) / dx;
      t_delta_x = 1.0 / dx;
    } else if (step_x < 0) {
      t_max_x = (cx - px) / dx;
      t_delta_x = -1.0 / dx;
    }
    if (step_y > 0) {
      t_max_y = (cy + 1 - py) / dy;
      t_delta_y = 1.0 / dy;
    } else if (step_y < 0) {
      t_max_y = (cy - py) / dy;
      t_delta_y = -1.0 / dy;
    }
    for (;;) {
      const double t = std::min(t_max_x, t_max_y);
      if (t > d) break;
      if (t_max_x < t_max_y) {
        cx += step_x;
        t_max_x += t_delta_x;
      } else if (t_max_y < t_max_x) {
        cy += step_y;
        t_max_y += t_delta_y;
      } else {
        cx += step_x;
        cy += step_y;
        t_max_x += t_delta_x;
        t_max_y += t_delta_y;
      }
      if (t < d) {
        mark(cx, cy, 1u << kTraversableBit);
      } else {  // t == d: the hit cell, or the boundary cell of a no-hit ray
        if (cls != 0)
          mark(cx, cy, 1u << cls);
        else
          mark(cx, cy, 1u << kTraversableBit);
        break;
      }
    }
  }
}

double WorldSemanticMap::coverage() const {
  return static_cast<double>(revealed_count()) /
         static_cast<double>(static_cast<std::int64_t>(width_) * height_);
}

EgoMap egocentric_crop(const WorldSemanticMap& map, const Pose& pose, int radius) {
  if (radius < 1) throw ContractError("egocentric_crop: radius must be >= 1");
  EgoMap ego;
  ego.radius = radius;
  ego.n_classes = map.n_classes();
  const int side = ego.side();
  ego.cells.assign(static_cast<std::size_t>(side) * side, 0);
  const auto fwd = heading_delta(pose.heading);
  const auto right = heading_delta(turn_right(pose.heading));
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      const int du = j - radius;  // toward the agent's right
      const int dv = radius - i;  // toward the agent's heading
      const int wx = pose.x + du * right[0] + dv * fwd[0];
      const int wy = pose.y + du * right[1] + dv * fwd[1];
      if (wx < 0 || wx >= map.width() || wy < 0 || wy >= map.height()) continue;
      ego.cells[static_cast<std::size_t>(i) * side + j] = map.bits(wx, wy);
    }
  }
  // The agent observes its own footing regardless of map state.
  ego.cells[static_cast<std::size_t>(radius) * side + radius] |= 1u << kTraversableBit;
  return ego;
}

EgoMap rot90_clockwise(const EgoMap& ego) {
  EgoMap out;
  out.radius = ego.radius;
  out.n_classes = ego.n_classes;
  const int side = ego.side();
  out.cells.assign(static_cast<std::size_t>(side) * side, 0);
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j)
      out.cells[static_cast<std::size_t>(j) * side + (side - 1 - i)] =
          ego.cells[static_cast<std::size_t>(i) * side + j];
  return out;
}

OccupancyView occupancy_view(const EgoMap& ego) {
  OccupancyView view;
  view.radius = ego.radius;
  view.cells.resize(ego.cells.size());
  const CellBits class_mask = ~1u;
  for (std::size_t i = 0; i < ego.cells.size(); ++i) {
    const CellBits b = ego.cells[i];
    if (b & class_mask)
      view.cells[i] = OccCell::Obstacle;
    else if (b & (1u << kTraversableBit))
      view.cells[i] = OccCell::Traversable;
    else
      view.cells[i] = OccCell::Unexplored;
  }
  return view;
}

double exploration_reward(double prev_cov, double curr_cov, double beta) {
  if (prev_cov < 0.0 || curr_cov > 1.0 || curr_cov < prev_cov)
    throw ContractError("exploration_reward: coverage must be monotone in [0,1]");
  return beta * (curr_cov - prev_cov);
}

PpmImage egomap_to_ppm(const EgoMap& ego) {
  const int side = ego.side();
  PpmImage img(side, side);
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) {
      const CellBits b = ego.at(i, j);
      if (b == 0) {
        img.set(j, i, {0.0, 0.0, 0.0});
      } else if (b == (1u << kTraversableBit)) {
        img.set(j, i, {0.3, 0.3, 0.3});
      } else {
        int cls = 1;
        while (cls <= ego.n_classes && !(b & (1u << cls))) ++cls;
        img.set(j, i, class_color(cls));
      }
    }
  return img;
}

}  // namespace mast
