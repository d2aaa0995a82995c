#include "mast/sensor.hpp"

#include <cmath>
#include <limits>

namespace mast {

RayHit cast_ray(const World& w, double px, double py, double bearing, double max_range,
                std::vector<std::pair<int, int>>* visited) {
  const double dx = std::sin(bearing);
  const double dy = -std::cos(bearing);
  int cx = static_cast<int>(std::floor(px));
  int cy = static_cast<int>(std::floor(py));

  const double inf = std::numeric_limits<double>::infinity();
  const int step_x = dx > 0 ? 1 : dx < 0 ? -1 : 0;
  const int step_y = dy > 0 ? 1 : dy < 0 ? -1 : 0;
  double t_max_x = inf, t_delta_x = inf;
  double t_max_y = inf, t_delta_y = inf;
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
    if (t > max_range) return {max_range, 0};
    if (t_max_x < t_max_y) {
      cx += step_x;
      t_max_x += t_delta_x;
    } else if (t_max_y < t_max_x) {
      cy += step_y;
      t_max_y += t_delta_y;
    } else {
      // exact corner crossing: move diagonally
      cx += step_x;
      cy += step_y;
      t_max_x += t_delta_x;
      t_max_y += t_delta_y;
    }
    if (!w.in_bounds(cx, cy)) return {max_range, 0};
    const int cell = w.cell(cx, cy);
    if (cell != 0) return {t, cell};
    if (visited) visited->emplace_back(cx, cy);
  }
}

Rays render_rays(const World& w, const Pose& pose, const SensorConfig& sensor) {
  if (sensor.n_rays < 1) throw ContractError("render_rays: n_rays must be >= 1");
  if (sensor.fov_deg <= 0.0 || sensor.fov_deg > 180.0)
    throw ContractError("render_rays: fov must be in (0, 180]");
  if (!w.is_free(pose.x, pose.y)) throw ContractError("render_rays: pose cell is not free");

  const double fov = sensor.fov_deg * M_PI / 180.0;
  const double theta0 = heading_angle(pose.heading);
  const double px = pose.x + 0.5, py = pose.y + 0.5;
  Rays rays;
  rays.depth.resize(static_cast<std::size_t>(sensor.n_rays));
  rays.cls.resize(static_cast<std::size_t>(sensor.n_rays));
  rays.bearing.resize(static_cast<std::size_t>(sensor.n_rays));
  for (int i = 0; i < sensor.n_rays; ++i) {
    const double frac =
        sensor.n_rays == 1 ? 0.0 : static_cast<double>(i) / (sensor.n_rays - 1) - 0.5;
    const double bearing = theta0 + fov * frac;
    const RayHit hit = cast_ray(w, px, py, bearing, sensor.max_range);
    rays.depth[static_cast<std::size_t>(i)] = hit.depth;
    rays.cls[static_cast<std::size_t>(i)] = hit.class_id;
    rays.bearing[static_cast<std::size_t>(i)] = bearing;
  }
  return rays;
}

Tensor render_image(const Rays& rays, const SensorConfig& sensor) {
  const int H = sensor.image_h;
  const int W = static_cast<int>(rays.depth.size());
  if (H < 4) throw ContractError("render_image: image height must be >= 4");
  Tensor img = Tensor::zeros({H, W, 4});
  auto v = img.values();
  for (int i = 0; i < W; ++i) {
    const double depth = rays.depth[static_cast<std::size_t>(i)];
    const int cls = rays.cls[static_cast<std::size_t>(i)];
    const auto rgb = class_color(cls);
    const int bar = std::min<int>(H, static_cast<int>(std::llround(H / depth)));
    const int y0 = (H - bar) / 2;
    for (int y = y0; y < y0 + bar; ++y) {
      const std::size_t base = (static_cast<std::size_t>(y) * W + i) * 4;
      v[base + 0] = rgb[0];
      v[base + 1] = rgb[1];
      v[base + 2] = rgb[2];
    }
    const double d = depth / sensor.max_range;
    for (int y = 0; y < H; ++y) v[(static_cast<std::size_t>(y) * W + i) * 4 + 3] = d;
  }
  round_span_to_mode(v);
  return img;
}

}  // namespace mast
