#include "mast/env.hpp"

#include <cmath>

namespace mast {

void Environment::reset(Episode episode) {
  episode_ = std::move(episode);
  pose_ = episode_.start;
  steps_ = 0;
  done_ = false;
  stopped_ = false;
  collisions_ = 0;
  path_length_ = 0.0;
}

double Environment::geodesic_to_goal() const {
  const int d = episode_.goal_field[static_cast<std::size_t>(pose_.y) * world().width + pose_.x];
  return d < 0 ? std::numeric_limits<double>::infinity() : static_cast<double>(d);
}

std::pair<double, double> Environment::goal_vector() const {
  const double dx = episode_.goal_x - pose_.x;
  const double dy = episode_.goal_y - pose_.y;
  const double dist = std::hypot(dx, dy);
  if (dist == 0.0) return {0.0, 0.0};
  double bearing = std::atan2(dx, -dy) - heading_angle(pose_.heading);
  while (bearing > M_PI) bearing -= 2.0 * M_PI;
  while (bearing <= -M_PI) bearing += 2.0 * M_PI;
  return {dist, bearing};
}

Observation Environment::observe() const {
  Observation obs;
  obs.rays = render_rays(world(), pose_, sensor_);
  obs.image = render_image(obs.rays, sensor_);
  return obs;
}

StepInfo Environment::step(Action a) {
  if (done_) throw ContractError("Environment::step: episode already done");
  StepInfo info;
  ++steps_;
  switch (a) {
    case Action::MoveForward: {
      const auto d = heading_delta(pose_.heading);
      const int nx = pose_.x + d[0], ny = pose_.y + d[1];
      if (world().is_free(nx, ny)) {
        pose_.x = nx;
        pose_.y = ny;
        path_length_ += 1.0;
      } else {
        info.collided = true;
        ++collisions_;
      }
      break;
    }
    case Action::TurnLeft:
      pose_.heading = turn_left(pose_.heading);
      break;
    case Action::TurnRight:
      pose_.heading = turn_right(pose_.heading);
      break;
    case Action::Stop:
      stopped_ = true;
      done_ = true;
      break;
  }
  if (steps_ >= max_steps_) done_ = true;
  info.done = done_;
  info.pose = pose_;
  return info;
}

}  // namespace mast
