#pragma once

#include "mast/sensor.hpp"
#include "mast/world.hpp"

namespace mast {

struct Observation {
  Tensor image;  // [H, W, 4] RGB + normalized depth
  Rays rays;
};

struct StepInfo {
  bool collided = false;
  bool done = false;
  Pose pose;
};

/// One PointGoal episode: discrete 90-degree turns, one-cell forward steps,
/// Stop terminates. The episode also ends after max_steps actions.
class Environment {
 public:
  explicit Environment(SensorConfig sensor, int max_steps = 500)
      : sensor_(sensor), max_steps_(max_steps) {}

  void reset(Episode episode);

  bool active() const { return episode_.world != nullptr && !done_; }
  const Episode& episode() const { return episode_; }
  const World& world() const { return *episode_.world; }
  const Pose& pose() const { return pose_; }
  const SensorConfig& sensor() const { return sensor_; }
  int steps() const { return steps_; }
  bool done() const { return done_; }
  bool stopped() const { return stopped_; }
  int collisions() const { return collisions_; }
  /// Cells actually covered by forward moves (collisions add nothing).
  double path_length() const { return path_length_; }
  int max_steps() const { return max_steps_; }

  bool on_goal() const { return pose_.x == episode_.goal_x && pose_.y == episode_.goal_y; }
  /// Geodesic distance from the agent to the goal, in cells.
  double geodesic_to_goal() const;
  /// (euclidean distance in cells, bearing to goal relative to heading).
  std::pair<double, double> goal_vector() const;

  Observation observe() const;
  StepInfo step(Action a);

 private:
  SensorConfig sensor_;
  int max_steps_;
  Episode episode_;
  Pose pose_;
  int steps_ = 0;
  bool done_ = true;
  bool stopped_ = false;
  int collisions_ = 0;
  double path_length_ = 0.0;
};

}  // namespace mast
