#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "mast/env.hpp"
#include "mast/mapper.hpp"

using namespace mast;

namespace {

World empty_room(int side) {
  WorldGenParams p;
  p.width = side;
  p.height = side;
  p.n_rooms = 1;
  p.furniture_density = 0.0;
  Rng rng(1);
  return generate_world(p, rng);
}

struct Walk {
  WorldSemanticMap map;
  std::vector<std::pair<Pose, Rays>> log;
};

// Random walk integrating observations step by step.
Walk random_walk(const World& w, const SensorConfig& sensor, Rng& rng, int steps) {
  Walk out{WorldSemanticMap(w.width, w.height, w.n_classes), {}};
  std::vector<std::pair<int, int>> free;
  for (int y = 0; y < w.height; ++y)
    for (int x = 0; x < w.width; ++x)
      if (w.cell(x, y) == 0) free.emplace_back(x, y);
  auto [sx, sy] = free[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(free.size()) - 1))];
  Pose pose{sx, sy, static_cast<Heading>(rng.uniform_int(0, 3))};
  for (int t = 0; t < steps; ++t) {
    Rays rays = render_rays(w, pose, sensor);
    out.map.integrate(pose, rays);
    out.log.emplace_back(pose, rays);
    const int a = rng.uniform_int(0, 2);
    if (a == 0) {
      const auto d = heading_delta(pose.heading);
      if (w.is_free(pose.x + d[0], pose.y + d[1])) {
        pose.x += d[0];
        pose.y += d[1];
      }
    } else if (a == 1) {
      pose.heading = turn_left(pose.heading);
    } else {
      pose.heading = turn_right(pose.heading);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("single ray marks traversed cells and the hit class") {
  World w = empty_room(9);
  w.cells[static_cast<std::size_t>(2) * 9 + 4] = 3;  // class-3 obstacle at (4,2)
  WorldSemanticMap map(9, 9, 8);
  SensorConfig s;
  s.n_rays = 1;
  const Pose pose{4, 4, Heading::North};
  Rays rays = render_rays(w, pose, s);
  REQUIRE(rays.cls[0] == 3);
  map.integrate(pose, rays);
  CHECK((map.bits(4, 4) & 1u) != 0);        // agent cell traversable
  CHECK(map.bits(4, 3) == 1u);              // intermediate cell traversable only
  CHECK((map.bits(4, 2) & (1u << 3)) != 0); // hit cell has class-3 bit
  CHECK((map.bits(4, 2) & 1u) == 0);
}

TEST_CASE("integration is idempotent") {
  World w = empty_room(11);
  SensorConfig s;
  Rng rng(5);
  Walk walk = random_walk(w, s, rng, 40);
  WorldSemanticMap again = walk.map;
  for (const auto& [pose, rays] : walk.log) again.integrate(pose, rays);
  CHECK(again == walk.map);
}

TEST_CASE("bag-of-classes: two classes on one cell coexist") {
  World w = empty_room(9);
  WorldSemanticMap map(9, 9, 8);
  // two hand-made observations claiming classes 2 and 5 at (4,2)
  Rays a;
  a.depth = {1.5};
  a.cls = {2};
  a.bearing = {0.0};
  Rays b = a;
  b.cls = {5};
  map.integrate(Pose{4, 4, Heading::North}, a);
  map.integrate(Pose{4, 4, Heading::North}, b);
  CHECK((map.bits(4, 2) & (1u << 2)) != 0);
  CHECK((map.bits(4, 2) & (1u << 5)) != 0);
}

TEST_CASE("incremental equals batch equals shuffled re-integration") {
  WorldGenParams p;
  p.width = 13;
  p.height = 13;
  p.n_rooms = 2;
  p.furniture_density = 0.12;
  Rng wr(9);
  World w = generate_world(p, wr);
  SensorConfig s;
  Rng rng(31);
  Walk walk = random_walk(w, s, rng, 60);

  WorldSemanticMap batch(w.width, w.height, w.n_classes);
  for (const auto& [pose, rays] : walk.log) batch.integrate(pose, rays);
  CHECK(batch == walk.map);

  auto shuffled = walk.log;
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1],
              shuffled[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
  WorldSemanticMap reordered(w.width, w.height, w.n_classes);
  for (const auto& [pose, rays] : shuffled) reordered.integrate(pose, rays);
  CHECK(reordered == walk.map);
}

TEST_CASE("empty map crop is zero except the center traversable bit") {
  WorldSemanticMap map(9, 9, 8);
  EgoMap ego = egocentric_crop(map, Pose{4, 4, Heading::East}, 3);
  const int side = ego.side();
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) {
      if (i == 3 && j == 3)
        CHECK(ego.at(i, j) == 1u);
      else
        CHECK(ego.at(i, j) == 0u);
    }
}

TEST_CASE("turning left in place rotates the crop 90 degrees clockwise") {
  WorldGenParams p;
  p.width = 13;
  p.height = 13;
  p.n_rooms = 2;
  p.furniture_density = 0.15;
  Rng wr(3);
  World w = generate_world(p, wr);
  SensorConfig s;
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    Walk walk = random_walk(w, s, rng, 25);
    const Pose pose = walk.log.back().first;
    for (int h = 0; h < 4; ++h) {
      const Pose here{pose.x, pose.y, static_cast<Heading>(h)};
      EgoMap before = egocentric_crop(walk.map, here, 4);
      EgoMap after = egocentric_crop(walk.map, Pose{pose.x, pose.y, turn_left(here.heading)}, 4);
      CHECK(after == rot90_clockwise(before));
    }
  }
}

TEST_CASE("obstacle ahead appears above center, then left of center after facing east") {
  WorldSemanticMap map(9, 9, 8);
  Rays obs;
  obs.depth = {1.5};
  obs.cls = {4};
  obs.bearing = {0.0};  // due north, obstacle two cells ahead at (4,2)
  map.integrate(Pose{4, 4, Heading::North}, obs);
  EgoMap north = egocentric_crop(map, Pose{4, 4, Heading::North}, 3);
  CHECK((north.at(1, 3) & (1u << 4)) != 0);  // 2 cells above center
  EgoMap east = egocentric_crop(map, Pose{4, 4, Heading::East}, 3);
  CHECK((east.at(3, 1) & (1u << 4)) != 0);  // 2 cells left of center
}

TEST_CASE("coverage counts revealed cells") {
  WorldSemanticMap map(9, 9, 8);
  CHECK(map.coverage() == 0.0);
  Rays obs;
  obs.depth = {1.5};
  obs.cls = {kWallClass};
  obs.bearing = {0.0};
  map.integrate(Pose{4, 4, Heading::North}, obs);
  // reveals agent cell + intermediate + hit = 3 cells
  CHECK(map.coverage() == doctest::Approx(3.0 / 81.0));

  World w = empty_room(9);
  SensorConfig s;
  Rng rng(2);
  Walk walk = random_walk(w, s, rng, 400);
  double cov = walk.map.coverage();
  CHECK(cov > 0.0);
  CHECK(cov <= 1.0);
  // coverage never decreases along a fresh walk
  WorldSemanticMap inc(9, 9, 8);
  double prev = 0.0;
  for (const auto& [pose, rays] : walk.log) {
    inc.integrate(pose, rays);
    CHECK(inc.coverage() >= prev);
    prev = inc.coverage();
  }
}

TEST_CASE("exploration reward") {
  CHECK(exploration_reward(0.4, 0.4, 0.25) == 0.0);
  CHECK(exploration_reward(0.10, 0.15, 0.25) == doctest::Approx(0.0125).epsilon(1e-12));
  CHECK_THROWS_AS(exploration_reward(0.5, 0.4, 0.25), ContractError);
}

TEST_CASE("occupancy view rule table") {
  EgoMap ego;
  ego.radius = 1;
  ego.n_classes = 8;
  ego.cells = {0, 1u, 1u << 4, (1u) | (1u << 4), 1u, 0, 0, 0, 1u << 2};
  OccupancyView v = occupancy_view(ego);
  CHECK(v.at(0, 0) == OccCell::Unexplored);
  CHECK(v.at(0, 1) == OccCell::Traversable);
  CHECK(v.at(0, 2) == OccCell::Obstacle);
  CHECK(v.at(1, 0) == OccCell::Obstacle);  // class presence dominates traversable
  CHECK(v.at(2, 2) == OccCell::Obstacle);

  // pure function: repeated calls agree
  OccupancyView v2 = occupancy_view(ego);
  CHECK(std::equal(v.cells.begin(), v.cells.end(), v2.cells.begin()));
}

TEST_CASE("egomap ppm dump has one pixel per cell") {
  World w = empty_room(9);
  WorldSemanticMap map(9, 9, 8);
  SensorConfig s;
  Rng rng(4);
  Walk walk = random_walk(w, s, rng, 30);
  EgoMap ego = egocentric_crop(walk.map, walk.log.back().first, 4);
  PpmImage img = egomap_to_ppm(ego);
  CHECK(img.width() == 9);
  CHECK(img.height() == 9);
  const std::string bytes = img.bytes();
  CHECK(bytes.substr(0, 2) == "P6");
  CHECK(bytes.size() > 9u * 9u * 3u);
}
