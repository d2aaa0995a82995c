#include "mast/world.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <sstream>

namespace mast {

std::array<int, 2> heading_delta(Heading h) {
  switch (h) {
    case Heading::North: return {0, -1};
    case Heading::East: return {1, 0};
    case Heading::South: return {0, 1};
    case Heading::West: return {-1, 0};
  }
  return {0, 0};
}

double heading_angle(Heading h) { return static_cast<int>(h) * M_PI / 2.0; }

std::int64_t World::free_cell_count() const {
  std::int64_t n = 0;
  for (auto c : cells)
    if (c == 0) ++n;
  return n;
}

std::array<double, 3> World::class_color(int class_id) const { return mast::class_color(class_id); }

std::array<double, 3> class_color(int class_id) {
  if (class_id <= 0) return {0.0, 0.0, 0.0};
  if (class_id == kWallClass) return {0.55, 0.55, 0.55};
  // Golden-angle hue wheel, fixed saturation/value.
  const double hue = std::fmod(0.12 + 0.61803398875 * (class_id - 2), 1.0) * 6.0;
  const double s = 0.8, v = 0.95;
  const int i = static_cast<int>(hue);
  const double f = hue - i;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

// ---------------------------------------------------------------------------
// Connectivity and distances

namespace {
std::vector<int> bfs_field(const World& w, int sx, int sy) {
  std::vector<int> dist(static_cast<std::size_t>(w.width) * w.height, -1);
  std::deque<std::pair<int, int>> queue;
  dist[static_cast<std::size_t>(sy) * w.width + sx] = 0;
  queue.emplace_back(sx, sy);
  static constexpr int dx[4] = {1, -1, 0, 0};
  static constexpr int dy[4] = {0, 0, 1, -1};
  while (!queue.empty()) {
    auto [x, y] = queue.front();
    queue.pop_front();
    const int d = dist[static_cast<std::size_t>(y) * w.width + x];
    for (int k = 0; k < 4; ++k) {
      const int nx = x + dx[k], ny = y + dy[k];
      if (!w.is_free(nx, ny)) continue;
      auto& slot = dist[static_cast<std::size_t>(ny) * w.width + nx];
      if (slot < 0) {
        slot = d + 1;
        queue.emplace_back(nx, ny);
      }
    }
  }
  return dist;
}
}  // namespace

std::vector<int> distance_field(const World& w, int x, int y) {
  if (!w.is_free(x, y)) throw ContractError("distance_field: source cell is not free");
  return bfs_field(w, x, y);
}

bool free_cells_connected(const World& w) {
  int sx = -1, sy = -1;
  for (int y = 0; y < w.height && sx < 0; ++y)
    for (int x = 0; x < w.width; ++x)
      if (w.cell(x, y) == 0) {
        sx = x;
        sy = y;
        break;
      }
  if (sx < 0) return false;
  const auto dist = bfs_field(w, sx, sy);
  for (int y = 0; y < w.height; ++y)
    for (int x = 0; x < w.width; ++x)
      if (w.cell(x, y) == 0 && dist[static_cast<std::size_t>(y) * w.width + x] < 0) return false;
  return true;
}

double geodesic_distance(const World& w, int ax, int ay, int bx, int by) {
  if (!w.is_free(ax, ay) || !w.is_free(bx, by))
    throw ContractError("geodesic_distance: endpoints must be free cells");
  const auto dist = bfs_field(w, ax, ay);
  const int d = dist[static_cast<std::size_t>(by) * w.width + bx];
  return d < 0 ? std::numeric_limits<double>::infinity() : static_cast<double>(d);
}

// ---------------------------------------------------------------------------
// Generation

namespace {

const char* const kClassNames[] = {"wall",  "chair", "table", "sofa",  "bed",
                                   "shelf", "plant", "lamp",  "desk",  "cabinet",
                                   "sink",  "stove", "crate", "piano", "rug"};

char class_glyph(int id) {
  if (id == kWallClass) return '#';
  return static_cast<char>('a' + (id - 2) % 26);
}

std::string class_name(int id) {
  const int n = static_cast<int>(sizeof(kClassNames) / sizeof(kClassNames[0]));
  if (id - 1 < n) return kClassNames[id - 1];
  return "object" + std::to_string(id);
}

struct Rect {
  int x0, y0, w, h;  // interior span, walls excluded
};

// Split rooms with straight walls + one-cell doors until n_rooms pieces.
void carve_rooms(World& world, int n_rooms, Rng& rng) {
  std::vector<Rect> rooms{{1, 1, world.width - 2, world.height - 2}};
  auto set_wall = [&](int x, int y) {
    world.cells[static_cast<std::size_t>(y) * world.width + x] = kWallClass;
  };
  while (static_cast<int>(rooms.size()) < n_rooms) {
    // largest splittable room; a split needs >= 5 cells along the split axis
    // (2 + wall + 2)
    int best = -1;
    for (std::size_t i = 0; i < rooms.size(); ++i) {
      if (std::max(rooms[i].w, rooms[i].h) < 5) continue;
      if (best < 0 || rooms[i].w * rooms[i].h > rooms[best].w * rooms[best].h)
        best = static_cast<int>(i);
    }
    if (best < 0)
      throw GenerationError("generate_world: cannot split into " + std::to_string(n_rooms) +
                            " rooms at this size");
    Rect room = rooms[static_cast<std::size_t>(best)];
    rooms.erase(rooms.begin() + best);
    const bool vertical = room.w >= room.h;  // wall runs top-bottom
    if (vertical) {
      const int wx = room.x0 + 2 + rng.uniform_int(0, room.w - 5);
      const int door_y = room.y0 + rng.uniform_int(0, room.h - 1);
      for (int y = room.y0; y < room.y0 + room.h; ++y)
        if (y != door_y) set_wall(wx, y);
      rooms.push_back({room.x0, room.y0, wx - room.x0, room.h});
      rooms.push_back({wx + 1, room.y0, room.x0 + room.w - wx - 1, room.h});
    } else {
      const int wy = room.y0 + 2 + rng.uniform_int(0, room.h - 5);
      const int door_x = room.x0 + rng.uniform_int(0, room.w - 1);
      for (int x = room.x0; x < room.x0 + room.w; ++x)
        if (x != door_x) set_wall(x, wy);
      rooms.push_back({room.x0, room.y0, room.w, wy - room.y0});
      rooms.push_back({room.x0, wy + 1, room.w, room.y0 + room.h - wy - 1});
    }
  }
}

}  // namespace

World generate_world(const WorldGenParams& p, Rng& rng) {
  if (p.width < 7 || p.height < 7)
    throw ContractError("generate_world: width and height must be >= 7");
  if (p.n_rooms < 1) throw ContractError("generate_world: n_rooms must be >= 1");
  if (p.n_classes < 2) throw ContractError("generate_world: n_classes must be >= 2");
  if (p.furniture_density < 0.0 || p.furniture_density > 1.0)
    throw ContractError("generate_world: furniture_density must be in [0,1]");

  World base;
  base.width = p.width;
  base.height = p.height;
  base.n_classes = p.n_classes;
  for (int c = 1; c <= p.n_classes; ++c) base.classes.push_back({c, class_glyph(c), class_name(c)});

  constexpr int kMaxTries = 50;
  std::string last_failure = "room carving never succeeded";
  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    World w = base;
    w.cells.assign(static_cast<std::size_t>(p.width) * p.height, 0);
    for (int x = 0; x < p.width; ++x) {
      w.cells[static_cast<std::size_t>(x)] = kWallClass;
      w.cells[static_cast<std::size_t>(p.height - 1) * p.width + x] = kWallClass;
    }
    for (int y = 0; y < p.height; ++y) {
      w.cells[static_cast<std::size_t>(y) * p.width] = kWallClass;
      w.cells[static_cast<std::size_t>(y) * p.width + p.width - 1] = kWallClass;
    }
    try {
      carve_rooms(w, p.n_rooms, rng);
    } catch (const GenerationError& e) {
      last_failure = e.what();
      continue;
    }
    // A wall may seal an earlier door's mouth; reject such layouts.
    if (!free_cells_connected(w)) {
      last_failure = "room walls disconnected the layout";
      continue;
    }
    if (p.furniture_density > 0.0) {
      for (int y = 1; y < p.height - 1; ++y)
        for (int x = 1; x < p.width - 1; ++x) {
          if (w.cell(x, y) != 0) continue;
          if (rng.uniform() < p.furniture_density)
            w.cells[static_cast<std::size_t>(y) * p.width + x] =
                static_cast<std::uint8_t>(rng.uniform_int(2, p.n_classes));
        }
      if (w.free_cell_count() < 2 || !free_cells_connected(w)) {
        last_failure = "furniture disconnected the layout";
        continue;
      }
    }
    return w;
  }
  throw GenerationError("generate_world: " + last_failure + " after " +
                        std::to_string(kMaxTries) + " attempts");
}

// ---------------------------------------------------------------------------
// SEMWORLD v1

std::string save_world(const World& w) {
  std::ostringstream os;
  os << "SEMWORLD 1\n" << w.width << ' ' << w.height << ' ' << w.n_classes << '\n';
  for (const auto& c : w.classes) os << c.id << ' ' << c.glyph << ' ' << c.name << '\n';
  for (int y = 0; y < w.height; ++y) {
    for (int x = 0; x < w.width; ++x) {
      const int c = w.cell(x, y);
      os << (c == 0 ? '.' : w.classes[static_cast<std::size_t>(c - 1)].glyph);
    }
    os << '\n';
  }
  return os.str();
}

World load_world(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  auto next_line = [&]() {
    if (!std::getline(is, line))
      throw ParseError("SEMWORLD: unexpected end of input after line " + std::to_string(line_no));
    ++line_no;
  };

  next_line();
  if (line != "SEMWORLD 1")
    throw ParseError("SEMWORLD line 1: bad header '" + line + "'");
  next_line();
  World w;
  {
    std::istringstream hdr(line);
    if (!(hdr >> w.width >> w.height >> w.n_classes) || w.width < 1 || w.height < 1 ||
        w.n_classes < 1)
      throw ParseError("SEMWORLD line 2: expected 'width height n_classes', got '" + line + "'");
  }
  std::vector<char> glyph_of(static_cast<std::size_t>(w.n_classes) + 1, 0);
  for (int i = 0; i < w.n_classes; ++i) {
    next_line();
    std::istringstream cs(line);
    ClassInfo info;
    if (!(cs >> info.id >> info.glyph >> info.name) || info.id != i + 1)
      throw ParseError("SEMWORLD line " + std::to_string(line_no) +
                       ": expected class declaration 'id char name' for id " +
                       std::to_string(i + 1));
    if (info.glyph == '.')
      throw ParseError("SEMWORLD line " + std::to_string(line_no) + ": '.' is reserved for free");
    w.classes.push_back(info);
    glyph_of[static_cast<std::size_t>(info.id)] = info.glyph;
  }
  w.cells.assign(static_cast<std::size_t>(w.width) * w.height, 0);
  for (int y = 0; y < w.height; ++y) {
    next_line();
    if (static_cast<int>(line.size()) != w.width)
      throw ParseError("SEMWORLD line " + std::to_string(line_no) + ": row has " +
                       std::to_string(line.size()) + " cells, expected " +
                       std::to_string(w.width));
    for (int x = 0; x < w.width; ++x) {
      const char g = line[static_cast<std::size_t>(x)];
      if (g == '.') continue;
      int id = 0;
      for (int c = 1; c <= w.n_classes; ++c)
        if (glyph_of[static_cast<std::size_t>(c)] == g) id = c;
      if (id == 0)
        throw ParseError("SEMWORLD line " + std::to_string(line_no) + ": unknown class char '" +
                         std::string(1, g) + "'");
      w.cells[static_cast<std::size_t>(y) * w.width + x] = static_cast<std::uint8_t>(id);
    }
  }
  return w;
}

World load_world_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open world file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  try {
    return load_world(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void save_world_file(const World& w, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << save_world(w);
  if (!os) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Episode sampling

Episode sample_episode(std::shared_ptr<const World> world, Rng& rng, double min_geo,
                       double max_geo) {
  const World& w = *world;
  if (w.free_cell_count() < 2) throw ContractError("sample_episode: world needs >= 2 free cells");
  if (min_geo > max_geo) throw ContractError("sample_episode: min_geo > max_geo");

  std::vector<int> free_cells;
  for (int y = 0; y < w.height; ++y)
    for (int x = 0; x < w.width; ++x)
      if (w.cell(x, y) == 0) free_cells.push_back(y * w.width + x);

  constexpr int kMaxTries = 100;
  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    const int start = free_cells[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(free_cells.size()) - 1))];
    const Heading heading = static_cast<Heading>(rng.uniform_int(0, 3));
    const int sx = start % w.width, sy = start / w.width;
    const auto field = bfs_field(w, sx, sy);
    std::vector<int> candidates;
    for (int idx : free_cells) {
      const int d = field[static_cast<std::size_t>(idx)];
      if (d >= 1 && d >= min_geo && d <= max_geo) candidates.push_back(idx);
    }
    if (candidates.empty()) continue;
    const int goal = candidates[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(candidates.size()) - 1))];
    Episode ep;
    ep.world = world;
    ep.start = Pose{sx, sy, heading};
    ep.goal_x = goal % w.width;
    ep.goal_y = goal / w.width;
    ep.shortest_path = field[static_cast<std::size_t>(goal)];
    ep.goal_field = bfs_field(w, ep.goal_x, ep.goal_y);
    return ep;
  }
  throw GenerationError("sample_episode: no start/goal pair in the geodesic band after " +
                        std::to_string(kMaxTries) + " tries");
}

}  // namespace mast
