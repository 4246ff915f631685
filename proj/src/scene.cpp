#include "r2t/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "r2t/rng.hpp"

namespace r2t {

int wall_count(Occlusion level) {
  switch (level) {
    case Occlusion::kLow: return 3;
    case Occlusion::kMedium: return 6;
    case Occlusion::kHigh: return 10;
  }
  return 0;
}

std::string to_string(Occlusion level) {
  switch (level) {
    case Occlusion::kLow: return "low";
    case Occlusion::kMedium: return "medium";
    case Occlusion::kHigh: return "high";
  }
  return "?";
}

Occlusion parse_occlusion(std::string_view name) {
  if (name == "low") return Occlusion::kLow;
  if (name == "medium") return Occlusion::kMedium;
  if (name == "high") return Occlusion::kHigh;
  throw std::invalid_argument("unknown occlusion level '" + std::string(name) + "' (expected low|medium|high)");
}

void SceneConfig::validate() const {
  if (grid_size <= 0) throw std::invalid_argument("grid_size must be positive");
  if (n_agents < 1 || n_agents > 4) throw std::invalid_argument("n_agents must be in [1,4]");
  if (n_objects < 0) throw std::invalid_argument("n_objects must be non-negative");
  if (obs_noise_sigma < 0) throw std::invalid_argument("obs_noise_sigma must be non-negative");
  if (fov_deg <= 0 || fov_deg > 360) throw std::invalid_argument("fov_deg must be in (0,360]");
  if (range <= 0) throw std::invalid_argument("range must be positive");
  if (splat_sigma <= 0) throw std::invalid_argument("splat_sigma must be positive");
}

std::vector<AgentPose> cardinal_agents(int grid_size, int n_agents) {
  const double mid = (grid_size - 1) / 2.0;
  const double far = grid_size - 1;
  const double pi = std::numbers::pi;
  std::vector<AgentPose> all = {
      {mid, 0.0, pi / 2, 0},
      {far, mid, pi, 1},
      {mid, far, -pi / 2, 2},
      {0.0, mid, 0.0, 3},
  };
  all.resize(n_agents);
  return all;
}

namespace {

struct Occupancy {
  int g;
  std::vector<uint8_t> cells;
  explicit Occupancy(int grid) : g(grid), cells(static_cast<size_t>(grid) * grid, 0) {}
  uint8_t& at(int x, int y) { return cells[static_cast<size_t>(y) * g + x]; }
};

// Cells flanking a wall: two rows (horizontal) or two columns (vertical).
std::vector<Cell> wall_cells(const Wall& w) {
  std::vector<Cell> out;
  if (w.a.y == w.b.y) {
    const int row = static_cast<int>(std::floor(w.a.y));
    for (int x = static_cast<int>(std::ceil(std::min(w.a.x, w.b.x))); x < std::max(w.a.x, w.b.x); ++x) {
      out.push_back({x, row});
      out.push_back({x, row + 1});
    }
  } else {
    const int col = static_cast<int>(std::floor(w.a.x));
    for (int y = static_cast<int>(std::ceil(std::min(w.a.y, w.b.y))); y < std::max(w.a.y, w.b.y); ++y) {
      out.push_back({col, y});
      out.push_back({col + 1, y});
    }
  }
  return out;
}

std::vector<Wall> place_walls(const SceneConfig& cfg, uint64_t seed, uint64_t scene_id, Occupancy& occ) {
  const int g = cfg.grid_size;
  const int n = wall_count(Occlusion::kHigh);
  CounterRng rng(derive_key(Stream::kWalls, {seed, scene_id}));
  std::vector<Wall> walls;
  for (int i = 0; i < n; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const bool horizontal = rng.uniform() < 0.5;
      const int len = static_cast<int>(rng.uniform_int(kWallMinLength, kWallMaxLength));
      const int across_hi = g - 2 - kWallMargin;
      const int along_hi = g - kWallMargin - len;
      if (across_hi < kWallMargin || along_hi < kWallMargin) continue;
      const int across = static_cast<int>(rng.uniform_int(kWallMargin, across_hi));
      const int along = static_cast<int>(rng.uniform_int(kWallMargin, along_hi));
      Wall w;
      if (horizontal)
        w = {{along - 0.5, across + 0.5}, {along + len - 0.5, across + 0.5}};
      else
        w = {{across + 0.5, along - 0.5}, {across + 0.5, along + len - 0.5}};
      const auto cells = wall_cells(w);
      const bool free = std::all_of(cells.begin(), cells.end(), [&](Cell c) { return occ.at(c.x, c.y) == 0; });
      if (!free) continue;
      for (Cell c : cells) occ.at(c.x, c.y) = 1;
      walls.push_back(w);
      placed = true;
    }
    if (!placed)
      throw GenerationError("could not place wall " + std::to_string(i) + " without overlap after " +
                            std::to_string(kPlacementAttempts) + " attempts");
  }
  return walls;
}

std::vector<Cell> place_objects(const SceneConfig& cfg, uint64_t seed, uint64_t scene_id, Occupancy& occ) {
  const int g = cfg.grid_size;
  CounterRng rng(derive_key(Stream::kObjects, {seed, scene_id}));
  std::vector<Cell> objects;
  for (int i = 0; i < cfg.n_objects; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const int x = static_cast<int>(rng.uniform_int(0, g - 1));
      const int y = static_cast<int>(rng.uniform_int(0, g - 1));
      if (occ.at(x, y) != 0) continue;
      occ.at(x, y) = 2;
      objects.push_back({x, y});
      placed = true;
    }
    if (!placed)
      throw GenerationError("could not place object " + std::to_string(i) + " after " +
                            std::to_string(kPlacementAttempts) + " attempts");
  }
  return objects;
}

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

bool on_segment(Point p, Point a, Point b) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

// Closed segment intersection via orientation signs.
bool segments_intersect(Point p1, Point p2, Point q1, Point q2) {
  const double d1 = cross(q1, q2, p1);
  const double d2 = cross(q1, q2, p2);
  const double d3 = cross(p1, p2, q1);
  const double d4 = cross(p1, p2, q2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  if (d1 == 0 && on_segment(p1, q1, q2)) return true;
  if (d2 == 0 && on_segment(p2, q1, q2)) return true;
  if (d3 == 0 && on_segment(q1, p1, p2)) return true;
  if (d4 == 0 && on_segment(q2, p1, p2)) return true;
  return false;
}

double wrap_angle(double a) {
  const double two_pi = 2 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a < 0) a += two_pi;
  return a - std::numbers::pi;
}

}  // namespace

void splat_max(std::vector<float>& map, int grid_size, double cx, double cy, double sigma) {
  const int r = static_cast<int>(std::ceil(kSplatRadius));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx)) - r);
  const int x1 = std::min(grid_size - 1, static_cast<int>(std::ceil(cx)) + r);
  const int y0 = std::max(0, static_cast<int>(std::floor(cy)) - r);
  const int y1 = std::min(grid_size - 1, static_cast<int>(std::ceil(cy)) + r);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      if (d2 > kSplatRadius * kSplatRadius) continue;
      const float v = static_cast<float>(std::exp(-d2 * inv));
      float& m = map[static_cast<size_t>(y) * grid_size + x];
      m = std::max(m, v);
    }
}

Scene generate_scene(const SceneConfig& config, uint64_t seed, uint64_t scene_id) {
  config.validate();
  Scene s;
  s.config = config;
  s.seed = seed;
  s.scene_id = scene_id;
  // Objects avoid the full high-occlusion wall set; lower levels keep a prefix.
  Occupancy occ(config.grid_size);
  s.walls = place_walls(config, seed, scene_id, occ);
  s.objects = place_objects(config, seed, scene_id, occ);
  s.walls.resize(static_cast<size_t>(wall_count(config.occlusion)));
  s.agents = cardinal_agents(config.grid_size, config.n_agents);
  const size_t cells = static_cast<size_t>(config.grid_size) * config.grid_size;
  s.gt_heatmap.assign(cells, 0.0f);
  for (Cell c : s.objects) splat_max(s.gt_heatmap, config.grid_size, c.x, c.y, config.splat_sigma);
  s.gt_binary.resize(cells);
  for (size_t i = 0; i < cells; ++i) s.gt_binary[i] = s.gt_heatmap[i] > 0.5f ? 1 : 0;
  return s;
}

Scene with_occlusion(const Scene& scene, Occlusion level) {
  SceneConfig cfg = scene.config;
  cfg.occlusion = level;
  return generate_scene(cfg, scene.seed, scene.scene_id);
}

bool line_of_sight(std::span<const Wall> walls, Point from, Point to) {
  for (const Wall& w : walls)
    if (segments_intersect(from, to, w.a, w.b)) return false;
  return true;
}

bool line_of_sight(const Scene& scene, Point from, Point to) { return line_of_sight(scene.walls, from, to); }

bool visible(const Scene& scene, const AgentPose& agent, Cell cell) {
  const double dx = cell.x - agent.x;
  const double dy = cell.y - agent.y;
  const double d2 = dx * dx + dy * dy;
  const double range = scene.config.range;
  if (d2 > range * range) return false;
  if (d2 > 0) {
    const double off = std::abs(wrap_angle(std::atan2(dy, dx) - agent.heading));
    const double half_fov = scene.config.fov_deg * std::numbers::pi / 360.0;
    if (off > half_fov + 1e-12) return false;
  }
  return line_of_sight(scene, {agent.x, agent.y}, {static_cast<double>(cell.x), static_cast<double>(cell.y)});
}

std::vector<uint8_t> visibility_map(const Scene& scene, const AgentPose& agent) {
  const int g = scene.grid();
  std::vector<uint8_t> vis(static_cast<size_t>(g) * g);
  for (int y = 0; y < g; ++y)
    for (int x = 0; x < g; ++x) vis[static_cast<size_t>(y) * g + x] = visible(scene, agent, {x, y}) ? 1 : 0;
  return vis;
}

Observation render_observation(const Scene& scene, const AgentPose& agent, uint64_t seed) {
  const int g = scene.grid();
  const size_t plane = static_cast<size_t>(g) * g;
  Observation obs;
  obs.grid_size = g;
  obs.channels.assign(2 * plane, 0.0f);
  const auto vis = visibility_map(scene, agent);
  for (size_t i = 0; i < plane; ++i) obs.channels[plane + i] = static_cast<float>(vis[i]);

  std::vector<float> det(plane, 0.0f);
  CounterRng rng(derive_key(Stream::kObservationNoise,
                            {seed, scene.scene_id, static_cast<uint64_t>(agent.id)}));
  const double sigma = scene.config.obs_noise_sigma;
  for (Cell c : scene.objects) {
    const double nx = rng.normal(), ny = rng.normal();
    if (!vis[static_cast<size_t>(c.y) * g + c.x]) continue;
    splat_max(det, g, c.x + sigma * nx, c.y + sigma * ny, scene.config.splat_sigma);
  }
  for (size_t i = 0; i < plane; ++i) obs.channels[i] = vis[i] ? det[i] : 0.0f;
  return obs;
}

}  // namespace r2t
