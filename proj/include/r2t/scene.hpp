#pragma once

// Synthetic bird's-eye-view scenes: objects on a square grid, thin
// axis-aligned occluding walls, and agents on the four edge midpoints
// looking at the grid center.
//
// Coordinates: cell (x, y) has its center at the point (x, y); maps are
// stored row-major as index y * grid_size + x. Walls run along half-integer
// lines between cell rows/columns so that rays between cell centers never
// graze a wall lengthwise.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace r2t {

enum class Occlusion { kLow, kMedium, kHigh };

int wall_count(Occlusion level);
std::string to_string(Occlusion level);
Occlusion parse_occlusion(std::string_view name);

struct SceneConfig {
  int grid_size = 64;
  int n_agents = 4;
  int n_objects = 20;
  double obs_noise_sigma = 0.5;
  Occlusion occlusion = Occlusion::kMedium;
  double fov_deg = 90.0;
  double range = 30.0;
  double splat_sigma = 1.0;

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
  bool operator==(const SceneConfig&) const = default;
};

struct Point {
  double x = 0, y = 0;
  bool operator==(const Point&) const = default;
};

struct Cell {
  int x = 0, y = 0;
  bool operator==(const Cell&) const = default;
};

struct AgentPose {
  double x = 0, y = 0;
  double heading = 0;  // radians, 0 = +x
  int id = 0;
  bool operator==(const AgentPose&) const = default;
};

/// Zero-thickness, axis-aligned occluder.
struct Wall {
  Point a, b;
  bool operator==(const Wall&) const = default;
};

struct Scene {
  SceneConfig config;
  uint64_t seed = 0;
  uint64_t scene_id = 0;
  std::vector<Cell> objects;
  std::vector<Wall> walls;
  std::vector<AgentPose> agents;
  std::vector<float> gt_heatmap;     // grid_size^2, values in [0,1]
  std::vector<uint8_t> gt_binary;    // gt_heatmap > 0.5

  int grid() const { return config.grid_size; }
};

/// 2 x G x G: channel 0 = noisy detection splats, channel 1 = visibility mask.
struct Observation {
  int grid_size = 0;
  std::vector<float> channels;

  float detection(int x, int y) const { return channels[static_cast<size_t>(y) * grid_size + x]; }
  float visibility(int x, int y) const {
    return channels[static_cast<size_t>(grid_size) * grid_size + static_cast<size_t>(y) * grid_size + x];
  }
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kWallMinLength = 8;
inline constexpr int kWallMaxLength = 16;
inline constexpr int kWallMargin = 2;
inline constexpr int kPlacementAttempts = 1000;
inline constexpr double kSplatRadius = 3.0;

/// Edge-midpoint poses (south, east, north, west) facing the grid center.
std::vector<AgentPose> cardinal_agents(int grid_size, int n_agents);

/// Deterministic in (config, seed, scene_id). Walls of a lower occlusion
/// level are a prefix of the walls of a higher one and the object layout
/// does not depend on the occlusion level.
Scene generate_scene(const SceneConfig& config, uint64_t seed, uint64_t scene_id);

/// Regenerates the same scene (same seed/id) at another occlusion level.
Scene with_occlusion(const Scene& scene, Occlusion level);

/// Max-combines exp(-d^2 / (2 sigma^2)) into `map` for cells within
/// kSplatRadius of (cx, cy).
void splat_max(std::vector<float>& map, int grid_size, double cx, double cy, double sigma);

bool line_of_sight(std::span<const Wall> walls, Point from, Point to);
bool line_of_sight(const Scene& scene, Point from, Point to);

/// Range, field-of-view and line-of-sight test for one cell.
bool visible(const Scene& scene, const AgentPose& agent, Cell cell);
std::vector<uint8_t> visibility_map(const Scene& scene, const AgentPose& agent);

Observation render_observation(const Scene& scene, const AgentPose& agent, uint64_t seed);

}  // namespace r2t
