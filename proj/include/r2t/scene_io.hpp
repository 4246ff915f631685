#pragma once

// On-disk scene format: <dir>/<split>/scene_<id>.json holds the config echo,
// objects, walls and agent poses; scene_<id>.r2ta holds the ground-truth
// heatmap as a G x G float array.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "r2t/scene.hpp"

namespace r2t {

enum class Split { kTrain, kVal, kTest };

std::string to_string(Split s);
Split parse_split(const std::string& name);
/// Scene ids are global across splits: train 0.., val 100000.., test 200000..
uint64_t split_id_offset(Split s);

nlohmann::json scene_to_json(const Scene& s);
/// Heatmap is supplied separately (it lives in the .r2ta file).
Scene scene_from_json(const nlohmann::json& j, std::vector<float> heatmap);

std::string scene_stem(uint64_t scene_id);
void write_scene(const std::filesystem::path& dir, const Scene& s);
Scene read_scene(const std::filesystem::path& json_path);

struct ManifestEntry {
  std::string file;  // relative to the split directory's parent
  uint64_t hash = 0;
  bool operator==(const ManifestEntry&) const = default;
};

/// Generates `count` scenes into <out>/<split>/. Refuses a non-empty target
/// directory unless `force`.
std::vector<ManifestEntry> generate_split(const SceneConfig& cfg, uint64_t seed, Split split, int count,
                                          const std::filesystem::path& out, bool force);

/// Hashes of every scene file in <root>/<split>/, sorted by file name.
std::vector<ManifestEntry> manifest_for(const std::filesystem::path& root, Split split);
std::string format_manifest(const std::vector<ManifestEntry>& entries);

/// All scenes of a split directory, ordered by scene id.
std::vector<Scene> load_split(const std::filesystem::path& split_dir);

}  // namespace r2t
