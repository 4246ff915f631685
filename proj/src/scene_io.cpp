#include "r2t/scene_io.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "r2t/binary_io.hpp"
#include "r2t/config.hpp"

namespace r2t {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + name + "' (expected train|val|test)");
}

uint64_t split_id_offset(Split s) {
  switch (s) {
    case Split::kTrain: return 0;
    case Split::kVal: return 100000;
    case Split::kTest: return 200000;
  }
  return 0;
}

std::string scene_stem(uint64_t scene_id) { return "scene_" + std::to_string(scene_id); }

json scene_to_json(const Scene& s) {
  json objects = json::array();
  for (Cell c : s.objects) objects.push_back({c.x, c.y});
  json walls = json::array();
  for (const Wall& w : s.walls) walls.push_back({w.a.x, w.a.y, w.b.x, w.b.y});
  json agents = json::array();
  for (const AgentPose& a : s.agents) agents.push_back({{"id", a.id}, {"x", a.x}, {"y", a.y}, {"heading", a.heading}});
  return json{{"version", 1},
              {"seed", s.seed},
              {"scene_id", s.scene_id},
              {"config", to_json(s.config)},
              {"objects", objects},
              {"walls", walls},
              {"agents", agents},
              {"heatmap", scene_stem(s.scene_id) + ".r2ta"}};
}

Scene scene_from_json(const json& j, std::vector<float> heatmap) {
  if (j.at("version").get<int>() != 1) throw FormatError("unsupported scene version");
  Scene s;
  s.seed = j.at("seed").get<uint64_t>();
  s.scene_id = j.at("scene_id").get<uint64_t>();
  s.config = scene_config_from_json(j.at("config"));
  for (const auto& o : j.at("objects")) s.objects.push_back({o.at(0).get<int>(), o.at(1).get<int>()});
  for (const auto& w : j.at("walls"))
    s.walls.push_back({{w.at(0).get<double>(), w.at(1).get<double>()}, {w.at(2).get<double>(), w.at(3).get<double>()}});
  for (const auto& a : j.at("agents"))
    s.agents.push_back({a.at("x").get<double>(), a.at("y").get<double>(), a.at("heading").get<double>(), a.at("id").get<int>()});
  const size_t cells = static_cast<size_t>(s.config.grid_size) * s.config.grid_size;
  if (heatmap.size() != cells) throw FormatError("heatmap size does not match grid_size");
  s.gt_heatmap = std::move(heatmap);
  s.gt_binary.resize(cells);
  for (size_t i = 0; i < cells; ++i) s.gt_binary[i] = s.gt_heatmap[i] > 0.5f ? 1 : 0;
  return s;
}

void write_scene(const fs::path& dir, const Scene& s) {
  const std::string stem = scene_stem(s.scene_id);
  const int g = s.grid();
  write_array(dir / (stem + ".r2ta"), {g, g}, s.gt_heatmap);
  atomic_write(dir / (stem + ".json"), scene_to_json(s).dump(1) + "\n");
}

Scene read_scene(const fs::path& json_path) {
  json j;
  try {
    j = json::parse(read_file(json_path));
  } catch (const json::parse_error& e) {
    throw FormatError(json_path.string() + ": " + e.what());
  }
  const auto arr = read_array(json_path.parent_path() / j.at("heatmap").get<std::string>());
  return scene_from_json(j, arr.data);
}

std::vector<ManifestEntry> generate_split(const SceneConfig& cfg, uint64_t seed, Split split, int count,
                                          const fs::path& out, bool force) {
  const fs::path dir = out / to_string(split);
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw std::invalid_argument("output directory " + dir.string() + " is not empty (use --force)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  const uint64_t offset = split_id_offset(split);
  for (int i = 0; i < count; ++i) write_scene(dir, generate_scene(cfg, seed, offset + static_cast<uint64_t>(i)));
  return manifest_for(out, split);
}

std::vector<ManifestEntry> manifest_for(const fs::path& root, Split split) {
  const fs::path dir = root / to_string(split);
  std::vector<ManifestEntry> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension();
    if (ext != ".json" && ext != ".r2ta") continue;
    out.push_back({to_string(split) + "/" + e.path().filename().string(), fnv1a64(read_file(e.path()))});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.file < b.file; });
  return out;
}

std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  std::ostringstream os;
  for (const auto& e : entries) os << hex64(e.hash) << "  " << e.file << "\n";
  return os.str();
}

std::vector<Scene> load_split(const fs::path& split_dir) {
  if (!fs::is_directory(split_dir)) throw std::invalid_argument("scene directory " + split_dir.string() + " does not exist");
  std::vector<Scene> scenes;
  for (const auto& e : fs::directory_iterator(split_dir))
    if (e.is_regular_file() && e.path().extension() == ".json") scenes.push_back(read_scene(e.path()));
  std::sort(scenes.begin(), scenes.end(), [](const Scene& a, const Scene& b) { return a.scene_id < b.scene_id; });
  return scenes;
}

}  // namespace r2t
