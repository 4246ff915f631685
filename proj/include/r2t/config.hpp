#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "r2t/scene.hpp"

namespace r2t {

inline constexpr int kRunConfigVersion = 1;

struct TrainConfig {
  int epochs = 60;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int warmup_epochs = 5;
  double grad_clip = 1.0;
  double lambda_bw = 0.01;
  double lambda_l1 = 1e-4;
  std::vector<uint64_t> seeds = {42, 123, 456, 789, 1024};
  int train_scenes = 500;
  int val_scenes = 80;
  int test_scenes = 150;
  std::vector<double> budgets = {0.1, 0.5, 1.0};
  std::vector<std::string> policies = {"r2t", "where2comm", "ic3net", "mask", "always"};
  double val_budget = 0.5;
  std::string val_policy = "r2t";
  /// "straight_through" (hard selection forward, surrogate gradient) or
  /// "soft" (selected features scaled by the surrogate weight).
  std::string surrogate = "straight_through";

  void validate() const;
};

struct PathsConfig {
  std::string scenes;
  std::string checkpoints;
  std::string results;
};

struct RunConfig {
  int version = kRunConfigVersion;
  SceneConfig scene;
  TrainConfig train;
  PathsConfig paths;

  void validate() const;
};

nlohmann::json to_json(const SceneConfig& c);
SceneConfig scene_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
/// Rejects unknown fields and version mismatches (std::invalid_argument).
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace r2t
