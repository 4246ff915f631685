#include "r2t/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace r2t {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw std::invalid_argument(where + ": unknown field '" + key + "'");
}

template <typename V>
void read_opt(const json& j, const char* key, V& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs <= 0) throw std::invalid_argument("train.epochs must be positive");
  if (warmup_epochs < 0 || warmup_epochs >= epochs) throw std::invalid_argument("train.warmup_epochs must be in [0, epochs)");
  if (lr < 0 || weight_decay < 0 || grad_clip < 0 || lambda_bw < 0 || lambda_l1 < 0)
    throw std::invalid_argument("train: rates and weights must be non-negative");
  if (train_scenes <= 0 || val_scenes < 0 || test_scenes < 0) throw std::invalid_argument("train: bad split sizes");
  if (budgets.empty()) throw std::invalid_argument("train.budgets must not be empty");
  for (double b : budgets)
    if (b < 0 || b > 1) throw std::invalid_argument("train.budgets must lie in [0,1]");
  if (policies.empty()) throw std::invalid_argument("train.policies must not be empty");
  if (surrogate != "straight_through" && surrogate != "soft")
    throw std::invalid_argument("train.surrogate must be straight_through or soft");
}

void RunConfig::validate() const {
  if (version != kRunConfigVersion) throw std::invalid_argument("unsupported config version " + std::to_string(version));
  scene.validate();
  train.validate();
}

json to_json(const SceneConfig& c) {
  return json{{"grid_size", c.grid_size},         {"n_agents", c.n_agents},
              {"n_objects", c.n_objects},         {"obs_noise_sigma", c.obs_noise_sigma},
              {"occlusion_level", to_string(c.occlusion)}, {"fov_deg", c.fov_deg},
              {"range", c.range},                 {"splat_sigma", c.splat_sigma}};
}

SceneConfig scene_config_from_json(const json& j) {
  reject_unknown(j, {"grid_size", "n_agents", "n_objects", "obs_noise_sigma", "occlusion_level", "fov_deg", "range", "splat_sigma"},
                 "scene");
  SceneConfig c;
  read_opt(j, "grid_size", c.grid_size);
  read_opt(j, "n_agents", c.n_agents);
  read_opt(j, "n_objects", c.n_objects);
  read_opt(j, "obs_noise_sigma", c.obs_noise_sigma);
  if (j.contains("occlusion_level")) c.occlusion = parse_occlusion(j.at("occlusion_level").get<std::string>());
  read_opt(j, "fov_deg", c.fov_deg);
  read_opt(j, "range", c.range);
  read_opt(j, "splat_sigma", c.splat_sigma);
  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  return json{{"version", c.version},
              {"scene", to_json(c.scene)},
              {"train",
               {{"epochs", t.epochs},
                {"lr", t.lr},
                {"weight_decay", t.weight_decay},
                {"warmup_epochs", t.warmup_epochs},
                {"grad_clip", t.grad_clip},
                {"lambda_bw", t.lambda_bw},
                {"lambda_l1", t.lambda_l1},
                {"seeds", t.seeds},
                {"train_scenes", t.train_scenes},
                {"val_scenes", t.val_scenes},
                {"test_scenes", t.test_scenes},
                {"budgets", t.budgets},
                {"policies", t.policies},
                {"val_budget", t.val_budget},
                {"val_policy", t.val_policy},
                {"surrogate", t.surrogate}}},
              {"paths", {{"scenes", c.paths.scenes}, {"checkpoints", c.paths.checkpoints}, {"results", c.paths.results}}}};
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown(j, {"version", "scene", "train", "paths"}, "config");
  if (!j.contains("version")) throw std::invalid_argument("config: missing 'version'");
  RunConfig c;
  c.version = j.at("version").get<int>();
  if (c.version != kRunConfigVersion) throw std::invalid_argument("unsupported config version " + std::to_string(c.version));
  if (j.contains("scene")) c.scene = scene_config_from_json(j.at("scene"));
  if (j.contains("train")) {
    const json& tj = j.at("train");
    reject_unknown(tj,
                   {"epochs", "lr", "weight_decay", "warmup_epochs", "grad_clip", "lambda_bw", "lambda_l1", "seeds",
                    "train_scenes", "val_scenes", "test_scenes", "budgets", "policies", "val_budget", "val_policy",
                    "surrogate"},
                   "train");
    TrainConfig& t = c.train;
    read_opt(tj, "epochs", t.epochs);
    read_opt(tj, "lr", t.lr);
    read_opt(tj, "weight_decay", t.weight_decay);
    read_opt(tj, "warmup_epochs", t.warmup_epochs);
    read_opt(tj, "grad_clip", t.grad_clip);
    read_opt(tj, "lambda_bw", t.lambda_bw);
    read_opt(tj, "lambda_l1", t.lambda_l1);
    read_opt(tj, "seeds", t.seeds);
    read_opt(tj, "train_scenes", t.train_scenes);
    read_opt(tj, "val_scenes", t.val_scenes);
    read_opt(tj, "test_scenes", t.test_scenes);
    read_opt(tj, "budgets", t.budgets);
    read_opt(tj, "policies", t.policies);
    read_opt(tj, "val_budget", t.val_budget);
    read_opt(tj, "val_policy", t.val_policy);
    read_opt(tj, "surrogate", t.surrogate);
  }
  if (j.contains("paths")) {
    const json& pj = j.at("paths");
    reject_unknown(pj, {"scenes", "checkpoints", "results"}, "paths");
    read_opt(pj, "scenes", c.paths.scenes);
    read_opt(pj, "checkpoints", c.paths.checkpoints);
    read_opt(pj, "results", c.paths.results);
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace r2t
