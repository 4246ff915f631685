// r2t: scene generation, training, evaluation and reporting.

#include <omp.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "r2t/binary_io.hpp"
#include "r2t/config.hpp"
#include "r2t/evaluator.hpp"
#include "r2t/scene_io.hpp"
#include "r2t/trainer.hpp"

namespace fs = std::filesystem;
using namespace r2t;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

void print_header(const std::string& command, const nlohmann::json& effective) {
  std::cout << "# r2t " << command << " " << effective.dump() << "\n";
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out += suffix;
  return out;
}

fs::path best_path_for(const fs::path& ckpt) {
  fs::path out = ckpt;
  out.replace_extension(".best" + ckpt.extension().string());
  return out;
}

std::vector<Scene> load_or_fail(const fs::path& dir) {
  auto scenes = load_split(dir);
  if (scenes.empty()) throw std::invalid_argument("no scenes found in " + dir.string());
  return scenes;
}

int cmd_gen(const std::string& config_path, const fs::path& out, const std::string& split, uint64_t seed, bool force) {
  const RunConfig cfg = config_or_default(config_path);
  print_header("gen-scenes", {{"config", to_json(cfg)}, {"out", out.string()}, {"split", split}, {"seed", seed}});
  std::vector<Split> splits;
  if (split == "all") splits = {Split::kTrain, Split::kVal, Split::kTest};
  else splits = {parse_split(split)};
  for (Split s : splits) {
    const int count = s == Split::kTrain ? cfg.train.train_scenes : s == Split::kVal ? cfg.train.val_scenes : cfg.train.test_scenes;
    const auto manifest = generate_split(cfg.scene, seed, s, count, out, force);
    const std::string text = format_manifest(manifest);
    atomic_write(out / ("manifest_" + to_string(s) + ".txt"), text);
    std::cout << text;
    std::cerr << "wrote " << count << " " << to_string(s) << " scenes to " << (out / to_string(s)).string() << "\n";
  }
  return kExitOk;
}

int cmd_train(const std::string& config_path, const fs::path& scenes, uint64_t seed, const fs::path& out,
              long max_steps) {
  const RunConfig cfg = config_or_default(config_path);
  print_header("train", {{"config", to_json(cfg)}, {"scenes", scenes.string()}, {"seed", seed}, {"out", out.string()},
                         {"max_steps", max_steps}});
  auto train = prepare_scenes(load_or_fail(scenes / "train"));
  std::vector<PreparedScene> val;
  if (fs::is_directory(scenes / "val")) val = prepare_scenes(load_split(scenes / "val"));
  Model<float> model(seed);
  TrainOutputs outputs{out, best_path_for(out), with_suffix(out, ".log.csv"), with_suffix(out, ".val.csv")};
  TrainHooks hooks;
  hooks.max_steps = max_steps;
  const auto start = std::chrono::steady_clock::now();
  hooks.on_epoch = [&](int epoch, double ap) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "epoch " << epoch << " val_ap " << ap << " elapsed " << secs << "s\n";
  };
  try {
    const auto res = train_one_seed(model, cfg.train, seed, train, val, outputs, hooks);
    std::cout << "best_epoch " << res.best_epoch << " best_val_ap " << res.best_val_ap << " steps " << res.steps << "\n";
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "; diagnostic dump: " << e.dump_path.string() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_eval(const fs::path& ckpt, const fs::path& scenes, const std::string& policy, double budget,
             const std::string& occlusion, double drop, uint64_t seed, const fs::path& out) {
  CellSpec cell{parse_policy(policy), budget, parse_occlusion(occlusion), drop};
  if (budget < 0 || budget > 1) throw std::invalid_argument("--budget must lie in [0,1]");
  if (drop < 0 || drop > 1) throw std::invalid_argument("--drop must lie in [0,1]");
  print_header("eval", {{"ckpt", ckpt.string()}, {"scenes", scenes.string()}, {"policy", policy}, {"budget", budget},
                        {"occlusion", occlusion}, {"drop", drop}, {"seed", seed}, {"out", out.string()}});
  Model<float> model(0);
  model.load(ckpt);
  std::vector<Scene> raw = load_or_fail(scenes);
  for (auto& s : raw)
    if (s.config.occlusion != cell.occlusion) s = with_occlusion(s, cell.occlusion);
  const auto prepared = prepare_scenes(std::move(raw));
  const EvalRecord rec = evaluate_cell(model, prepared, cell, seed);
  if (!out.empty()) write_records(out, {rec});
  std::cout << records_header() << "\n" << format_record(rec) << "\n";
  return kExitOk;
}

int cmd_sweep(const fs::path& ckpt_dir, const fs::path& scenes_root, const std::string& axis_name,
              const std::vector<uint64_t>& seeds, const fs::path& out, const std::string& which) {
  const SweepAxis axis = parse_axis(axis_name);
  if (which != "best" && which != "final") throw std::invalid_argument("--checkpoint must be best or final");
  print_header("sweep", {{"ckpt_dir", ckpt_dir.string()}, {"scenes", scenes_root.string()}, {"axes", axis_name},
                         {"seeds", seeds}, {"out", out.string()}, {"checkpoint", which}});
  std::vector<EvalRecord> all;
  std::vector<std::string> missing;
  for (uint64_t seed : seeds) {
    const fs::path ckpt =
        ckpt_dir / ("seed_" + std::to_string(seed) + (which == "best" ? ".best.r2tc" : ".r2tc"));
    const fs::path test_dir = scenes_root / ("seed_" + std::to_string(seed)) / "test";
    if (!fs::exists(ckpt)) {
      missing.push_back(ckpt.string());
      std::cerr << "warning: missing checkpoint " << ckpt.string() << ", skipping seed " << seed << "\n";
      continue;
    }
    Model<float> model(0);
    model.load(ckpt);
    const auto recs = run_sweep(model, load_or_fail(test_dir), axis, seed);
    all.insert(all.end(), recs.begin(), recs.end());
    std::cerr << "seed " << seed << ": " << recs.size() << " cells\n";
  }
  write_records(out, all);
  std::cout << format_summary(summarize(all));
  if (!missing.empty()) {
    std::cerr << "warning: " << missing.size() << " checkpoint(s) missing:\n";
    for (const auto& m : missing) std::cerr << "  " << m << "\n";
    return kExitUsage;
  }
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& inputs, const fs::path& out) {
  print_header("report", {{"in", inputs}, {"out", out.string()}});
  fs::create_directories(out);
  std::string text;
  for (const auto& in : inputs) {
    const auto rows = summarize(read_records(in));
    const std::string stem = fs::path(in).stem().string();
    atomic_write(out / ("summary_" + stem + ".csv"), format_summary(rows));
    text += "== " + stem + " ==\n" + format_table(rows) + "\n";
  }
  atomic_write(out / "report.txt", text);
  std::cout << text;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* t = std::getenv("R2T_THREADS")) omp_set_num_threads(std::max(1, std::atoi(t)));

  CLI::App app{"Bandwidth-constrained cooperative perception testbed"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out, split = "all", scenes, policy, occlusion = "medium", ckpt, ckpt_dir, axis, which = "best";
  uint64_t seed = 42;
  bool force = false;
  long max_steps = 0;
  double budget = 0.5, drop = 0.0;
  std::vector<uint64_t> seeds = {42, 123, 456};
  std::vector<std::string> inputs;

  auto* gen = app.add_subcommand("gen-scenes", "Generate scene splits");
  gen->add_option("--config", config_path, "Run config JSON");
  gen->add_option("--out", out, "Output root directory")->required();
  gen->add_option("--split", split, "train|val|test|all")->check(CLI::IsMember({"train", "val", "test", "all"}));
  gen->add_option("--seed", seed, "Generation seed");
  gen->add_flag("--force", force, "Overwrite a non-empty output directory");

  auto* train = app.add_subcommand("train", "Train one seed");
  train->add_option("--config", config_path, "Run config JSON");
  train->add_option("--scenes", scenes, "Scene root holding train/ and val/")->required();
  train->add_option("--seed", seed, "Training seed");
  train->add_option("--out", out, "Final checkpoint path")->required();
  train->add_option("--max-steps", max_steps, "Stop early after this many steps");

  auto* eval = app.add_subcommand("eval", "Evaluate one cell");
  eval->add_option("--ckpt", ckpt, "Checkpoint")->required();
  eval->add_option("--scenes", scenes, "Directory of test scenes")->required();
  eval->add_option("--policy", policy, "Policy: " + policy_names())->required();
  eval->add_option("--budget", budget, "Budget fraction in [0,1]");
  eval->add_option("--occlusion", occlusion, "low|medium|high");
  eval->add_option("--drop", drop, "Packet drop rate in [0,1]");
  eval->add_option("--seed", seed, "Evaluation seed");
  eval->add_option("--out", out, "Results CSV");

  auto* sweep = app.add_subcommand("sweep", "Run an experiment sweep over seeds");
  sweep->add_option("--ckpt-dir", ckpt_dir, "Directory with seed_<N>.r2tc checkpoints")->required();
  sweep->add_option("--scenes", scenes, "Scene root holding seed_<N>/test")->required();
  sweep->add_option("--axes", axis, "bandwidth|occlusion|drop")->required();
  sweep->add_option("--seeds", seeds, "Seeds")->delimiter(',');
  sweep->add_option("--checkpoint", which, "best|final");
  sweep->add_option("--out", out, "Results CSV")->required();

  auto* report = app.add_subcommand("report", "Summarize results CSVs");
  report->add_option("--in", inputs, "Results CSVs")->required();
  report->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(config_path, out, split, seed, force);
    if (*train) return cmd_train(config_path, scenes, seed, out, max_steps);
    if (*eval) return cmd_eval(ckpt, scenes, policy, budget, occlusion, drop, seed, out);
    if (*sweep) return cmd_sweep(ckpt_dir, scenes, axis, seeds, out, which);
    if (*report) return cmd_report(inputs, out);
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "; diagnostic dump: " << e.dump_path.string() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
