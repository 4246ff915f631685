#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "loss_check.hpp"
#include "oracles.hpp"
#include "r2t/binary_io.hpp"
#include "r2t/config.hpp"
#include "r2t/evaluator.hpp"
#include "r2t/scene_io.hpp"
#include "testing.hpp"

using namespace r2t;
using r2t::testing::away_from_zero;
using r2t::testing::gradcheck;
using r2t::testing::random_values;
namespace fs = std::filesystem;

namespace {

using V = ag::Var<double>;
using Ins = std::vector<V>;

struct Verdict {
  bool pass = false;
  std::string detail;
};

const std::vector<PolicyKind> kSelective = {PolicyKind::kRandom,     PolicyKind::kConfidence, PolicyKind::kUncertainty,
                                            PolicyKind::kWhere2Comm, PolicyKind::kIc3Net,     PolicyKind::kMask,
                                            PolicyKind::kR2T};
const std::vector<PolicyKind> kDropPolicies = {PolicyKind::kR2T, PolicyKind::kWhere2Comm, PolicyKind::kIc3Net,
                                               PolicyKind::kConfidence};

auto t0 = std::chrono::steady_clock::now();

void log(const std::string& msg) {
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "[%7.1fs] %s\n", s, msg.c_str());
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// ---------------------------------------------------------------- artifacts

struct SeedRun {
  uint64_t seed = 0;
  std::vector<EvalRecord> bandwidth, occlusion, drop;
  std::map<PolicyKind, double> drop_all_ap;  // drop = 1.0
};

class Artifacts {
 public:
  Artifacts(fs::path root, RunConfig cfg) : root_(std::move(root)), cfg_(std::move(cfg)) {}

  fs::path scenes(uint64_t seed) const { return root_ / "scenes" / ("seed_" + std::to_string(seed)); }
  fs::path final_ckpt(uint64_t seed) const { return root_ / "ckpt" / ("seed_" + std::to_string(seed) + ".r2tc"); }
  fs::path best_ckpt(uint64_t seed) const { return root_ / "ckpt" / ("seed_" + std::to_string(seed) + ".best.r2tc"); }
  fs::path results(uint64_t seed, const std::string& axis) const {
    return root_ / "results" / ("seed_" + std::to_string(seed) + "_" + axis + ".csv");
  }
  const RunConfig& config() const { return cfg_; }

  void ensure() {
    const fs::path stamp = root_ / "config.json";
    if (fs::exists(stamp) && to_json(run_config_from_json(nlohmann::json::parse(read_file(stamp)))) != to_json(cfg_)) {
      log("cached artifacts were built with a different config; rebuilding");
      fs::remove_all(root_);
    }
    atomic_write(stamp, to_json(cfg_).dump(2) + "\n");
    for (uint64_t seed : cfg_.train.seeds) {
      ensure_scenes(seed);
      ensure_checkpoint(seed);
    }
  }

 private:
  void ensure_scenes(uint64_t seed) {
    const std::pair<Split, int> splits[] = {{Split::kTrain, cfg_.train.train_scenes},
                                            {Split::kVal, cfg_.train.val_scenes},
                                            {Split::kTest, cfg_.train.test_scenes}};
    for (const auto& [split, count] : splits) {
      const fs::path dir = scenes(seed) / to_string(split);
      if (fs::exists(dir) && manifest_for(scenes(seed), split).size() == static_cast<size_t>(count)) continue;
      log("generating " + to_string(split) + " scenes for seed " + std::to_string(seed));
      generate_split(cfg_.scene, seed, split, count, scenes(seed), true);
    }
  }

  void ensure_checkpoint(uint64_t seed) {
    if (fs::exists(final_ckpt(seed)) && fs::exists(best_ckpt(seed))) {
      log("using cached checkpoints for seed " + std::to_string(seed));
      return;
    }
    log("training seed " + std::to_string(seed) + " (" + std::to_string(cfg_.train.epochs) + " epochs)");
    const auto train = prepare_scenes(load_split(scenes(seed) / "train"));
    const auto val = prepare_scenes(load_split(scenes(seed) / "val"));
    Model<float> model(seed);
    TrainOutputs out;
    out.final_ckpt = final_ckpt(seed);
    out.best_ckpt = best_ckpt(seed);
    out.log_csv = final_ckpt(seed).string() + ".log.csv";
    out.val_csv = final_ckpt(seed).string() + ".val.csv";
    TrainHooks hooks;
    hooks.on_epoch = [&](int epoch, double ap) {
      log("  seed " + std::to_string(seed) + " epoch " + std::to_string(epoch) + " val_ap " + fmt(ap));
    };
    train_one_seed(model, cfg_.train, seed, train, val, out, hooks);
  }

  fs::path root_;
  RunConfig cfg_;
};

SeedRun evaluate_seed(const Artifacts& art, uint64_t seed) {
  SeedRun run;
  run.seed = seed;
  Model<float> model(seed);
  model.load(art.best_ckpt(seed));
  const auto test = load_split(art.scenes(seed) / "test");
  const std::pair<SweepAxis, std::vector<EvalRecord>*> axes[] = {
      {SweepAxis::kBandwidth, &run.bandwidth}, {SweepAxis::kOcclusion, &run.occlusion}, {SweepAxis::kDrop, &run.drop}};
  for (const auto& [axis, dst] : axes) {
    log("seed " + std::to_string(seed) + ": " + to_string(axis) + " sweep");
    *dst = run_sweep(model, test, axis, seed);
    write_records(art.results(seed, to_string(axis)), *dst);
  }
  const auto prepared = prepare_scenes(test);
  for (PolicyKind p : kDropPolicies)
    run.drop_all_ap[p] = evaluate_cell(model, prepared, {p, 0.5, Occlusion::kMedium, 1.0}, seed).ap;
  return run;
}

double find_ap(const std::vector<EvalRecord>& recs, PolicyKind p, double budget, const std::string& occlusion,
               double drop) {
  const std::string name = to_string(p);
  for (const auto& r : recs)
    if (r.policy == name && r.occlusion == occlusion && r.drop_rate == drop &&
        (p == PolicyKind::kNoComm || r.budget == budget))
      return r.ap;
  throw std::runtime_error("no result for " + name + " budget " + fmt(budget) + " " + occlusion + " drop " + fmt(drop));
}

// ---------------------------------------------------------------- criteria

Verdict gradient_correctness() {
  struct Case {
    std::string name;
    std::vector<Shape> shapes;
    std::vector<std::vector<double>> values;
    r2t::testing::OpFn fn;
  };
  const auto a = away_from_zero(4, 1), b = away_from_zero(4, 2);
  const auto m6a = random_values(6, 5), m6b = random_values(6, 6);
  const auto target = random_values(5, 32, 0, 1);
  std::vector<Case> cases = {
      {"add", {{4}, {4}}, {a, b}, [](auto&, const Ins& v) { return ag::add(v[0], v[1]); }},
      {"sub", {{4}, {4}}, {a, b}, [](auto&, const Ins& v) { return ag::sub(v[0], v[1]); }},
      {"mul", {{4}, {4}}, {a, b}, [](auto&, const Ins& v) { return ag::mul(v[0], v[1]); }},
      {"scale", {{4}}, {a}, [](auto&, const Ins& v) { return ag::scale(v[0], -2.5); }},
      {"relu", {{4}}, {a}, [](auto&, const Ins& v) { return ag::relu(v[0]); }},
      {"sigmoid", {{4}}, {a}, [](auto&, const Ins& v) { return ag::sigmoid(v[0]); }},
      {"linear", {{2, 3}, {3, 2}, {2}}, {m6a, m6b, random_values(2, 9)},
       [](auto&, const Ins& v) { return ag::linear(v[0], v[1], v[2]); }},
      {"softmax", {{2, 3}}, {random_values(6, 10, -2, 2)}, [](auto&, const Ins& v) { return ag::softmax(v[0], 1); }},
      {"layernorm", {{2, 4}, {4}, {4}}, {random_values(8, 12, -2, 2), random_values(4, 13), random_values(4, 14)},
       [](auto&, const Ins& v) { return ag::layernorm(v[0], v[1], v[2], -1, 1e-5); }},
      {"concat", {{2, 2}, {2, 3}}, {a, m6b}, [](auto&, const Ins& v) { return ag::concat<double>({v[0], v[1]}, 1); }},
      {"slice", {{2, 3}}, {m6b}, [](auto&, const Ins& v) { return ag::slice(v[0], 1, 1, 3); }},
      {"reshape", {{2, 3}}, {m6b}, [](auto&, const Ins& v) { return ag::reshape(v[0], {3, 2}); }},
      {"transpose", {{2, 3}}, {m6b}, [](auto&, const Ins& v) { return ag::transpose(v[0]); }},
      {"gather_rows", {{3, 2}}, {m6b}, [](auto&, const Ins& v) { return ag::gather_rows(v[0], {2, 0, 2}); }},
      {"repeat_rows", {{1, 4}}, {a}, [](auto&, const Ins& v) { return ag::repeat_rows(v[0], 3); }},
      {"sum", {{4}}, {a}, [](auto&, const Ins& v) { return ag::sum(v[0]); }},
      {"mean", {{4}}, {a}, [](auto&, const Ins& v) { return ag::mean(v[0]); }},
      {"mean_rows", {{2, 3}}, {m6a}, [](auto&, const Ins& v) { return ag::mean_rows(v[0]); }},
      {"abs_sum", {{4}}, {a}, [](auto&, const Ins& v) { return ag::abs_sum(v[0]); }},
      {"bce_with_logits", {{5}}, {random_values(5, 33, -4, 4)},
       [&](auto& t, const Ins& v) { return ag::bce_with_logits(v[0], t.constant({5}, target)); }},
      {"conv2d", {{2, 4, 4}, {2, 2, 3, 3}, {2}}, {random_values(32, 40), random_values(36, 41), random_values(2, 42)},
       [](auto&, const Ins& v) { return ag::conv2d(v[0], v[1], v[2], 2, 1); }},
      {"conv_transpose2d", {{2, 3, 3}, {2, 2, 3, 3}, {2}},
       {random_values(18, 43), random_values(36, 44), random_values(2, 45)},
       [](auto&, const Ins& v) { return ag::conv_transpose2d(v[0], v[1], v[2], 2, 1, 1); }},
      {"scale_rows", {{3, 2}, {3}}, {m6a, random_values(3, 51)},
       [](auto&, const Ins& v) { return ag::scale_rows(v[0], v[1]); }},
  };
  for (bool ta : {false, true})
    for (bool tb : {false, true})
      cases.push_back({"matmul", {ta ? Shape{3, 2} : Shape{2, 3}, tb ? Shape{2, 3} : Shape{3, 2}}, {m6a, m6b},
                       [=](auto&, const Ins& v) { return ag::matmul(v[0], v[1], ta, tb); }});

  double worst = 0;
  std::string worst_name;
  for (const auto& c : cases) {
    const double e = gradcheck(c.shapes, c.values, c.fn);
    if (e >= worst) {
      worst = e;
      worst_name = c.name;
    }
  }
  const PreparedScene ps = prepare_scene(generate_scene(SceneConfig{}, 42, 0));
  const double composed = r2t::testing::directional_error(ps, PolicyKind::kR2T, 0.5, 11);
  return {worst < 1e-4 && composed < 1e-3, std::to_string(cases.size()) + " primitive checks, max rel err " +
                                               fmt(worst, 3) + " (" + worst_name + ") < 1e-4; composed r2t loss " +
                                               fmt(composed, 3) + " < 1e-3"};
}

Verdict communication_gap(const std::vector<SeedRun>& runs) {
  bool ok = true;
  double worst_gain = 1e9;
  std::string worst;
  for (const auto& run : runs) {
    const double base = find_ap(run.bandwidth, PolicyKind::kNoComm, 0, "medium", 0);
    for (PolicyKind p : kSelective)
      for (double b : {0.1, 0.5, 1.0}) {
        const double gain = find_ap(run.bandwidth, p, b, "medium", 0) / base - 1.0;
        ok = ok && gain >= 0.30;
        if (gain < worst_gain) {
          worst_gain = gain;
          worst = to_string(p) + "@" + fmt(b) + " seed " + std::to_string(run.seed);
        }
      }
  }
  return {ok, "min relative gain over nocomm " + fmt(100 * worst_gain, 3) + "% (" + worst + "), need >= 30%"};
}

Verdict full_budget_convergence(const std::vector<SeedRun>& runs) {
  bool ok = true;
  std::string detail;
  for (const auto& run : runs) {
    std::set<double> aps;
    for (PolicyKind p : kAllPolicies)
      if (p != PolicyKind::kNoComm) aps.insert(find_ap(run.bandwidth, p, 1.0, "medium", 0));
    ok = ok && aps.size() == 1;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(run.seed) + ": " +
              std::to_string(aps.size()) + " distinct AP (" + fmt(*aps.begin(), 6) + ")";
  }
  return {ok, detail};
}

Verdict selective_band(const std::vector<SeedRun>& runs) {
  bool ok = true;
  double widest = 0;
  for (const auto& run : runs) {
    double lo = 1e9, hi = -1e9;
    for (PolicyKind p : kSelective) {
      const double ap = find_ap(run.bandwidth, p, 0.1, "medium", 0);
      lo = std::min(lo, ap);
      hi = std::max(hi, ap);
    }
    ok = ok && hi - lo <= 0.05;
    widest = std::max(widest, hi - lo);
  }
  return {ok, "widest max-min AP at B=0.1 " + fmt(widest, 3) + ", need <= 0.05"};
}

Verdict drop_degradation(const std::vector<SeedRun>& runs) {
  bool ok = true;
  double worst = 0;
  bool identity = true;
  for (const auto& run : runs) {
    const double nocomm = find_ap(run.bandwidth, PolicyKind::kNoComm, 0, "medium", 0);
    for (PolicyKind p : kDropPolicies) {
      const double d0 = find_ap(run.drop, p, 0.5, "medium", 0.0);
      const double d5 = find_ap(run.drop, p, 0.5, "medium", 0.5);
      const double rel = std::abs(d5 - d0) / d0;
      worst = std::max(worst, rel);
      ok = ok && rel <= 0.10;
      identity = identity && run.drop_all_ap.at(p) == nocomm;
    }
  }
  return {ok && identity, "max relative change at 50% drop " + fmt(100 * worst, 3) + "% (need <= 10%); drop=1 " +
                              (identity ? "equals" : "differs from") + " the local-only path"};
}

Verdict occlusion_ordering(const std::vector<SeedRun>& runs) {
  int monotone = 0;
  bool beat = true;
  std::string detail;
  for (const auto& run : runs) {
    const double lo = find_ap(run.occlusion, PolicyKind::kNoComm, 0.5, "low", 0);
    const double md = find_ap(run.occlusion, PolicyKind::kNoComm, 0.5, "medium", 0);
    const double hi = find_ap(run.occlusion, PolicyKind::kNoComm, 0.5, "high", 0);
    monotone += lo >= md && md >= hi ? 1 : 0;
    detail += "seed " + std::to_string(run.seed) + " nocomm " + fmt(lo, 3) + "/" + fmt(md, 3) + "/" + fmt(hi, 3) + "; ";
    for (const char* level : {"low", "medium", "high"}) {
      const double base = find_ap(run.occlusion, PolicyKind::kNoComm, 0.5, level, 0);
      for (PolicyKind p : kAllPolicies)
        if (p != PolicyKind::kNoComm && find_ap(run.occlusion, p, 0.5, level, 0) <= base) {
          beat = false;
          detail += to_string(p) + "@" + level + " does not beat nocomm; ";
        }
    }
  }
  detail += std::to_string(monotone) + "/" + std::to_string(runs.size()) + " seeds monotone";
  return {monotone >= 2 && beat, detail};
}

Verdict budget_law() {
  const Model<float> model(7);
  const std::vector<double> budgets = {0.0, 1.0 / 64, 0.1, 0.5, 0.99, 1.0};
  long checks = 0;
  bool ok = true;
  std::string failure;
  for (uint64_t id = 0; id < 20; ++id) {
    const PreparedScene ps = prepare_scene(generate_scene(SceneConfig{}, 1000 + id, id));
    for (PolicyKind p : kAllPolicies)
      for (double b : budgets) {
        ag::Tape<float> tape;
        tape.set_grad_enabled(false);
        const auto out = forward_scene(tape, model, ps, {p, b, 0.0, id, Surrogate::kNone});
        for (size_t r = 0; r < out.masks.size(); ++r) {
          long link_bytes = 0;
          for (const auto& m : out.masks[r]) {
            const int count = std::count(m.selected.begin(), m.selected.end(), 1);
            link_bytes += 128L * count;
            ++checks;
            if (count != m.k || (is_budget_filling(p) && count != std::min(regions_allowed(b), 64)) ||
                (p == PolicyKind::kNoComm && count != 0))
              ok = false, failure = to_string(p) + " at B=" + fmt(b) + " selected " + std::to_string(count);
          }
          if (out.bytes[r] != link_bytes) ok = false, failure = to_string(p) + " byte accounting";
          if (b == 1.0 && p != PolicyKind::kNoComm && p != PolicyKind::kIc3Net && out.bytes[r] != 24576)
            ok = false, failure = to_string(p) + " receiver gets " + std::to_string(out.bytes[r]) + " bytes at B=1";
        }
      }
  }
  return {ok, ok ? std::to_string(checks) + " link masks over 20 scenes x 10 policies x 6 budgets; 24576 bytes per receiver at B=1"
                 : failure};
}

Verdict oracles() {
  for (uint64_t id = 0; id < 100; ++id) {
    const Scene s = generate_scene(SceneConfig{}, 4242, id);
    const auto mass = region_mass(s.gt_heatmap, 64);
    const auto brute = oracle::region_mass(s.gt_heatmap, 64);
    for (double b : {1.0 / 64, 0.1, 0.5}) {
      PolicyContext ctx;
      ctx.budget = b;
      ctx.sender = s.agents[0];
      ctx.neighbors.assign(s.agents.begin() + 1, s.agents.end());
      ctx.receiver_id = 1;
      ctx.gt_region_mass = &mass;
      const auto m = select_reactive(PolicyKind::kOracle, std::vector<float>(kRegionCount * kFeatureDim), ctx);
      if (m.selected != oracle::top_k(brute, regions_allowed(b)))
        return {false, "oracle mask differs on scene " + std::to_string(id)};
    }
  }
  double worst_ap = 0;
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    CounterRng rng(derive_key(Stream::kTest, {seed, 99}));
    std::vector<float> pred(64);
    std::vector<uint8_t> gt(64);
    const double density = rng.uniform();
    for (int i = 0; i < 64; ++i) {
      gt[i] = rng.uniform() < density ? 1 : 0;
      const double u = rng.uniform();
      pred[i] = u < 0.2 ? static_cast<float>(rng.uniform_int(0, 10) / 10.0) : static_cast<float>(rng.uniform());
    }
    worst_ap = std::max(worst_ap, std::abs(average_precision(pred, gt) - oracle::average_precision(pred, gt)));
  }
  if (worst_ap > 1e-9) return {false, "AP differs from the PR enumeration by " + fmt(worst_ap, 3)};
  for (uint64_t id = 0; id < 20; ++id) {
    SceneConfig cfg;
    cfg.occlusion = Occlusion::kHigh;
    const Scene s = generate_scene(cfg, 4343, id);
    for (const auto& a : s.agents) {
      const auto vis = visibility_map(s, a);
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
          if ((vis[static_cast<size_t>(y) * 64 + x] != 0) != oracle::visible(s, a, x, y))
            return {false, "visibility differs on scene " + std::to_string(id)};
    }
  }
  return {true, "oracle masks exact on 100 scenes; AP max diff " + fmt(worst_ap, 3) +
                    " on 1000 heatmaps; visibility exact on 20 scenes"};
}

Verdict parameter_budget() {
  const Model<float> m(42);
  const double n = static_cast<double>(m.params().count("pol.r2t."));
  return {std::abs(n - 0.26e6) <= 0.026e6, "r2t module has " + std::to_string(static_cast<long>(n)) +
                                               " parameters (" + fmt(n / 1e6, 3) + "M, target 0.26M +- 10%)"};
}

Verdict determinism(const Artifacts& art, const SeedRun& run) {
  const uint64_t seed = run.seed;
  const fs::path tmp = fs::temp_directory_path() / "r2t_acceptance_determinism";
  fs::remove_all(tmp);
  std::vector<std::string> failures;

  for (Split split : {Split::kTrain, Split::kVal, Split::kTest}) {
    const int count = split == Split::kTrain ? art.config().train.train_scenes
                      : split == Split::kVal ? art.config().train.val_scenes
                                             : art.config().train.test_scenes;
    const auto fresh = generate_split(art.config().scene, seed, split, count, tmp / "scenes", true);
    if (format_manifest(fresh) != format_manifest(manifest_for(art.scenes(seed), split)))
      failures.push_back(to_string(split) + " manifest");
  }

  auto train = prepare_scenes(load_split(art.scenes(seed) / "train"));
  auto val = prepare_scenes(load_split(art.scenes(seed) / "val"));
  train.resize(std::min<size_t>(train.size(), 16));
  val.resize(std::min<size_t>(val.size(), 4));
  TrainConfig short_cfg = art.config().train;
  short_cfg.epochs = 2;
  short_cfg.warmup_epochs = 1;
  std::string ckpt[2], log_csv[2];
  for (int i = 0; i < 2; ++i) {
    Model<float> model(seed);
    const fs::path out = tmp / ("run" + std::to_string(i) + ".r2tc");
    train_one_seed(model, short_cfg, seed, train, val, {out, {}, out.string() + ".log.csv", {}});
    ckpt[i] = read_file(out);
    log_csv[i] = read_file(out.string() + ".log.csv");
  }
  if (ckpt[0] != ckpt[1]) failures.push_back("checkpoint");
  if (log_csv[0] != log_csv[1]) failures.push_back("training log");

  Model<float> model(seed);
  model.load(art.best_ckpt(seed));
  const auto again = run_sweep(model, load_split(art.scenes(seed) / "test"), SweepAxis::kDrop, seed);
  write_records(tmp / "drop.csv", again);
  if (read_file(tmp / "drop.csv") != read_file(art.results(seed, "drop"))) failures.push_back("results CSV");
  fs::remove_all(tmp);

  if (!failures.empty()) {
    std::string s;
    for (const auto& f : failures) s += (s.empty() ? "" : ", ") + f;
    return {false, "not reproducible: " + s};
  }
  return {true, "seed " + std::to_string(seed) + ": manifests, two short training runs and drop-sweep CSV bit-identical"};
}

void print_tables(const std::vector<SeedRun>& runs) {
  std::vector<EvalRecord> bw, occ, drop;
  for (const auto& r : runs) {
    bw.insert(bw.end(), r.bandwidth.begin(), r.bandwidth.end());
    occ.insert(occ.end(), r.occlusion.begin(), r.occlusion.end());
    drop.insert(drop.end(), r.drop.begin(), r.drop.end());
  }
  std::cerr << format_table(summarize(bw)) << "\n" << format_table(summarize(occ)) << "\n"
            << format_table(summarize(drop)) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Acceptance suite");
  fs::path artifacts = R2T_ACCEPTANCE_DIR;
  fs::path config_path = R2T_DEFAULT_CONFIG;
  std::vector<uint64_t> seeds = {42, 123, 456};
  std::vector<int> only;
  app.add_option("--artifacts", artifacts, "Directory caching scenes, checkpoints and results");
  app.add_option("--config", config_path, "Run config JSON");
  app.add_option("--seeds", seeds, "Training seeds")->delimiter(',');
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

  std::vector<SeedRun> runs;
  std::optional<Artifacts> art;
  std::string setup_error;
  if (wanted(2) || wanted(3) || wanted(4) || wanted(5) || wanted(6) || wanted(10)) {
    try {
      RunConfig cfg = load_run_config(config_path);
      cfg.train.seeds = seeds;
      art.emplace(artifacts, cfg);
      art->ensure();
      for (uint64_t seed : seeds) runs.push_back(evaluate_seed(*art, seed));
      print_tables(runs);
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
  }

  int failed = 0;
  auto record = [&](int id, const std::string& name, bool trained, const std::function<Verdict()>& check) {
    if (!wanted(id)) return;
    Verdict v;
    try {
      v = trained && !setup_error.empty() ? Verdict{false, "pipeline failed: " + setup_error} : check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::printf("%s  %2d  %-25s %s\n", v.pass ? "PASS" : "FAIL", id, name.c_str(), v.detail.c_str());
    std::fflush(stdout);
  };

  record(1, "gradient correctness", false, gradient_correctness);
  record(2, "communication gap", true, [&] { return communication_gap(runs); });
  record(3, "full-budget convergence", true, [&] { return full_budget_convergence(runs); });
  record(4, "selective-policy band", true, [&] { return selective_band(runs); });
  record(5, "packet-drop degradation", true, [&] { return drop_degradation(runs); });
  record(6, "occlusion ordering", true, [&] { return occlusion_ordering(runs); });
  record(7, "budget law", false, budget_law);
  record(8, "oracles", false, oracles);
  record(9, "parameter budget", false, parameter_budget);
  record(10, "determinism", true, [&] { return determinism(*art, runs.front()); });
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
