#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "r2t/binary_io.hpp"
#include "r2t/trainer.hpp"

using namespace r2t;
namespace fs = std::filesystem;
using V = ag::Var<double>;

namespace {

std::vector<PreparedScene> scenes(uint64_t first, int n) {
  std::vector<Scene> out;
  for (int i = 0; i < n; ++i) out.push_back(generate_scene(SceneConfig{}, 42, first + i));
  return prepare_scenes(std::move(out));
}

TrainConfig small_config(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.warmup_epochs = 1;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("loss examples") {
  ag::Tape<double> tape;
  std::vector<double> target(64, 0.0), logits(64, -20.0);
  for (int i = 0; i < 64; i += 7) {
    target[i] = 1.0;
    logits[i] = 20.0;
  }
  const V det = ag::bce_with_logits(tape.constant({64}, logits), tape.constant({64}, target));
  CHECK(det.item() < 1e-3);

  const V zero_bw = tape.constant({1}, {0.0});
  CHECK(objective(det, zero_bw, V{}, 0.01, 1e-4).item() == det.item());

  const V bw = tape.constant({1}, {0.25});
  double prev = -1;
  for (double lambda : {0.01, 0.1, 0.5, 1.0}) {
    const double l = objective(det, bw, V{}, lambda, 1e-4).item();
    CHECK(l > prev);
    prev = l;
  }
  const V l1 = tape.constant({1}, {3.0});
  CHECK(objective(det, bw, l1, 0.01, 1e-4).item() == doctest::Approx(det.item() + 0.0025 + 3e-4));
}

TEST_CASE("scene loss terms") {
  Model<double> m(1);
  const auto ps = scenes(0, 1);
  ag::Tape<double> tape;
  const auto always = scene_loss(tape, m, ps[0], {PolicyKind::kAlways, 1.0, 0.0, 1, Surrogate::kNone}, 0.01, 1e-4);
  CHECK(always.bandwidth.item() == 1.0);
  CHECK_FALSE(always.sparsity.valid());
  CHECK(always.total.item() == doctest::Approx(always.detection.item() + 0.01));
  const auto mask = scene_loss(tape, m, ps[0], {PolicyKind::kMask, 0.5, 0.0, 1, Surrogate::kStraightThrough}, 0.01, 1e-4);
  REQUIRE(mask.sparsity.valid());
  double l1 = 0;
  for (double w : m.params().find("pol.mask.l.w")->value) l1 += std::abs(w);
  CHECK(mask.sparsity.item() == doctest::Approx(l1));

  // Detection term is the mean over receivers of the per-receiver BCE.
  ag::Tape<double> t2;
  const auto out = forward_scene(t2, m, ps[0], {PolicyKind::kAlways, 1.0, 0.0, 1, Surrogate::kNone});
  std::vector<double> target(ps[0].scene.gt_heatmap.begin(), ps[0].scene.gt_heatmap.end());
  double det = 0;
  for (const auto& l : out.logits) det += ag::bce_with_logits(l, t2.constant({4096}, target)).item();
  CHECK(always.detection.item() == doctest::Approx(det / 4).epsilon(1e-12));
}

TEST_CASE("epoch plans are deterministic permutations over the configured sets") {
  const TrainConfig cfg = small_config(3);
  const auto a = plan_epoch(cfg, 42, 0, 50), b = plan_epoch(cfg, 42, 0, 50), c = plan_epoch(cfg, 42, 1, 50);
  std::set<size_t> seen;
  std::map<std::string, int> policies;
  std::set<double> budgets;
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].scene_index == b[i].scene_index);
    CHECK(a[i].policy == b[i].policy);
    CHECK(a[i].budget == b[i].budget);
    seen.insert(a[i].scene_index);
  }
  CHECK(seen.size() == 50);
  bool order_differs = false;
  for (size_t i = 0; i < a.size(); ++i) order_differs = order_differs || a[i].scene_index != c[i].scene_index;
  CHECK(order_differs);
  for (int e = 0; e < 40; ++e)
    for (const auto& p : plan_epoch(cfg, 7, e, 50)) {
      policies[to_string(p.policy)]++;
      budgets.insert(p.budget);
    }
  CHECK(policies.size() == 5);
  for (const auto& name : cfg.policies) CHECK(std::abs(policies[name] - 400) < 80);
  CHECK(budgets == std::set<double>{0.1, 0.5, 1.0});
}

TEST_CASE("every parameter receives gradient from some training policy") {
  Model<float> m(2);
  const auto ps = scenes(0, 1);
  std::map<std::string, bool> touched;
  for (const auto& name : TrainConfig{}.policies) {
    m.params().zero_grad();
    ag::Tape<float> tape;
    const auto terms = scene_loss(tape, m, ps[0], {parse_policy(name), 0.5, 0.0, 1, Surrogate::kStraightThrough}, 0.01, 1e-4);
    tape.backward(terms.total);
    for (auto* p : m.params().all())
      touched[p->name] = touched[p->name] || std::any_of(p->grad.begin(), p->grad.end(), [](float g) { return g != 0; });
  }
  for (const auto& [name, hit] : touched) {
    CAPTURE(name);
    CHECK(hit);
  }
}

TEST_CASE("overfit smoke test: detection loss halves within 200 steps") {
  Model<float> m(3);
  const auto train = scenes(0, 10);
  const auto val = scenes(100000, 2);
  std::vector<double> l_det;
  std::vector<double> norms;
  TrainHooks hooks;
  hooks.on_step = [&](const StepRecord& r) {
    l_det.push_back(r.l_det);
    norms.push_back(r.grad_norm);
  };
  const auto res = train_one_seed(m, small_config(20), 42, train, val, {}, hooks);
  REQUIRE(res.steps == 200);
  REQUIRE(l_det.size() == 200);
  auto window = [&](size_t lo, size_t hi) {
    double s = 0;
    for (size_t i = lo; i < hi; ++i) s += l_det[i];
    return s / static_cast<double>(hi - lo);
  };
  const double early = window(5, 15), late = window(190, 200);
  CAPTURE(early);
  CAPTURE(late);
  CHECK(late <= 0.5 * early);
  for (double v : l_det) CHECK(std::isfinite(v));
  CHECK(res.val_ap.size() == 20);
}

TEST_CASE("training is deterministic and writes its artifacts") {
  const auto dir = fresh_dir("r2t_test_trainer");
  const auto train = scenes(0, 4);
  const auto val = scenes(100000, 1);
  TrainHooks hooks;
  hooks.max_steps = 10;
  Model<float> a(4), b(4);
  TrainOutputs out{dir / "a.r2tc", dir / "a.best.r2tc", dir / "a.log.csv", dir / "a.val.csv"};
  train_one_seed(a, small_config(3), 42, train, val, out, hooks);
  train_one_seed(b, small_config(3), 42, train, val, {dir / "b.r2tc", {}, {}, {}}, hooks);
  CHECK(read_file(dir / "a.r2tc") == read_file(dir / "b.r2tc"));
  CHECK(fs::exists(dir / "a.best.r2tc"));
  const std::string log = read_file(dir / "a.log.csv");
  CHECK(log.rfind("step,lr,loss,l_det,l_bw,grad_norm,epoch,policy,budget,scene_id\n", 0) == 0);
  CHECK(std::count(log.begin(), log.end(), '\n') == 11);
  const std::string val_log = read_file(dir / "a.val.csv");
  CHECK(val_log.rfind("epoch,val_ap\n", 0) == 0);
  CHECK(std::count(val_log.begin(), val_log.end(), '\n') == 4);
  fs::remove_all(dir);
}

TEST_CASE("non-finite loss aborts with a dump") {
  const auto dir = fresh_dir("r2t_test_trainer_nan");
  Model<float> m(5);
  auto* b = m.params().find("det.deconv3.b");
  b->value[0] = std::nanf("");
  const auto train = scenes(0, 2);
  try {
    train_one_seed(m, small_config(2), 42, train, {}, {dir / "x.r2tc", {}, {}, {}});
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.dump_path == dir / "x.r2tc.nan_dump.json");
    CHECK(fs::exists(e.dump_path));
    CHECK(read_file(e.dump_path).find("\"step\": 0") != std::string::npos);
  }
  fs::remove_all(dir);
}
