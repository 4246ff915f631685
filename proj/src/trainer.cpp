#include "r2t/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "r2t/binary_io.hpp"
#include "r2t/evaluator.hpp"
#include "r2t/optim.hpp"
#include "r2t/rng.hpp"

namespace r2t {

using ag::Tape;
using ag::Var;

template <typename T>
Var<T> objective(const Var<T>& detection, const Var<T>& bandwidth, const Var<T>& sparsity, double lambda_bw,
                 double lambda_l1) {
  Var<T> total = ag::add(detection, ag::scale(bandwidth, static_cast<T>(lambda_bw)));
  if (sparsity.valid()) total = ag::add(total, ag::scale(sparsity, static_cast<T>(lambda_l1)));
  return total;
}

template <typename T>
LossTerms<T> scene_loss(Tape<T>& tape, const Model<T>& model, const PreparedScene& ps, const ForwardOptions& opt,
                        double lambda_bw, double lambda_l1) {
  const auto out = forward_scene(tape, model, ps, opt);
  const auto& hm = ps.scene.gt_heatmap;
  const Var<T> target = tape.constant({static_cast<int>(hm.size())}, std::vector<T>(hm.begin(), hm.end()));
  Var<T> det = ag::bce_with_logits(out.logits[0], target);
  for (size_t r = 1; r < out.logits.size(); ++r) det = ag::add(det, ag::bce_with_logits(out.logits[r], target));
  det = ag::scale(det, T(1) / static_cast<T>(out.logits.size()));
  LossTerms<T> terms;
  terms.detection = det;
  terms.bandwidth = out.bandwidth;
  if (opt.policy == PolicyKind::kMask) terms.sparsity = ag::abs_sum(tape.param(*model.mask.l.w));
  terms.total = objective(det, out.bandwidth, terms.sparsity, lambda_bw, lambda_l1);
  return terms;
}

std::vector<StepPlan> plan_epoch(const TrainConfig& cfg, uint64_t seed, int epoch, size_t n_scenes) {
  std::vector<size_t> order(n_scenes);
  std::iota(order.begin(), order.end(), size_t{0});
  CounterRng shuffle_rng(derive_key(Stream::kShuffle, {seed, static_cast<uint64_t>(epoch)}));
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  std::vector<StepPlan> plan(n_scenes);
  for (size_t i = 0; i < n_scenes; ++i) {
    const uint64_t step = static_cast<uint64_t>(epoch) * n_scenes + i;
    CounterRng rng(derive_key(Stream::kTrainSchedule, {seed, step}));
    plan[i].scene_index = order[i];
    plan[i].policy = parse_policy(cfg.policies[rng.uniform_int(0, static_cast<int64_t>(cfg.policies.size()) - 1)]);
    plan[i].budget = cfg.budgets[rng.uniform_int(0, static_cast<int64_t>(cfg.budgets.size()) - 1)];
  }
  return plan;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

std::filesystem::path dump_path_for(const TrainOutputs& out) {
  std::filesystem::path p = out.final_ckpt;
  p += ".nan_dump.json";
  return p;
}

}  // namespace

TrainResult train_one_seed(Model<float>& model, const TrainConfig& cfg, uint64_t seed,
                           const std::vector<PreparedScene>& train, const std::vector<PreparedScene>& val,
                           const TrainOutputs& outputs, const TrainHooks& hooks) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("no training scenes");
  for (const auto& name : cfg.policies) parse_policy(name);

  const long per_epoch = static_cast<long>(train.size());
  LrSchedule schedule{cfg.lr, cfg.warmup_epochs * per_epoch, cfg.epochs * per_epoch};
  if (schedule.warmup_steps == 0) schedule.warmup_steps = 1;
  auto params = model.params().all();
  AdamW<float> opt(params, {cfg.lr, cfg.weight_decay, 0.9, 0.999, 1e-8});
  const Surrogate surrogate = cfg.surrogate == "soft" ? Surrogate::kSoft : Surrogate::kStraightThrough;

  ForwardOptions val_opt;
  val_opt.policy = parse_policy(cfg.val_policy);
  val_opt.budget = cfg.val_budget;
  val_opt.seed = seed;

  TrainResult result;
  std::string log = "step,lr,loss,l_det,l_bw,grad_norm,epoch,policy,budget,scene_id\n";
  std::string val_log = "epoch,val_ap\n";
  Tape<float> tape;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const StepPlan& p : plan_epoch(cfg, seed, epoch, train.size())) {
      if (hooks.max_steps > 0 && step >= hooks.max_steps) break;
      const PreparedScene& ps = train[p.scene_index];
      ForwardOptions fo;
      fo.policy = p.policy;
      fo.budget = p.budget;
      fo.seed = seed;
      fo.surrogate = surrogate;

      tape.clear();
      model.params().zero_grad();
      LossTerms<float> terms;
      bool forward_ok = true;
      try {
        terms = scene_loss(tape, model, ps, fo, cfg.lambda_bw, cfg.lambda_l1);
      } catch (const NonFiniteError&) {
        forward_ok = false;
      }
      const double nan = std::numeric_limits<double>::quiet_NaN();
      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.lr = schedule.lr_at(step);
      rec.loss = forward_ok ? terms.total.item() : nan;
      rec.l_det = forward_ok ? terms.detection.item() : nan;
      rec.l_bw = forward_ok ? terms.bandwidth.item() : nan;
      rec.policy = to_string(p.policy);
      rec.budget = p.budget;
      rec.scene_id = ps.scene.scene_id;
      if (!std::isfinite(rec.loss)) {
        const nlohmann::json dump = {{"step", step},          {"epoch", epoch},       {"seed", seed},
                                     {"scene_id", rec.scene_id}, {"policy", rec.policy}, {"budget", rec.budget},
                                     {"lr", rec.lr},          {"loss", fmt(rec.loss)}, {"l_det", fmt(rec.l_det)},
                                     {"l_bw", fmt(rec.l_bw)}};
        const auto path = dump_path_for(outputs);
        atomic_write(path, dump.dump(2) + "\n");
        if (!outputs.log_csv.empty()) atomic_write(outputs.log_csv, log);
        throw NumericalError("non-finite loss at step " + std::to_string(step), path);
      }
      tape.backward(terms.total);
      rec.grad_norm = global_grad_norm(params);
      if (!std::isfinite(rec.grad_norm)) {
        const auto path = dump_path_for(outputs);
        atomic_write(path, nlohmann::json{{"step", step}, {"scene_id", rec.scene_id}, {"policy", rec.policy},
                                          {"budget", rec.budget}, {"grad_norm", fmt(rec.grad_norm)}}
                                   .dump(2) +
                               "\n");
        throw NumericalError("non-finite gradient at step " + std::to_string(step), path);
      }
      clip_grad_norm(params, cfg.grad_clip);
      opt.step(rec.lr);

      log += std::to_string(step) + "," + fmt(rec.lr) + "," + fmt(rec.loss) + "," + fmt(rec.l_det) + "," +
             fmt(rec.l_bw) + "," + fmt(rec.grad_norm) + "," + std::to_string(epoch) + "," + rec.policy + "," +
             fmt(rec.budget) + "," + std::to_string(rec.scene_id) + "\n";
      if (hooks.on_step) hooks.on_step(rec);
      ++step;
    }
    const bool stopped = hooks.max_steps > 0 && step >= hooks.max_steps;

    double val_ap = 0;
    if (!val.empty()) {
      const auto scores = score_scenes(model, val, val_opt);
      for (const auto& s : scores) val_ap += s.ap;
      val_ap /= static_cast<double>(scores.size());
    }
    result.val_ap.push_back(val_ap);
    val_log += std::to_string(epoch) + "," + fmt(val_ap) + "\n";
    if (val_ap > result.best_val_ap) {
      result.best_val_ap = val_ap;
      result.best_epoch = epoch;
      if (!outputs.best_ckpt.empty()) model.save(outputs.best_ckpt);
    }
    if (!outputs.log_csv.empty()) atomic_write(outputs.log_csv, log);
    if (!outputs.val_csv.empty()) atomic_write(outputs.val_csv, val_log);
    if (hooks.on_epoch) hooks.on_epoch(epoch, val_ap);
    if (stopped) break;
  }
  result.steps = step;
  if (!outputs.final_ckpt.empty()) model.save(outputs.final_ckpt);
  return result;
}

template Var<float> objective(const Var<float>&, const Var<float>&, const Var<float>&, double, double);
template Var<double> objective(const Var<double>&, const Var<double>&, const Var<double>&, double, double);
template LossTerms<float> scene_loss(Tape<float>&, const Model<float>&, const PreparedScene&, const ForwardOptions&,
                                     double, double);
template LossTerms<double> scene_loss(Tape<double>&, const Model<double>&, const PreparedScene&,
                                      const ForwardOptions&, double, double);

}  // namespace r2t
