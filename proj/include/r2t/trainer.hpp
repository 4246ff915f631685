#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "r2t/config.hpp"
#include "r2t/model.hpp"
#include "r2t/pipeline.hpp"

namespace r2t {

/// Non-finite loss during training. `dump_path` names the diagnostic file.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::filesystem::path dump)
      : std::runtime_error(what), dump_path(std::move(dump)) {}
  std::filesystem::path dump_path;
};

template <typename T>
struct LossTerms {
  ag::Var<T> total;
  ag::Var<T> detection;  // mean over receivers of mean BCE
  ag::Var<T> bandwidth;
  ag::Var<T> sparsity;   // sum |w| of the mask network, or invalid
};

/// L = L_det + lambda_bw * L_bw (+ lambda_l1 * sum|w_mask|).
template <typename T>
ag::Var<T> objective(const ag::Var<T>& detection, const ag::Var<T>& bandwidth, const ag::Var<T>& sparsity,
                     double lambda_bw, double lambda_l1);

/// Forward one scene in training mode and build the loss.
template <typename T>
LossTerms<T> scene_loss(ag::Tape<T>& tape, const Model<T>& model, const PreparedScene& ps, const ForwardOptions& opt,
                        double lambda_bw, double lambda_l1);

struct StepRecord {
  long step = 0;
  int epoch = 0;
  double lr = 0;
  double loss = 0;
  double l_det = 0;
  double l_bw = 0;
  double grad_norm = 0;  // before clipping
  std::string policy;
  double budget = 0;
  uint64_t scene_id = 0;
};

struct TrainOutputs {
  std::filesystem::path final_ckpt;
  std::filesystem::path best_ckpt;   // empty: skip
  std::filesystem::path log_csv;     // empty: skip
  std::filesystem::path val_csv;     // empty: skip
};

struct TrainResult {
  std::vector<double> val_ap;  // per epoch
  double best_val_ap = -1;
  int best_epoch = -1;
  long steps = 0;
};

struct TrainHooks {
  /// Called after every optimizer step.
  std::function<void(const StepRecord&)> on_step;
  /// Called after every epoch with the validation AP.
  std::function<void(int epoch, double val_ap)> on_epoch;
  /// Stop after this many steps (0 = full schedule); the lr schedule is
  /// still computed for the full run.
  long max_steps = 0;
};

/// Deterministic per-step draw of (scene order, policy, budget).
struct StepPlan {
  size_t scene_index = 0;
  PolicyKind policy = PolicyKind::kR2T;
  double budget = 1.0;
};
std::vector<StepPlan> plan_epoch(const TrainConfig& cfg, uint64_t seed, int epoch, size_t n_scenes);

/// Trains `model` in place. Throws NumericalError on a non-finite loss.
TrainResult train_one_seed(Model<float>& model, const TrainConfig& cfg, uint64_t seed,
                           const std::vector<PreparedScene>& train, const std::vector<PreparedScene>& val,
                           const TrainOutputs& outputs, const TrainHooks& hooks = {});

}  // namespace r2t
