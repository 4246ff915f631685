#pragma once

#include <vector>

#include "r2t/autograd.hpp"

namespace r2t {

/// Linear warmup followed by cosine decay to zero.
struct LrSchedule {
  double base_lr = 1e-3;
  long warmup_steps = 1;
  long total_steps = 1;

  double lr_at(long step) const;
};

struct AdamWOptions {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// AdamW with decoupled weight decay and bias-corrected moments.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<ag::Parameter<T>*> params, AdamWOptions options);

  /// Applies one update with learning rate `lr` using the gradients currently
  /// stored in the parameters.
  void step(double lr);

  long steps_taken() const { return step_; }
  const AdamWOptions& options() const { return options_; }

 private:
  std::vector<ag::Parameter<T>*> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamWOptions options_;
  long step_ = 0;
};

/// L2 norm of all gradients taken together.
template <typename T>
double global_grad_norm(const std::vector<ag::Parameter<T>*>& params);

/// Rescales gradients so their global norm is at most max_norm.
/// Returns the factor applied (1 when no clipping happened).
template <typename T>
double clip_grad_norm(const std::vector<ag::Parameter<T>*>& params, double max_norm);

}  // namespace r2t
