#include "r2t/optim.hpp"

#include <cmath>
#include <numbers>

namespace r2t {

double LrSchedule::lr_at(long step) const {
  if (step < warmup_steps) return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  const long decay = total_steps - warmup_steps;
  if (decay <= 0) return 0.0;
  const double progress = std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(decay));
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
AdamW<T>::AdamW(std::vector<ag::Parameter<T>*> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  for (auto* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double decay = 1.0 - lr * options_.weight_decay;
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < p.size(); ++j) {
      const double g = p.grad[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      double w = static_cast<double>(p.value[j]) * decay;
      w -= lr * mhat / (std::sqrt(vhat) + options_.eps);
      p.value[j] = static_cast<T>(w);
    }
  }
}

template <typename T>
double global_grad_norm(const std::vector<ag::Parameter<T>*>& params) {
  double sq = 0;
  for (const auto* p : params)
    for (T g : p->grad) sq += static_cast<double>(g) * g;
  return std::sqrt(sq);
}

template <typename T>
double clip_grad_norm(const std::vector<ag::Parameter<T>*>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm <= max_norm || norm == 0.0) return 1.0;
  const double factor = max_norm / norm;
  for (auto* p : params)
    for (auto& g : p->grad) g = static_cast<T>(g * factor);
  return factor;
}

template class AdamW<float>;
template class AdamW<double>;
template double global_grad_norm(const std::vector<ag::Parameter<float>*>&);
template double global_grad_norm(const std::vector<ag::Parameter<double>*>&);
template double clip_grad_norm(const std::vector<ag::Parameter<float>*>&, double);
template double clip_grad_norm(const std::vector<ag::Parameter<double>*>&, double);

}  // namespace r2t
