#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "r2t/autograd.hpp"
#include "r2t/rng.hpp"

namespace r2t::testing {

inline std::vector<double> random_values(size_t n, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  CounterRng rng(derive_key(Stream::kTest, {seed}));
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

/// Values with magnitude in [0.2, 1] and random sign, away from kinks at 0.
inline std::vector<double> away_from_zero(size_t n, uint64_t seed) {
  CounterRng rng(derive_key(Stream::kTest, {seed, 7}));
  std::vector<double> v(n);
  for (auto& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.2 + 0.8 * rng.uniform());
  return v;
}

inline double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}); }

using OpFn = std::function<ag::Var<double>(ag::Tape<double>&, const std::vector<ag::Var<double>>&)>;

/// Central finite-difference check of d(sum(f(x) * r))/dx for every input
/// element. Returns the largest relative error.
inline double gradcheck(const std::vector<Shape>& shapes, const std::vector<std::vector<double>>& values, const OpFn& f,
                        double h = 1e-4, uint64_t seed = 1) {
  auto loss_of = [&](const std::vector<std::vector<double>>& vals, std::vector<std::vector<double>>* grads) {
    ag::Tape<double> tape;
    std::vector<ag::Var<double>> in;
    for (size_t i = 0; i < shapes.size(); ++i) in.push_back(tape.input(shapes[i], vals[i]));
    const ag::Var<double> out = f(tape, in);
    const auto r = random_values(out.size(), seed + 1000);
    const ag::Var<double> loss = ag::sum(ag::mul(out, tape.constant(out.shape(), r)));
    if (grads) {
      tape.backward(loss);
      grads->clear();
      for (const auto& v : in) grads->push_back(v.grad());
    }
    return loss.item();
  };
  std::vector<std::vector<double>> analytic;
  loss_of(values, &analytic);
  double worst = 0;
  for (size_t i = 0; i < values.size(); ++i)
    for (size_t j = 0; j < values[i].size(); ++j) {
      auto plus = values, minus = values;
      plus[i][j] += h;
      minus[i][j] -= h;
      const double numeric = (loss_of(plus, nullptr) - loss_of(minus, nullptr)) / (2 * h);
      worst = std::max(worst, rel_error(analytic[i][j], numeric));
    }
  return worst;
}

}  // namespace r2t::testing
