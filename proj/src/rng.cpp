#include "r2t/rng.hpp"

#include <random>

namespace r2t {

int64_t CounterRng::uniform_int(int64_t lo, int64_t hi) {
  std::uniform_int_distribution<int64_t> dist(lo, hi);
  return dist(*this);
}

double CounterRng::normal() {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(*this);
}

}  // namespace r2t
