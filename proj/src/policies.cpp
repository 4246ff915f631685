#include "r2t/policies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "r2t/rng.hpp"

namespace r2t {

std::string to_string(PolicyKind p) {
  switch (p) {
    case PolicyKind::kNoComm: return "nocomm";
    case PolicyKind::kAlways: return "always";
    case PolicyKind::kRandom: return "random";
    case PolicyKind::kConfidence: return "confidence";
    case PolicyKind::kUncertainty: return "uncertainty";
    case PolicyKind::kWhere2Comm: return "where2comm";
    case PolicyKind::kIc3Net: return "ic3net";
    case PolicyKind::kMask: return "mask";
    case PolicyKind::kOracle: return "oracle";
    case PolicyKind::kR2T: return "r2t";
  }
  return "?";
}

std::string policy_names() {
  std::string s;
  for (PolicyKind p : kAllPolicies) {
    if (!s.empty()) s += ", ";
    s += to_string(p);
  }
  return s;
}

PolicyKind parse_policy(std::string_view name) {
  for (PolicyKind p : kAllPolicies)
    if (to_string(p) == name) return p;
  throw std::invalid_argument("unknown policy '" + std::string(name) + "'; valid policies: " + policy_names());
}

bool is_budget_filling(PolicyKind p) { return p != PolicyKind::kNoComm && p != PolicyKind::kAlways; }

bool is_learned(PolicyKind p) {
  return p == PolicyKind::kWhere2Comm || p == PolicyKind::kIc3Net || p == PolicyKind::kMask || p == PolicyKind::kR2T;
}

bool is_receiver_dependent(PolicyKind p) { return p == PolicyKind::kR2T; }

int regions_allowed(double budget) {
  if (!(budget >= 0.0)) return 0;
  return std::min(kRegionCount, static_cast<int>(std::floor(budget * kRegionCount)));
}

std::vector<int> TransmitMask::indices() const {
  std::vector<int> out;
  out.reserve(k);
  for (int i = 0; i < kRegionCount; ++i)
    if (selected[i]) out.push_back(i);
  return out;
}

TransmitMask empty_mask() { return {}; }

TransmitMask full_mask() {
  TransmitMask m;
  m.selected.fill(1);
  m.k = kRegionCount;
  return m;
}

TransmitMask top_k(std::span<const double> scores, int k) {
  if (scores.size() != static_cast<size_t>(kRegionCount))
    throw ContractError("top_k expects 64 scores, got " + std::to_string(scores.size()));
  for (double s : scores)
    if (std::isnan(s)) throw ContractError("top_k: NaN score");
  k = std::clamp(k, 0, kRegionCount);
  std::array<int, kRegionCount> order;
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  TransmitMask m;
  for (int i = 0; i < k; ++i) m.selected[order[i]] = 1;
  m.k = k;
  return m;
}

std::vector<double> region_mass(const std::vector<float>& heatmap, int grid_size) {
  if (grid_size % kRegionGrid != 0) throw ContractError("grid_size must be a multiple of 8");
  const int block = grid_size / kRegionGrid;
  std::vector<double> mass(kRegionCount, 0.0);
  for (int y = 0; y < grid_size; ++y)
    for (int x = 0; x < grid_size; ++x)
      mass[(y / block) * kRegionGrid + x / block] += heatmap[static_cast<size_t>(y) * grid_size + x];
  return mass;
}

std::vector<double> confidence_scores(std::span<const float> regions) {
  std::vector<double> s(kRegionCount);
  for (int k = 0; k < kRegionCount; ++k) {
    double acc = 0;
    for (int c = 0; c < kFeatureDim; ++c) {
      const double v = regions[static_cast<size_t>(k) * kFeatureDim + c];
      acc += v * v;
    }
    s[k] = std::sqrt(acc);
  }
  return s;
}

std::vector<double> uncertainty_scores(std::span<const float> regions) {
  std::vector<double> s(kRegionCount);
  for (int k = 0; k < kRegionCount; ++k) {
    const float* r = regions.data() + static_cast<size_t>(k) * kFeatureDim;
    double mu = 0;
    for (int c = 0; c < kFeatureDim; ++c) mu += r[c];
    mu /= kFeatureDim;
    double var = 0;
    for (int c = 0; c < kFeatureDim; ++c) var += (r[c] - mu) * (r[c] - mu);
    s[k] = var / kFeatureDim;
  }
  return s;
}

std::vector<double> random_scores(uint64_t key) {
  std::vector<double> s(kRegionCount);
  CounterRng rng(key);
  for (auto& v : s) v = rng.uniform();
  return s;
}

uint64_t random_policy_key(uint64_t seed, uint64_t scene_id, int sender_id) {
  return derive_key(Stream::kRandomPolicy, {seed, scene_id, static_cast<uint64_t>(sender_id)});
}

TransmitMask select_reactive(PolicyKind p, std::span<const float> regions, const PolicyContext& ctx) {
  if (regions.size() != static_cast<size_t>(kRegionCount) * kFeatureDim)
    throw ContractError("policy expects [64,32] regions");
  if (ctx.budget < 0 || ctx.budget > 1) throw ContractError("budget must lie in [0,1]");
  const int k = regions_allowed(ctx.budget);
  switch (p) {
    case PolicyKind::kNoComm: return empty_mask();
    case PolicyKind::kAlways: return full_mask();
    case PolicyKind::kRandom: return top_k(random_scores(ctx.rng_key), k);
    case PolicyKind::kConfidence: return top_k(confidence_scores(regions), k);
    case PolicyKind::kUncertainty: return top_k(uncertainty_scores(regions), k);
    case PolicyKind::kOracle:
      if (!ctx.gt_region_mass) throw ContractError("oracle policy requires ground-truth region mass");
      return top_k(*ctx.gt_region_mass, k);
    default: throw ContractError("select_reactive: " + to_string(p) + " is a learned policy");
  }
}

TransmitMask select_from_scores(PolicyKind p, std::span<const double> scores, double budget) {
  if (!is_learned(p)) throw ContractError("select_from_scores: " + to_string(p) + " is not a learned policy");
  if (budget < 0 || budget > 1) throw ContractError("budget must lie in [0,1]");
  return top_k(scores, regions_allowed(budget));
}

}  // namespace r2t
