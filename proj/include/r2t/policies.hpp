#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "r2t/model.hpp"
#include "r2t/scene.hpp"

namespace r2t {

enum class PolicyKind {
  kNoComm,
  kAlways,
  kRandom,
  kConfidence,
  kUncertainty,
  kWhere2Comm,
  kIc3Net,
  kMask,
  kOracle,
  kR2T,
};

inline constexpr std::array<PolicyKind, 10> kAllPolicies = {
    PolicyKind::kNoComm,     PolicyKind::kAlways, PolicyKind::kRandom, PolicyKind::kConfidence, PolicyKind::kUncertainty,
    PolicyKind::kWhere2Comm, PolicyKind::kIc3Net, PolicyKind::kMask,   PolicyKind::kOracle,     PolicyKind::kR2T,
};

std::string to_string(PolicyKind p);
/// Throws std::invalid_argument listing the valid names.
PolicyKind parse_policy(std::string_view name);
std::string policy_names();

/// Policies whose selected count is min(floor(B * 64), 64).
bool is_budget_filling(PolicyKind p);
bool is_learned(PolicyKind p);
/// Whether the mask can differ between receivers of the same sender.
bool is_receiver_dependent(PolicyKind p);

/// floor(B * 64), clamped to [0, 64].
int regions_allowed(double budget);

struct TransmitMask {
  std::array<uint8_t, kRegionCount> selected{};
  int k = 0;

  int bytes() const { return k * kRegionBytes; }
  std::vector<int> indices() const;
  bool operator==(const TransmitMask&) const = default;
};

TransmitMask empty_mask();
TransmitMask full_mask();

/// The k highest scores, ordered by (score desc, index asc).
/// Throws ContractError on NaN scores.
TransmitMask top_k(std::span<const double> scores, int k);

struct PolicyContext {
  double budget = 0;
  AgentPose sender;
  std::vector<AgentPose> neighbors;  // every other agent, any order
  int receiver_id = -1;
  const std::vector<double>* gt_region_mass = nullptr;  // oracle only
  uint64_t rng_key = 0;                                 // random policy only
};

/// Sum of the heatmap over the block of cells each region covers.
std::vector<double> region_mass(const std::vector<float>& heatmap, int grid_size);

/// regions: row-major [64, 32].
std::vector<double> confidence_scores(std::span<const float> regions);
std::vector<double> uncertainty_scores(std::span<const float> regions);
std::vector<double> random_scores(uint64_t key);

/// Key for the random policy; independent of the receiver.
uint64_t random_policy_key(uint64_t seed, uint64_t scene_id, int sender_id);

/// Mask for the non-learned policies. Learned policies go through
/// select_from_scores with scores produced by their network.
TransmitMask select_reactive(PolicyKind p, std::span<const float> regions, const PolicyContext& ctx);

TransmitMask select_from_scores(PolicyKind p, std::span<const double> scores, double budget);

}  // namespace r2t
