#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "r2t/policies.hpp"

namespace r2t {

struct LinkBudget {
  double budget = 0;

  int regions() const { return regions_allowed(budget); }
  int bytes() const { return regions() * kRegionBytes; }
  /// Label across three senders (B x 24 KB); never used for enforcement.
  double reported_kb() const { return budget * 24.0; }
};

struct DropConfig {
  double drop_rate = 0;
  uint64_t seed = 0;
};

/// Region indices of one link that survive the channel.
/// Each selected region is dropped independently with probability
/// drop_rate; the draw is a pure function of (seed, scene, sender,
/// receiver, region).
std::vector<int> deliver(const TransmitMask& mask, const DropConfig& drop, uint64_t scene_id, int sender_id,
                         int receiver_id);

/// Total bytes sent to one receiver over all of its incoming links.
long account(std::span<const TransmitMask> masks);

}  // namespace r2t
