#include "r2t/channel.hpp"

#include "r2t/rng.hpp"

namespace r2t {

std::vector<int> deliver(const TransmitMask& mask, const DropConfig& drop, uint64_t scene_id, int sender_id,
                         int receiver_id) {
  if (drop.drop_rate < 0 || drop.drop_rate > 1) throw ContractError("drop_rate must lie in [0,1]");
  std::vector<int> out;
  out.reserve(mask.k);
  for (int k = 0; k < kRegionCount; ++k) {
    if (!mask.selected[k]) continue;
    if (drop.drop_rate > 0) {
      const uint64_t key = derive_key(Stream::kPacketDrop, {drop.seed, scene_id, static_cast<uint64_t>(sender_id),
                                                            static_cast<uint64_t>(receiver_id), static_cast<uint64_t>(k)});
      if (uniform_at(key) < drop.drop_rate) continue;
    }
    out.push_back(k);
  }
  return out;
}

long account(std::span<const TransmitMask> masks) {
  long total = 0;
  for (const auto& m : masks) total += m.bytes();
  return total;
}

}  // namespace r2t
