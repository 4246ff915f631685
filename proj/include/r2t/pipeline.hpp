#pragma once

// One cooperative-perception pass over a scene: every agent encodes its
// observation, every (sender, receiver) link selects regions under the
// policy, the channel drops some of them, and each receiver fuses what
// arrived and predicts a heatmap.

#include <cstdint>
#include <vector>

#include "r2t/autograd.hpp"
#include "r2t/channel.hpp"
#include "r2t/model.hpp"
#include "r2t/policies.hpp"
#include "r2t/scene.hpp"

namespace r2t {

/// Scene plus everything derived from it that does not depend on the model.
struct PreparedScene {
  Scene scene;
  std::vector<Observation> observations;  // per agent
  std::vector<double> mass;               // per region, for the oracle
};

PreparedScene prepare_scene(Scene scene);
std::vector<PreparedScene> prepare_scenes(std::vector<Scene> scenes);

struct ForwardOptions {
  PolicyKind policy = PolicyKind::kR2T;
  double budget = 1.0;
  double drop_rate = 0.0;
  uint64_t seed = 0;  // keys the random policy and packet drops
  Surrogate surrogate = Surrogate::kNone;
};

template <typename T>
struct SceneOutput {
  std::vector<ag::Var<T>> logits;              // per receiver, [4096]
  std::vector<long> bytes;                     // per receiver, before drops
  std::vector<std::vector<TransmitMask>> masks;  // [receiver][sender lane]
  std::vector<int> delivered;                  // per receiver, regions that arrived
  ag::Var<T> bandwidth;                        // scalar bandwidth term
};

/// Agents other than `receiver`, in ascending id order (the sender lanes).
std::vector<int> sender_lanes(int n_agents, int receiver);

template <typename T>
SceneOutput<T> forward_scene(ag::Tape<T>& tape, const Model<T>& model, const PreparedScene& ps,
                             const ForwardOptions& opt);

}  // namespace r2t
