#include "r2t/pipeline.hpp"

#include <algorithm>

namespace r2t {

using ag::Tape;
using ag::Var;

PreparedScene prepare_scene(Scene scene) {
  PreparedScene ps;
  for (const AgentPose& a : scene.agents) ps.observations.push_back(render_observation(scene, a, scene.seed));
  ps.mass = region_mass(scene.gt_heatmap, scene.grid());
  ps.scene = std::move(scene);
  return ps;
}

std::vector<PreparedScene> prepare_scenes(std::vector<Scene> scenes) {
  std::vector<PreparedScene> out(scenes.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(scenes.size()); ++i) out[i] = prepare_scene(std::move(scenes[i]));
  return out;
}

std::vector<int> sender_lanes(int n_agents, int receiver) {
  std::vector<int> out;
  for (int a = 0; a < n_agents; ++a)
    if (a != receiver) out.push_back(a);
  return out;
}

namespace {

template <typename T>
std::vector<double> to_double(const Var<T>& v) {
  return std::vector<double>(v.value().begin(), v.value().end());
}

template <typename T>
std::vector<double> product(const Var<T>& a, const Var<T>& b) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(a.value()[i]) * static_cast<double>(b.value()[i]);
  return out;
}

}  // namespace

template <typename T>
SceneOutput<T> forward_scene(Tape<T>& tape, const Model<T>& model, const PreparedScene& ps, const ForwardOptions& opt) {
  const Scene& scene = ps.scene;
  const int n = static_cast<int>(scene.agents.size());
  if (scene.grid() != 64) throw ContractError("the perception model expects a 64 x 64 grid");
  if (opt.budget < 0 || opt.budget > 1) throw ContractError("budget must lie in [0,1]");

  std::vector<Var<T>> tokens(n);
  for (int a = 0; a < n; ++a) {
    const auto& ch = ps.observations[a].channels;
    tokens[a] = model.encoder.forward(tape, tape.constant({2, 64, 64}, std::vector<T>(ch.begin(), ch.end())));
  }

  // Receiver-independent learned scores, once per sender.
  std::vector<std::vector<double>> scores(n);
  std::vector<Var<T>> weights(n);
  std::vector<Var<T>> bw_parts;
  const bool learned = is_learned(opt.policy);
  if (learned && opt.policy != PolicyKind::kR2T) {
    for (int s = 0; s < n; ++s) {
      switch (opt.policy) {
        case PolicyKind::kWhere2Comm: {
          const Var<T> sc = model.where2comm.forward(tape, tokens[s]);
          scores[s] = to_double(sc);
          weights[s] = ag::sigmoid(sc);
          break;
        }
        case PolicyKind::kIc3Net: {
          const Var<T> gate = model.ic3net.forward(tape, tokens[s]);
          scores[s] = to_double(gate);
          weights[s] = gate;
          break;
        }
        case PolicyKind::kMask: {
          const Var<T> sc = model.mask.forward(tape, tokens[s]);
          scores[s] = to_double(sc);
          weights[s] = ag::sigmoid(sc);
          bw_parts.push_back(ag::mean(weights[s]));
          break;
        }
        default: break;
      }
    }
  }

  SceneOutput<T> out;
  out.logits.resize(n);
  out.bytes.assign(n, 0);
  out.masks.resize(n);
  out.delivered.assign(n, 0);
  long selected_total = 0;
  int links = 0;
  const DropConfig drop{opt.drop_rate, opt.seed};

  for (int r = 0; r < n; ++r) {
    const std::vector<int> lanes = sender_lanes(n, r);
    std::vector<Var<T>> parts, wparts;
    Received<T> received;
    for (size_t lane = 0; lane < lanes.size(); ++lane) {
      const int s = lanes[lane];
      TransmitMask mask;
      Var<T> w;
      if (opt.policy == PolicyKind::kR2T) {
        std::vector<AgentPose> neighbors;
        for (int a : sender_lanes(n, s)) neighbors.push_back(scene.agents[a]);
        const auto side = r2t_side_features(scene.agents[s], neighbors, r);
        const auto po = model.r2t.forward(tape, tokens[s], side, opt.budget);
        mask = select_from_scores(opt.policy, product(po.p, po.s), opt.budget);
        w = ag::mul(po.p, po.s);
        bw_parts.push_back(ag::mean(po.p));
      } else if (learned) {
        mask = select_from_scores(opt.policy, scores[s], opt.budget);
        w = weights[s];
      } else {
        PolicyContext ctx;
        ctx.budget = opt.budget;
        ctx.sender = scene.agents[s];
        ctx.receiver_id = r;
        ctx.gt_region_mass = opt.policy == PolicyKind::kOracle ? &ps.mass : nullptr;
        ctx.rng_key = random_policy_key(opt.seed, scene.scene_id, s);
        const std::vector<float> regions(tokens[s].value().begin(), tokens[s].value().end());
        mask = select_reactive(opt.policy, regions, ctx);
      }
      out.masks[r].push_back(mask);
      out.bytes[r] += mask.bytes();
      selected_total += mask.k;
      ++links;

      const std::vector<int> idx = deliver(mask, drop, scene.scene_id, s, r);
      if (idx.empty()) continue;
      parts.push_back(ag::gather_rows(tokens[s], idx));
      for (int k : idx) received.slots.push_back(static_cast<int>(lane) * kRegionCount + k);
      if (w.valid()) wparts.push_back(ag::gather_rows(ag::reshape(w, {kRegionCount, 1}), idx));
    }
    out.delivered[r] = static_cast<int>(received.slots.size());
    if (!parts.empty()) {
      received.tokens = parts.size() == 1 ? parts[0] : ag::concat(parts, 0);
      if (!wparts.empty()) {
        const Var<T> wcat = wparts.size() == 1 ? wparts[0] : ag::concat(wparts, 0);
        received.weights = ag::reshape(wcat, {static_cast<int>(received.slots.size())});
      }
    }
    const Var<T> fused = model.fusion.forward(tape, tokens[r], received, opt.surrogate);
    out.logits[r] = model.detector.forward(tape, fused);
  }

  if (!bw_parts.empty()) {
    Var<T> acc = bw_parts[0];
    for (size_t i = 1; i < bw_parts.size(); ++i) acc = ag::add(acc, bw_parts[i]);
    out.bandwidth = ag::scale(acc, T(1) / static_cast<T>(bw_parts.size()));
  } else {
    const double frac = links > 0 ? static_cast<double>(selected_total) / (static_cast<double>(links) * kRegionCount) : 0.0;
    out.bandwidth = tape.constant({1}, {static_cast<T>(frac)});
  }
  return out;
}

template SceneOutput<float> forward_scene(Tape<float>&, const Model<float>&, const PreparedScene&, const ForwardOptions&);
template SceneOutput<double> forward_scene(Tape<double>&, const Model<double>&, const PreparedScene&,
                                           const ForwardOptions&);

}  // namespace r2t
