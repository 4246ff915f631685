#include <algorithm>

#include "doctest.h"
#include "r2t/pipeline.hpp"
#include "r2t/trainer.hpp"
#include "loss_check.hpp"
#include "testing.hpp"

using namespace r2t;
using r2t::testing::directional_error;
using r2t::testing::random_values;
using r2t::testing::rel_error;

namespace {

const PreparedScene& scene_fixture() {
  static const PreparedScene ps = prepare_scene(generate_scene(SceneConfig{}, 42, 0));
  return ps;
}

std::vector<float> logits_of(const Model<float>& m, const PreparedScene& ps, ForwardOptions opt) {
  ag::Tape<float> tape;
  tape.set_grad_enabled(false);
  const auto out = forward_scene(tape, m, ps, opt);
  std::vector<float> all;
  for (const auto& l : out.logits) all.insert(all.end(), l.value().begin(), l.value().end());
  return all;
}

}  // namespace

TEST_CASE("sender lanes") {
  CHECK(sender_lanes(4, 0) == std::vector<int>{1, 2, 3});
  CHECK(sender_lanes(4, 2) == std::vector<int>{0, 1, 3});
}

TEST_CASE("full r2t loss matches finite differences along a random direction") {
  CHECK(directional_error(scene_fixture(), PolicyKind::kR2T, 0.5, 11) < 1e-3);
}

TEST_CASE("pipeline through the detector matches finite differences for other learned policies") {
  CHECK(directional_error(scene_fixture(), PolicyKind::kWhere2Comm, 0.5, 12) < 1e-3);
  CHECK(directional_error(scene_fixture(), PolicyKind::kMask, 0.1, 13) < 1e-3);
  CHECK(directional_error(scene_fixture(), PolicyKind::kIc3Net, 1.0, 14) < 1e-3);
}

TEST_CASE("straight-through training reaches the transmit head") {
  Model<float> m(15);
  ForwardOptions opt;
  opt.policy = PolicyKind::kR2T;
  opt.budget = 0.5;
  opt.surrogate = Surrogate::kStraightThrough;
  ag::Tape<float> tape;
  const auto terms = scene_loss(tape, m, scene_fixture(), opt, 0.01, 1e-4);
  tape.backward(terms.total);
  for (const char* name : {"pol.r2t.transmit_head.w", "pol.r2t.priority_head.w", "fuse.slot_embed", "enc.conv1.w"}) {
    const auto& g = m.params().find(name)->grad;
    CAPTURE(name);
    CHECK(std::any_of(g.begin(), g.end(), [](float v) { return v != 0.0f; }));
  }
}

TEST_CASE("byte accounting and budget law per link") {
  const Model<float> m(16);
  const PreparedScene& ps = scene_fixture();
  for (PolicyKind p : kAllPolicies)
    for (double b : {0.0, 1.0 / 64, 0.1, 0.5, 0.99, 1.0}) {
      ag::Tape<float> tape;
      tape.set_grad_enabled(false);
      const auto out = forward_scene(tape, m, ps, {p, b, 0.0, 3, Surrogate::kNone});
      CAPTURE(to_string(p));
      CAPTURE(b);
      for (int r = 0; r < 4; ++r) {
        long bytes = 0;
        REQUIRE(out.masks[r].size() == 3);
        for (const auto& mask : out.masks[r]) {
          bytes += 128L * mask.k;
          if (is_budget_filling(p)) CHECK(mask.k == regions_allowed(b));
          if (p == PolicyKind::kAlways) CHECK(mask.k == 64);
          if (p == PolicyKind::kNoComm) CHECK(mask.k == 0);
        }
        CHECK(out.bytes[r] == bytes);
        CHECK(out.delivered[r] == bytes / 128);
      }
      if (p == PolicyKind::kAlways || (is_budget_filling(p) && b == 1.0)) {
        CHECK(out.bytes[0] == 24576);
      }
    }
}

TEST_CASE("identical masks give identical outputs at full budget") {
  const Model<float> m(17);
  const PreparedScene& ps = scene_fixture();
  const auto ref = logits_of(m, ps, {PolicyKind::kAlways, 1.0, 0.0, 5, Surrogate::kNone});
  for (PolicyKind p : kAllPolicies) {
    if (p == PolicyKind::kNoComm) continue;
    CAPTURE(to_string(p));
    CHECK(logits_of(m, ps, {p, 1.0, 0.0, 5, Surrogate::kNone}) == ref);
  }
}

TEST_CASE("nocomm and total drop reduce to local perception") {
  const Model<float> m(18);
  const PreparedScene& ps = scene_fixture();
  const auto nocomm = logits_of(m, ps, {PolicyKind::kNoComm, 0.5, 0.0, 5, Surrogate::kNone});
  CHECK(logits_of(m, ps, {PolicyKind::kNoComm, 0.1, 0.3, 5, Surrogate::kNone}) == nocomm);
  CHECK(logits_of(m, ps, {PolicyKind::kAlways, 1.0, 1.0, 5, Surrogate::kNone}) == nocomm);
  CHECK(logits_of(m, ps, {PolicyKind::kR2T, 0.5, 1.0, 5, Surrogate::kNone}) == nocomm);
  CHECK(logits_of(m, ps, {PolicyKind::kAlways, 1.0, 0.0, 5, Surrogate::kNone}) != nocomm);

  ag::Tape<float> tape;
  const auto obs = tape.constant({2, 64, 64}, ps.observations[2].channels);
  const auto local = m.detector.forward(tape, m.encoder.forward(tape, obs));
  const auto all = logits_of(m, ps, {PolicyKind::kNoComm, 0.5, 0.0, 5, Surrogate::kNone});
  CHECK(std::equal(local.value().begin(), local.value().end(), all.begin() + 2 * 4096));
}

TEST_CASE("reactive masks ignore the receiver; r2t masks are per link") {
  const Model<float> m(19);
  const PreparedScene& ps = scene_fixture();
  for (PolicyKind p : {PolicyKind::kRandom, PolicyKind::kConfidence, PolicyKind::kWhere2Comm, PolicyKind::kOracle}) {
    ag::Tape<float> tape;
    tape.set_grad_enabled(false);
    const auto out = forward_scene(tape, m, ps, {p, 0.5, 0.0, 5, Surrogate::kNone});
    // Sender 3 is lane 2 for receivers 0, 1 and 2.
    CHECK(out.masks[0][2] == out.masks[1][2]);
    CHECK(out.masks[1][2] == out.masks[2][2]);
  }
}

TEST_CASE("drops thin the delivered set deterministically") {
  const Model<float> m(20);
  const PreparedScene& ps = scene_fixture();
  ag::Tape<float> tape;
  tape.set_grad_enabled(false);
  const auto a = forward_scene(tape, m, ps, {PolicyKind::kAlways, 1.0, 0.5, 9, Surrogate::kNone});
  const auto b = forward_scene(tape, m, ps, {PolicyKind::kAlways, 1.0, 0.5, 9, Surrogate::kNone});
  for (int r = 0; r < 4; ++r) {
    CHECK(a.delivered[r] == b.delivered[r]);
    CHECK(a.delivered[r] < 192);
    CHECK(a.bytes[r] == 24576);
  }
}

TEST_CASE("bandwidth term") {
  const Model<float> m(21);
  const PreparedScene& ps = scene_fixture();
  ag::Tape<float> tape;
  const auto fixed = forward_scene(tape, m, ps, {PolicyKind::kConfidence, 0.5, 0.0, 5, Surrogate::kNone});
  CHECK(fixed.bandwidth.item() == doctest::Approx(0.5));
  const auto always = forward_scene(tape, m, ps, {PolicyKind::kAlways, 0.1, 0.0, 5, Surrogate::kNone});
  CHECK(always.bandwidth.item() == doctest::Approx(1.0));
  const auto r2t = forward_scene(tape, m, ps, {PolicyKind::kR2T, 0.5, 0.0, 5, Surrogate::kStraightThrough});
  CHECK(r2t.bandwidth.item() > 0.0f);
  CHECK(r2t.bandwidth.item() < 1.0f);
}
