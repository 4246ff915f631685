#pragma once

// Perception stack shared by every communication policy, plus the learned
// policy networks. All parameters live in one ParamStore and are serialized
// together under the prefixes enc.*, fuse.*, det.* and pol.<name>.*.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "r2t/autograd.hpp"
#include "r2t/binary_io.hpp"
#include "r2t/scene.hpp"

namespace r2t {

inline constexpr int kRegionGrid = 8;
inline constexpr int kRegionCount = kRegionGrid * kRegionGrid;
inline constexpr int kFeatureDim = 32;
inline constexpr int kRegionBytes = kFeatureDim * 4;
inline constexpr int kSenderLanes = 3;
inline constexpr int kModelVersion = 1;

inline constexpr int kR2TDim = 128;
inline constexpr int kR2THeads = 4;
inline constexpr int kR2TFfn = 256;
inline constexpr int kR2TLayers = 2;
inline constexpr int kR2TTokens = kRegionCount + 3;
inline constexpr int kR2TSideDim = 4 + 12;

template <typename T>
class ParamStore {
 public:
  ag::Parameter<T>& add(std::string name, Shape shape);
  ag::Parameter<T>* find(std::string_view name) const;
  std::vector<ag::Parameter<T>*> all() const;
  std::vector<ag::Parameter<T>*> with_prefix(std::string_view prefix) const;
  /// Number of scalars in parameters whose name starts with `prefix`.
  size_t count(std::string_view prefix = "") const;
  void zero_grad();

  std::vector<NamedArray> export_arrays() const;
  /// Requires exactly the same names and shapes; throws FormatError otherwise.
  void import_arrays(const std::vector<NamedArray>& arrays);

 private:
  std::vector<std::unique_ptr<ag::Parameter<T>>> params_;
};

template <typename T>
struct Linear {
  ag::Parameter<T>* w = nullptr;  // [in, out]
  ag::Parameter<T>* b = nullptr;  // [out]
  ag::Var<T> operator()(ag::Tape<T>& tape, const ag::Var<T>& x) const;
};

template <typename T>
struct LayerNorm {
  ag::Parameter<T>* gamma = nullptr;
  ag::Parameter<T>* beta = nullptr;
  ag::Var<T> operator()(ag::Tape<T>& tape, const ag::Var<T>& x) const;
};

template <typename T>
struct Conv {
  ag::Parameter<T>* w = nullptr;  // [Cout, Cin, 3, 3]
  ag::Parameter<T>* b = nullptr;
  int stride = 1;
  ag::Var<T> operator()(ag::Tape<T>& tape, const ag::Var<T>& x) const;
};

template <typename T>
struct ConvTranspose {
  ag::Parameter<T>* w = nullptr;  // [Cin, Cout, 3, 3]
  ag::Parameter<T>* b = nullptr;
  ag::Var<T> operator()(ag::Tape<T>& tape, const ag::Var<T>& x) const;
};

/// 2 x 64 x 64 observation -> 64 region tokens of width 32. Region k is the
/// feature vector at cell (k / 8, k % 8) of the 8 x 8 map.
template <typename T>
struct Encoder {
  std::array<Conv<T>, 4> layers;
  ag::Var<T> forward(ag::Tape<T>& tape, const ag::Var<T>& obs) const;
};

/// 64 tokens -> 64 x 64 heatmap logits, flattened row-major.
template <typename T>
struct Detector {
  std::array<ConvTranspose<T>, 3> layers;
  ag::Var<T> forward(ag::Tape<T>& tape, const ag::Var<T>& tokens) const;
};

enum class Surrogate { kNone, kStraightThrough, kSoft };

/// Received region tokens with their slot ids (lane * 64 + region index) and
/// optional per-token surrogate weights for training.
template <typename T>
struct Received {
  ag::Var<T> tokens;  // [n, 32]; invalid when n == 0
  std::vector<int> slots;
  ag::Var<T> weights;  // [n] or invalid
  size_t size() const { return slots.size(); }
};

/// Gated cross-attention from local tokens to received tokens.
template <typename T>
struct Fusion {
  LayerNorm<T> recv_norm;
  ag::Parameter<T>* slot_embed = nullptr;  // [64 * lanes, 32]
  ag::Parameter<T>* query_pos = nullptr;   // [64, 32]
  Linear<T> wq, wk, wv;
  ag::Parameter<T>* sink_key = nullptr;    // [1, 32]
  ag::Parameter<T>* sink_value = nullptr;  // [1, 32]
  Linear<T> gate;
  LayerNorm<T> out_norm;
  Linear<T> ffn1, ffn2;

  struct Trace {
    ag::Var<T> attention;  // [64, 1 + n]; column 0 is the sink
    ag::Var<T> gate;       // [64, 32]
  };

  /// Returns `local` itself when nothing was received.
  ag::Var<T> forward(ag::Tape<T>& tape, const ag::Var<T>& local, const Received<T>& received,
                     Surrogate surrogate, Trace* trace = nullptr) const;
};

/// Side information for the R2T policy: agent context (x/64, y/64,
/// heading/pi, id/3) followed by three neighbor entries (x/64, y/64,
/// heading/pi, is_receiver) in ascending id order.
std::array<double, kR2TSideDim> r2t_side_features(const AgentPose& sender, const std::vector<AgentPose>& neighbors,
                                                  int receiver_id);

template <typename T>
struct R2TNet {
  struct Block {
    LayerNorm<T> norm1;
    Linear<T> qkv, proj;
    LayerNorm<T> norm2;
    Linear<T> ffn1, ffn2;
  };

  Linear<T> region_proj, context_proj, neighbor_proj, budget_proj;
  ag::Parameter<T>* pos = nullptr;  // [67, 128]
  std::array<Block, kR2TLayers> blocks;
  LayerNorm<T> final_norm;
  Linear<T> transmit_head, priority_head;

  struct Output {
    ag::Var<T> p;  // [64], transmit probability
    ag::Var<T> s;  // [64], priority score
  };

  Output forward(ag::Tape<T>& tape, const ag::Var<T>& regions, const std::array<double, kR2TSideDim>& side,
                 double budget) const;
};

/// Per-region MLP 32 -> 64 -> 64 -> 1.
template <typename T>
struct Where2CommNet {
  Linear<T> l1, l2, l3;
  ag::Var<T> forward(ag::Tape<T>& tape, const ag::Var<T>& regions) const;  // [64] scores
};

/// Gate sigmoid(MLP([region || mean of regions])), 64 -> 64 -> 1.
template <typename T>
struct Ic3NetNet {
  Linear<T> l1, l2;
  ag::Var<T> forward(ag::Tape<T>& tape, const ag::Var<T>& regions) const;  // [64] gates
};

/// Per-region linear score 32 -> 1.
template <typename T>
struct MaskNet {
  Linear<T> l;
  ag::Var<T> forward(ag::Tape<T>& tape, const ag::Var<T>& regions) const;  // [64] scores
};

template <typename T>
class Model {
 public:
  explicit Model(uint64_t init_seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  std::vector<NamedArray> export_arrays() const;
  void import_arrays(const std::vector<NamedArray>& arrays);
  void save(const std::filesystem::path& path) const;
  /// Throws FormatError on a corrupt file or an architecture mismatch.
  void load(const std::filesystem::path& path);

  Encoder<T> encoder;
  Fusion<T> fusion;
  Detector<T> detector;
  R2TNet<T> r2t;
  Where2CommNet<T> where2comm;
  Ic3NetNet<T> ic3net;
  MaskNet<T> mask;

 private:
  ParamStore<T> params_;
};

/// Copies parameter values between models of different scalar types.
template <typename To, typename From>
void copy_params(const Model<From>& from, Model<To>& to);

}  // namespace r2t
