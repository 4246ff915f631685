#include "r2t/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "r2t/rng.hpp"

namespace r2t {

using ag::Parameter;
using ag::Tape;
using ag::Var;

// ---------------------------------------------------------------- ParamStore

template <typename T>
Parameter<T>& ParamStore<T>::add(std::string name, Shape shape) {
  if (find(name)) throw ContractError("duplicate parameter name " + name);
  params_.push_back(std::make_unique<Parameter<T>>(std::move(name), std::move(shape)));
  return *params_.back();
}

template <typename T>
Parameter<T>* ParamStore<T>::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

template <typename T>
std::vector<Parameter<T>*> ParamStore<T>::all() const {
  return with_prefix("");
}

template <typename T>
std::vector<Parameter<T>*> ParamStore<T>::with_prefix(std::string_view prefix) const {
  std::vector<Parameter<T>*> out;
  for (const auto& p : params_)
    if (std::string_view(p->name).starts_with(prefix)) out.push_back(p.get());
  return out;
}

template <typename T>
size_t ParamStore<T>::count(std::string_view prefix) const {
  size_t n = 0;
  for (const auto* p : with_prefix(prefix)) n += p->size();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

template <typename T>
std::vector<NamedArray> ParamStore<T>::export_arrays() const {
  std::vector<NamedArray> out;
  out.reserve(params_.size());
  for (const auto& p : params_) {
    NamedArray a{p->name, p->shape, std::vector<float>(p->value.begin(), p->value.end())};
    out.push_back(std::move(a));
  }
  return out;
}

template <typename T>
void ParamStore<T>::import_arrays(const std::vector<NamedArray>& arrays) {
  if (arrays.size() != params_.size())
    throw FormatError("checkpoint holds " + std::to_string(arrays.size()) + " parameters, model expects " +
                      std::to_string(params_.size()));
  for (const auto& a : arrays) {
    Parameter<T>* p = find(a.name);
    if (!p) throw FormatError("checkpoint parameter '" + a.name + "' is not part of this model");
    if (p->shape != a.shape)
      throw FormatError("parameter '" + a.name + "' has shape " + to_string(a.shape) + ", model expects " +
                        to_string(p->shape));
  }
  for (const auto& a : arrays) {
    Parameter<T>* p = find(a.name);
    std::transform(a.data.begin(), a.data.end(), p->value.begin(), [](float f) { return static_cast<T>(f); });
  }
}

// ---------------------------------------------------------------- layers

template <typename T>
Var<T> Linear<T>::operator()(Tape<T>& tape, const Var<T>& x) const {
  return ag::linear(x, tape.param(*w), tape.param(*b));
}

template <typename T>
Var<T> LayerNorm<T>::operator()(Tape<T>& tape, const Var<T>& x) const {
  return ag::layernorm(x, tape.param(*gamma), tape.param(*beta), -1);
}

template <typename T>
Var<T> Conv<T>::operator()(Tape<T>& tape, const Var<T>& x) const {
  return ag::conv2d(x, tape.param(*w), tape.param(*b), stride, 1);
}

template <typename T>
Var<T> ConvTranspose<T>::operator()(Tape<T>& tape, const Var<T>& x) const {
  return ag::conv_transpose2d(x, tape.param(*w), tape.param(*b), 2, 1, 1);
}

template <typename T>
Var<T> Encoder<T>::forward(Tape<T>& tape, const Var<T>& obs) const {
  if (obs.shape() != Shape{2, 64, 64})
    throw ContractError("encoder expects observation shape [2,64,64], got " + to_string(obs.shape()));
  Var<T> h = obs;
  for (const auto& layer : layers) h = ag::relu(layer(tape, h));
  return ag::transpose(ag::reshape(h, {kFeatureDim, kRegionCount}));
}

template <typename T>
Var<T> Detector<T>::forward(Tape<T>& tape, const Var<T>& tokens) const {
  if (tokens.shape() != Shape{kRegionCount, kFeatureDim})
    throw ContractError("detector expects tokens [64,32], got " + to_string(tokens.shape()));
  Var<T> h = ag::reshape(ag::transpose(tokens), {kFeatureDim, kRegionGrid, kRegionGrid});
  for (size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](tape, h);
    if (i + 1 < layers.size()) h = ag::relu(h);
  }
  return ag::reshape(h, {64 * 64});
}

template <typename T>
Var<T> Fusion<T>::forward(Tape<T>& tape, const Var<T>& local, const Received<T>& received, Surrogate surrogate,
                          Trace* trace) const {
  if (received.size() == 0) return local;
  const int n = static_cast<int>(received.size());
  if (received.tokens.shape() != Shape{n, kFeatureDim})
    throw ContractError("fusion: received tokens must be [" + std::to_string(n) + ",32], got " +
                        to_string(received.tokens.shape()));
  Var<T> r = recv_norm(tape, received.tokens);
  if (surrogate != Surrogate::kNone && received.weights.valid()) {
    r = surrogate == Surrogate::kSoft ? ag::scale_rows(r, received.weights) : ag::straight_through(r, received.weights);
  }
  r = ag::add(r, ag::gather_rows(tape.param(*slot_embed), received.slots));

  const Var<T> q = wq(tape, ag::add(local, tape.param(*query_pos)));
  const Var<T> k = ag::concat<T>({tape.param(*sink_key), wk(tape, r)}, 0);
  const Var<T> v = ag::concat<T>({tape.param(*sink_value), wv(tape, r)}, 0);
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(kFeatureDim));
  const Var<T> att = ag::softmax(ag::scale(ag::matmul(q, k, false, true), inv_sqrt_d), -1);
  const Var<T> a = ag::matmul(att, v);
  const Var<T> g = ag::sigmoid(gate(tape, ag::concat<T>({local, a}, 1)));
  const Var<T> z = out_norm(tape, ag::add(local, ag::mul(g, a)));
  if (trace) {
    trace->attention = att;
    trace->gate = g;
  }
  return ag::add(z, ffn2(tape, ag::relu(ffn1(tape, z))));
}

std::array<double, kR2TSideDim> r2t_side_features(const AgentPose& sender, const std::vector<AgentPose>& neighbors,
                                                  int receiver_id) {
  const double pi = std::numbers::pi;
  std::array<double, kR2TSideDim> f{};
  f[0] = sender.x / 64.0;
  f[1] = sender.y / 64.0;
  f[2] = sender.heading / pi;
  f[3] = sender.id / 3.0;
  std::vector<AgentPose> sorted = neighbors;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (size_t i = 0; i < sorted.size() && i < 3; ++i) {
    f[4 + 4 * i + 0] = sorted[i].x / 64.0;
    f[4 + 4 * i + 1] = sorted[i].y / 64.0;
    f[4 + 4 * i + 2] = sorted[i].heading / pi;
    f[4 + 4 * i + 3] = sorted[i].id == receiver_id ? 1.0 : 0.0;
  }
  return f;
}

template <typename T>
typename R2TNet<T>::Output R2TNet<T>::forward(Tape<T>& tape, const Var<T>& regions,
                                              const std::array<double, kR2TSideDim>& side, double budget) const {
  if (regions.shape() != Shape{kRegionCount, kFeatureDim})
    throw ContractError("r2t: regions must be [64,32], got " + to_string(regions.shape()));
  const Var<T> ctx = tape.constant({1, 4}, {T(side[0]), T(side[1]), T(side[2]), T(side[3])});
  std::vector<T> nb(12);
  for (int i = 0; i < 12; ++i) nb[i] = static_cast<T>(side[4 + i]);
  const Var<T> nbr = tape.constant({1, 12}, std::move(nb));
  const Var<T> bud = tape.constant({1, 1}, {static_cast<T>(budget)});

  Var<T> x = ag::concat<T>({region_proj(tape, regions), context_proj(tape, ctx), neighbor_proj(tape, nbr),
                            budget_proj(tape, bud)},
                           0);
  x = ag::add(x, tape.param(*pos));

  constexpr int head_dim = kR2TDim / kR2THeads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(head_dim));
  for (const Block& blk : blocks) {
    const Var<T> qkv = blk.qkv(tape, blk.norm1(tape, x));
    std::vector<Var<T>> heads;
    heads.reserve(kR2THeads);
    for (int h = 0; h < kR2THeads; ++h) {
      const Var<T> q = ag::slice(qkv, 1, h * head_dim, (h + 1) * head_dim);
      const Var<T> k = ag::slice(qkv, 1, kR2TDim + h * head_dim, kR2TDim + (h + 1) * head_dim);
      const Var<T> v = ag::slice(qkv, 1, 2 * kR2TDim + h * head_dim, 2 * kR2TDim + (h + 1) * head_dim);
      const Var<T> att = ag::softmax(ag::scale(ag::matmul(q, k, false, true), inv_sqrt), -1);
      heads.push_back(ag::matmul(att, v));
    }
    x = ag::add(x, blk.proj(tape, ag::concat(heads, 1)));
    x = ag::add(x, blk.ffn2(tape, ag::relu(blk.ffn1(tape, blk.norm2(tape, x)))));
  }
  const Var<T> z = final_norm(tape, ag::slice(x, 0, 0, kRegionCount));
  Output out;
  out.p = ag::reshape(ag::sigmoid(transmit_head(tape, z)), {kRegionCount});
  out.s = ag::reshape(priority_head(tape, z), {kRegionCount});
  return out;
}

template <typename T>
Var<T> Where2CommNet<T>::forward(Tape<T>& tape, const Var<T>& regions) const {
  const Var<T> h = ag::relu(l2(tape, ag::relu(l1(tape, regions))));
  return ag::reshape(l3(tape, h), {kRegionCount});
}

template <typename T>
Var<T> Ic3NetNet<T>::forward(Tape<T>& tape, const Var<T>& regions) const {
  const Var<T> global = ag::repeat_rows(ag::mean_rows(regions), regions.dim(0));
  const Var<T> h = ag::relu(l1(tape, ag::concat<T>({regions, global}, 1)));
  return ag::reshape(ag::sigmoid(l2(tape, h)), {regions.dim(0)});
}

template <typename T>
Var<T> MaskNet<T>::forward(Tape<T>& tape, const Var<T>& regions) const {
  return ag::reshape(l(tape, regions), {regions.dim(0)});
}

// ---------------------------------------------------------------- Model

namespace {

template <typename T>
class Builder {
 public:
  Builder(ParamStore<T>& store, uint64_t seed) : store_(store), seed_(seed) {}

  Linear<T> linear(const std::string& name, int in, int out) {
    Linear<T> l;
    l.w = &store_.add(name + ".w", {in, out});
    l.b = &store_.add(name + ".b", {out});
    uniform(*l.w, in);
    return l;
  }

  LayerNorm<T> norm(const std::string& name, int dim) {
    LayerNorm<T> n;
    n.gamma = &store_.add(name + ".gamma", {dim});
    n.beta = &store_.add(name + ".beta", {dim});
    std::fill(n.gamma->value.begin(), n.gamma->value.end(), T(1));
    return n;
  }

  Conv<T> conv(const std::string& name, int cin, int cout, int stride) {
    Conv<T> c;
    c.w = &store_.add(name + ".w", {cout, cin, 3, 3});
    c.b = &store_.add(name + ".b", {cout});
    c.stride = stride;
    uniform(*c.w, cin * 9);
    return c;
  }

  ConvTranspose<T> deconv(const std::string& name, int cin, int cout) {
    ConvTranspose<T> c;
    c.w = &store_.add(name + ".w", {cin, cout, 3, 3});
    c.b = &store_.add(name + ".b", {cout});
    uniform(*c.w, cin * 9);
    return c;
  }

  Parameter<T>& raw(const std::string& name, Shape shape) { return store_.add(name, std::move(shape)); }

  CounterRng rng_for(const std::string& name) const { return CounterRng(derive_key(Stream::kInit, {seed_, fnv1a64(name)})); }

  void uniform(Parameter<T>& p, int fan_in) {
    CounterRng rng = rng_for(p.name);
    const double bound = std::sqrt(1.0 / fan_in);
    for (auto& v : p.value) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  }

  void normal(Parameter<T>& p, double stddev) {
    CounterRng rng = rng_for(p.name);
    for (auto& v : p.value) v = static_cast<T>(stddev * rng.normal());
  }

 private:
  ParamStore<T>& store_;
  uint64_t seed_;
};

template <typename T>
void set_identity(Parameter<T>& w) {
  std::fill(w.value.begin(), w.value.end(), T(0));
  const int n = std::min(w.shape[0], w.shape[1]);
  for (int i = 0; i < n; ++i) w.value[static_cast<size_t>(i) * w.shape[1] + i] = T(1);
}

}  // namespace

template <typename T>
Model<T>::Model(uint64_t init_seed) {
  Builder<T> b(params_, init_seed);

  encoder.layers = {b.conv("enc.conv1", 2, 8, 2), b.conv("enc.conv2", 8, 16, 2), b.conv("enc.conv3", 16, 32, 2),
                    b.conv("enc.conv4", 32, 32, 1)};

  fusion.recv_norm = b.norm("fuse.recv_norm", kFeatureDim);
  fusion.slot_embed = &b.raw("fuse.slot_embed", {kRegionCount * kSenderLanes, kFeatureDim});
  fusion.query_pos = &b.raw("fuse.query_pos", {kRegionCount, kFeatureDim});
  {
    // Slot and query embeddings start from one shared set of base vectors.
    CounterRng rng = b.rng_for("fuse.base_embed");
    std::vector<T> base(static_cast<size_t>(kRegionCount) * kFeatureDim);
    for (auto& v : base) v = static_cast<T>(1.5 * rng.normal());
    std::copy(base.begin(), base.end(), fusion.query_pos->value.begin());
    for (int lane = 0; lane < kSenderLanes; ++lane)
      std::copy(base.begin(), base.end(), fusion.slot_embed->value.begin() + static_cast<size_t>(lane) * base.size());
  }
  fusion.wq = b.linear("fuse.wq", kFeatureDim, kFeatureDim);
  fusion.wk = b.linear("fuse.wk", kFeatureDim, kFeatureDim);
  fusion.wv = b.linear("fuse.wv", kFeatureDim, kFeatureDim);
  set_identity(*fusion.wq.w);
  set_identity(*fusion.wk.w);
  fusion.sink_key = &b.raw("fuse.sink_key", {1, kFeatureDim});
  fusion.sink_value = &b.raw("fuse.sink_value", {1, kFeatureDim});
  fusion.gate = b.linear("fuse.gate", 2 * kFeatureDim, kFeatureDim);
  fusion.out_norm = b.norm("fuse.out_norm", kFeatureDim);
  fusion.ffn1 = b.linear("fuse.ffn1", kFeatureDim, 2 * kFeatureDim);
  fusion.ffn2 = b.linear("fuse.ffn2", 2 * kFeatureDim, kFeatureDim);

  detector.layers = {b.deconv("det.deconv1", 32, 16), b.deconv("det.deconv2", 16, 8), b.deconv("det.deconv3", 8, 1)};

  r2t.region_proj = b.linear("pol.r2t.region_proj", kFeatureDim, kR2TDim);
  r2t.context_proj = b.linear("pol.r2t.context_proj", 4, kR2TDim);
  r2t.neighbor_proj = b.linear("pol.r2t.neighbor_proj", 12, kR2TDim);
  r2t.budget_proj = b.linear("pol.r2t.budget_proj", 1, kR2TDim);
  r2t.pos = &b.raw("pol.r2t.pos", {kR2TTokens, kR2TDim});
  b.normal(*r2t.pos, 0.02);
  for (int i = 0; i < kR2TLayers; ++i) {
    const std::string p = "pol.r2t.block" + std::to_string(i) + ".";
    auto& blk = r2t.blocks[i];
    blk.norm1 = b.norm(p + "norm1", kR2TDim);
    blk.qkv = b.linear(p + "qkv", kR2TDim, 3 * kR2TDim);
    blk.proj = b.linear(p + "proj", kR2TDim, kR2TDim);
    blk.norm2 = b.norm(p + "norm2", kR2TDim);
    blk.ffn1 = b.linear(p + "ffn1", kR2TDim, kR2TFfn);
    blk.ffn2 = b.linear(p + "ffn2", kR2TFfn, kR2TDim);
  }
  r2t.final_norm = b.norm("pol.r2t.final_norm", kR2TDim);
  r2t.transmit_head = b.linear("pol.r2t.transmit_head", kR2TDim, 1);
  r2t.priority_head = b.linear("pol.r2t.priority_head", kR2TDim, 1);

  where2comm.l1 = b.linear("pol.where2comm.l1", kFeatureDim, 64);
  where2comm.l2 = b.linear("pol.where2comm.l2", 64, 64);
  where2comm.l3 = b.linear("pol.where2comm.l3", 64, 1);

  ic3net.l1 = b.linear("pol.ic3net.l1", 2 * kFeatureDim, 64);
  ic3net.l2 = b.linear("pol.ic3net.l2", 64, 1);

  mask.l = b.linear("pol.mask.l", kFeatureDim, 1);
}

template <typename T>
std::vector<NamedArray> Model<T>::export_arrays() const {
  std::vector<NamedArray> out = params_.export_arrays();
  out.insert(out.begin(), NamedArray{"meta.version", {1}, {static_cast<float>(kModelVersion)}});
  return out;
}

template <typename T>
void Model<T>::import_arrays(const std::vector<NamedArray>& arrays) {
  if (arrays.empty() || arrays[0].name != "meta.version" || arrays[0].data.size() != 1)
    throw FormatError("checkpoint lacks a model version record");
  if (arrays[0].data[0] != static_cast<float>(kModelVersion))
    throw FormatError("checkpoint model version " + std::to_string(arrays[0].data[0]) + " does not match " +
                      std::to_string(kModelVersion));
  params_.import_arrays(std::vector<NamedArray>(arrays.begin() + 1, arrays.end()));
}

template <typename T>
void Model<T>::save(const std::filesystem::path& path) const {
  write_checkpoint(path, export_arrays());
}

template <typename T>
void Model<T>::load(const std::filesystem::path& path) {
  import_arrays(read_checkpoint(path));
}

template <typename To, typename From>
void copy_params(const Model<From>& from, Model<To>& to) {
  const auto src = from.params().all();
  const auto dst = to.params().all();
  if (src.size() != dst.size()) throw ContractError("copy_params: parameter count mismatch");
  for (size_t i = 0; i < src.size(); ++i) {
    if (src[i]->name != dst[i]->name || src[i]->shape != dst[i]->shape)
      throw ContractError("copy_params: parameter mismatch at " + src[i]->name);
    std::transform(src[i]->value.begin(), src[i]->value.end(), dst[i]->value.begin(),
                   [](From v) { return static_cast<To>(v); });
  }
}

#define R2T_INSTANTIATE(T)            \
  template class ParamStore<T>;       \
  template struct Linear<T>;          \
  template struct LayerNorm<T>;       \
  template struct Conv<T>;            \
  template struct ConvTranspose<T>;   \
  template struct Encoder<T>;         \
  template struct Detector<T>;        \
  template struct Fusion<T>;          \
  template struct R2TNet<T>;          \
  template struct Where2CommNet<T>;   \
  template struct Ic3NetNet<T>;       \
  template struct MaskNet<T>;         \
  template class Model<T>;

R2T_INSTANTIATE(float)
R2T_INSTANTIATE(double)

template void copy_params<double, float>(const Model<float>&, Model<double>&);
template void copy_params<float, double>(const Model<double>&, Model<float>&);
template void copy_params<float, float>(const Model<float>&, Model<float>&);

}  // namespace r2t
