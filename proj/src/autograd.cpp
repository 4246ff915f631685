#include "r2t/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "r2t/kernels.hpp"

namespace r2t {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

size_t numel(const Shape& shape) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  return n;
}

namespace ag {
namespace {

using kernels::Trans;

void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

std::string shapes_msg(const char* op, const Shape& a, const Shape& b) {
  return std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b);
}

int norm_axis(int axis, size_t ndim, const char* op) {
  const int nd = static_cast<int>(ndim);
  if (axis < 0) axis += nd;
  require(axis >= 0 && axis < nd, std::string(op) + ": axis out of range");
  return axis;
}

struct AxisSplit {
  size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <typename T>
bool wants(Tape<T>& t, const Var<T>& v) {
  return t.requires_grad(v.id());
}

}  // namespace

// ---------------------------------------------------------------- Var

template <typename T>
const Shape& Var<T>::shape() const {
  return tape_->node(id_).shape;
}
template <typename T>
int Var<T>::dim(int i) const {
  const Shape& s = shape();
  if (i < 0) i += static_cast<int>(s.size());
  return s.at(i);
}
template <typename T>
size_t Var<T>::size() const {
  return tape_->node(id_).value.size();
}
template <typename T>
const std::vector<T>& Var<T>::value() const {
  return tape_->node(id_).value;
}
template <typename T>
std::vector<T>& Var<T>::grad() const {
  return tape_->grad(id_);
}
template <typename T>
T Var<T>::item() const {
  require(size() == 1, "item: tensor is not scalar, shape " + to_string(shape()));
  return value()[0];
}

// ---------------------------------------------------------------- Tape

template <typename T>
Tape<T>::Tape() {
#ifdef NDEBUG
  check_finite_ = false;
#else
  check_finite_ = true;
#endif
}

template <typename T>
Var<T> Tape<T>::constant(Shape shape, std::vector<T> values) {
  require(numel(shape) == values.size(), "constant: value count does not match shape " + to_string(shape));
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(values);
  nodes_.push_back(std::move(n));
  return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename T>
Var<T> Tape<T>::input(Shape shape, std::vector<T> values) {
  Var<T> v = constant(std::move(shape), std::move(values));
  nodes_.back().requires_grad = grad_enabled_;
  return v;
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var<T>(this, it->second);
  Node n;
  n.shape = p.shape;
  n.value = p.value;
  if (grad_enabled_) {
    n.requires_grad = true;
    Parameter<T>* target = &p;
    n.backward = [target](Tape& t, int self) {
      const auto& g = t.node(self).grad;
      for (size_t i = 0; i < g.size(); ++i) target->grad[i] += g[i];
    };
  }
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return Var<T>(this, id);
}

template <typename T>
Var<T> Tape<T>::push(Shape shape, std::vector<T> value, const std::vector<Var<T>>& inputs,
                     BackwardFn fn) {
  if (check_finite_) {
    for (T v : value)
      if (!std::isfinite(v)) throw NonFiniteError("non-finite value produced by forward op");
  }
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const auto& in : inputs)
      if (in.valid() && nodes_[in.id()].requires_grad) n.requires_grad = true;
    if (n.requires_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename T>
Var<T> Tape<T>::push(Shape shape, std::vector<T> value, std::initializer_list<Var<T>> inputs,
                     BackwardFn fn) {
  return push(std::move(shape), std::move(value), std::vector<Var<T>>(inputs), std::move(fn));
}

template <typename T>
std::vector<T>& Tape<T>::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), T(0));
  return n.grad;
}

template <typename T>
void Tape<T>::backward(const Var<T>& root) {
  require(root.tape() == this, "backward: root belongs to another tape");
  require(root.size() == 1, "backward: root must be scalar, got shape " + to_string(root.shape()));
  grad(root.id())[0] += T(1);
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, id);
  }
}

template <typename T>
void Tape<T>::clear() {
  nodes_.clear();
  param_nodes_.clear();
}

// ---------------------------------------------------------------- elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), shapes_msg("add", a.shape(), b.shape()));
  std::vector<T> out(a.value());
  const auto& bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.shape(), std::move(out), {a, b}, [ia, ib](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    for (int in : {ia, ib}) {
      if (!t.requires_grad(in)) continue;
      auto& gi = t.grad(in);
      for (size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), shapes_msg("sub", a.shape(), b.shape()));
  std::vector<T> out(a.value());
  const auto& bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.shape(), std::move(out), {a, b}, [ia, ib](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), shapes_msg("mul", a.shape(), b.shape()));
  std::vector<T> out(a.value());
  const auto& bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.shape(), std::move(out), {a, b}, [ia, ib](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    const auto& av = t.node(ia).value;
    const auto& bv = t.node(ib).value;
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  std::vector<T> out(a.value());
  for (auto& v : out) v *= factor;
  const int ia = a.id();
  return a.tape()->push(a.shape(), std::move(out), {a}, [ia, factor](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    auto& ga = t.grad(ia);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  std::vector<T> out(x.value());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  const int ix = x.id();
  return x.tape()->push(x.shape(), std::move(out), {x}, [ix](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    const auto& xv = t.node(ix).value;
    auto& gx = t.grad(ix);
    for (size_t i = 0; i < g.size(); ++i)
      if (xv[i] > T(0)) gx[i] += g[i];
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  std::vector<T> out(x.value());
  for (auto& v : out) v = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  const int ix = x.id();
  return x.tape()->push(x.shape(), std::move(out), {x}, [ix](Tape<T>& t, int self) {
    const auto& node = t.node(self);
    auto& gx = t.grad(ix);
    for (size_t i = 0; i < node.grad.size(); ++i) {
      const T y = node.value[i];
      gx[i] += node.grad[i] * y * (T(1) - y);
    }
  });
}

// ---------------------------------------------------------------- linear algebra

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool trans_a, bool trans_b) {
  require(a.shape().size() == 2 && b.shape().size() == 2, shapes_msg("matmul", a.shape(), b.shape()));
  const int m = trans_a ? a.dim(1) : a.dim(0);
  const int k = trans_a ? a.dim(0) : a.dim(1);
  const int kb = trans_b ? b.dim(1) : b.dim(0);
  const int n = trans_b ? b.dim(0) : b.dim(1);
  require(k == kb, shapes_msg("matmul", a.shape(), b.shape()));
  std::vector<T> out(static_cast<size_t>(m) * n);
  const Trans ta = trans_a ? Trans::kYes : Trans::kNo;
  const Trans tb = trans_b ? Trans::kYes : Trans::kNo;
  kernels::gemm(ta, tb, m, n, k, a.value().data(), b.value().data(), out.data(), false);
  const int ia = a.id(), ib = b.id();
  return a.tape()->push({m, n}, std::move(out), {a, b},
                        [=](Tape<T>& t, int self) {
                          const T* g = t.node(self).grad.data();
                          const T* av = t.node(ia).value.data();
                          const T* bv = t.node(ib).value.data();
                          if (t.requires_grad(ia)) {
                            T* ga = t.grad(ia).data();
                            // dA = G * op(B)^T, laid out as A is stored.
                            if (!trans_a)
                              kernels::gemm(Trans::kNo, trans_b ? Trans::kNo : Trans::kYes, m, k, n, g, bv, ga, true);
                            else
                              kernels::gemm(trans_b ? Trans::kYes : Trans::kNo, Trans::kYes, k, m, n, bv, g, ga, true);
                          }
                          if (t.requires_grad(ib)) {
                            T* gb = t.grad(ib).data();
                            // dB = op(A)^T * G, laid out as B is stored.
                            if (!trans_b)
                              kernels::gemm(trans_a ? Trans::kNo : Trans::kYes, Trans::kNo, k, n, m, av, g, gb, true);
                            else
                              kernels::gemm(Trans::kYes, trans_a ? Trans::kYes : Trans::kNo, n, k, m, g, av, gb, true);
                          }
                        });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  require(x.shape().size() == 2 && w.shape().size() == 2 && x.dim(1) == w.dim(0),
          shapes_msg("linear", x.shape(), w.shape()));
  const int n = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  require(!bias.valid() || bias.size() == static_cast<size_t>(out_dim),
          shapes_msg("linear(bias)", w.shape(), bias.valid() ? bias.shape() : Shape{}));
  std::vector<T> out(static_cast<size_t>(n) * out_dim);
  if (bias.valid()) {
    const auto& bv = bias.value();
    for (int i = 0; i < n; ++i) std::copy(bv.begin(), bv.end(), out.begin() + static_cast<size_t>(i) * out_dim);
  }
  kernels::gemm(Trans::kNo, Trans::kNo, n, out_dim, in, x.value().data(), w.value().data(), out.data(),
                bias.valid());
  const int ix = x.id(), iw = w.id(), ib = bias.valid() ? bias.id() : -1;
  return x.tape()->push({n, out_dim}, std::move(out), {x, w, bias}, [=](Tape<T>& t, int self) {
    const T* g = t.node(self).grad.data();
    if (t.requires_grad(ix))
      kernels::gemm(Trans::kNo, Trans::kYes, n, in, out_dim, g, t.node(iw).value.data(), t.grad(ix).data(), true);
    if (t.requires_grad(iw))
      kernels::gemm(Trans::kYes, Trans::kNo, in, out_dim, n, t.node(ix).value.data(), g, t.grad(iw).data(), true);
    if (ib >= 0 && t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < out_dim; ++j) gb[j] += g[static_cast<size_t>(i) * out_dim + j];
    }
  });
}

// ---------------------------------------------------------------- normalization

template <typename T>
Var<T> softmax(const Var<T>& x, int axis) {
  axis = norm_axis(axis, x.shape().size(), "softmax");
  const AxisSplit s = split_at(x.shape(), axis);
  std::vector<T> out(x.value());
  for (size_t o = 0; o < s.outer; ++o)
    for (size_t in = 0; in < s.inner; ++in) {
      T* base = out.data() + o * s.n * s.inner + in;
      T mx = base[0];
      for (size_t j = 1; j < s.n; ++j) mx = std::max(mx, base[j * s.inner]);
      T total = 0;
      for (size_t j = 0; j < s.n; ++j) {
        base[j * s.inner] = std::exp(base[j * s.inner] - mx);
        total += base[j * s.inner];
      }
      for (size_t j = 0; j < s.n; ++j) base[j * s.inner] /= total;
    }
  const int ix = x.id();
  return x.tape()->push(x.shape(), std::move(out), {x}, [ix, s](Tape<T>& t, int self) {
    const auto& node = t.node(self);
    auto& gx = t.grad(ix);
    for (size_t o = 0; o < s.outer; ++o)
      for (size_t in = 0; in < s.inner; ++in) {
        const size_t off = o * s.n * s.inner + in;
        T dot = 0;
        for (size_t j = 0; j < s.n; ++j) dot += node.grad[off + j * s.inner] * node.value[off + j * s.inner];
        for (size_t j = 0; j < s.n; ++j) {
          const size_t p = off + j * s.inner;
          gx[p] += node.value[p] * (node.grad[p] - dot);
        }
      }
  });
}

template <typename T>
Var<T> layernorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, int axis, T eps) {
  axis = norm_axis(axis, x.shape().size(), "layernorm");
  const AxisSplit s = split_at(x.shape(), axis);
  require(!gamma.valid() || gamma.size() == s.n, shapes_msg("layernorm(gamma)", x.shape(), gamma.valid() ? gamma.shape() : Shape{}));
  require(!beta.valid() || beta.size() == s.n, shapes_msg("layernorm(beta)", x.shape(), beta.valid() ? beta.shape() : Shape{}));
  // xhat and 1/sigma are recomputed in backward from the input value.
  std::vector<T> out(x.value().size());
  const auto& xv = x.value();
  for (size_t o = 0; o < s.outer; ++o)
    for (size_t in = 0; in < s.inner; ++in) {
      const size_t off = o * s.n * s.inner + in;
      T mu = 0;
      for (size_t j = 0; j < s.n; ++j) mu += xv[off + j * s.inner];
      mu /= static_cast<T>(s.n);
      T var = 0;
      for (size_t j = 0; j < s.n; ++j) {
        const T d = xv[off + j * s.inner] - mu;
        var += d * d;
      }
      var /= static_cast<T>(s.n);
      const T rstd = T(1) / std::sqrt(var + eps);
      for (size_t j = 0; j < s.n; ++j) {
        T y = (xv[off + j * s.inner] - mu) * rstd;
        if (gamma.valid()) y *= gamma.value()[j];
        if (beta.valid()) y += beta.value()[j];
        out[off + j * s.inner] = y;
      }
    }
  const int ix = x.id(), ig = gamma.valid() ? gamma.id() : -1, ib = beta.valid() ? beta.id() : -1;
  return x.tape()->push(x.shape(), std::move(out), {x, gamma, beta}, [=](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    const auto& xv = t.node(ix).value;
    const T* gam = ig >= 0 ? t.node(ig).value.data() : nullptr;
    std::vector<T> xhat(s.n), dxhat(s.n);
    for (size_t o = 0; o < s.outer; ++o)
      for (size_t in = 0; in < s.inner; ++in) {
        const size_t off = o * s.n * s.inner + in;
        T mu = 0;
        for (size_t j = 0; j < s.n; ++j) mu += xv[off + j * s.inner];
        mu /= static_cast<T>(s.n);
        T var = 0;
        for (size_t j = 0; j < s.n; ++j) {
          const T d = xv[off + j * s.inner] - mu;
          var += d * d;
        }
        var /= static_cast<T>(s.n);
        const T rstd = T(1) / std::sqrt(var + eps);
        T mean_d = 0, mean_dx = 0;
        for (size_t j = 0; j < s.n; ++j) {
          xhat[j] = (xv[off + j * s.inner] - mu) * rstd;
          dxhat[j] = g[off + j * s.inner] * (gam ? gam[j] : T(1));
          mean_d += dxhat[j];
          mean_dx += dxhat[j] * xhat[j];
        }
        mean_d /= static_cast<T>(s.n);
        mean_dx /= static_cast<T>(s.n);
        if (t.requires_grad(ix)) {
          auto& gx = t.grad(ix);
          for (size_t j = 0; j < s.n; ++j) gx[off + j * s.inner] += rstd * (dxhat[j] - mean_d - xhat[j] * mean_dx);
        }
        if (ig >= 0 && t.requires_grad(ig)) {
          auto& gg = t.grad(ig);
          for (size_t j = 0; j < s.n; ++j) gg[j] += g[off + j * s.inner] * xhat[j];
        }
        if (ib >= 0 && t.requires_grad(ib)) {
          auto& gb = t.grad(ib);
          for (size_t j = 0; j < s.n; ++j) gb[j] += g[off + j * s.inner];
        }
      }
  });
}

// ---------------------------------------------------------------- structure

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& first = parts[0].shape();
  axis = norm_axis(axis, first.size(), "concat");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    bool ok = ps.size() == first.size();
    for (size_t d = 0; ok && d < ps.size(); ++d)
      if (static_cast<int>(d) != axis && ps[d] != first[d]) ok = false;
    require(ok, shapes_msg("concat", first, ps));
    out_shape[axis] += ps[axis];
  }
  const AxisSplit os = split_at(out_shape, axis);
  std::vector<T> out(numel(out_shape));
  std::vector<int> ids, widths;
  size_t offset = 0;
  for (const auto& p : parts) {
    const size_t w = static_cast<size_t>(p.dim(axis)) * os.inner;
    const auto& pv = p.value();
    for (size_t o = 0; o < os.outer; ++o)
      std::copy(pv.begin() + o * w, pv.begin() + (o + 1) * w, out.begin() + o * os.n * os.inner + offset);
    offset += w;
    ids.push_back(p.id());
    widths.push_back(static_cast<int>(w));
  }
  return parts[0].tape()->push(out_shape, std::move(out), parts, [ids, widths, os](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    size_t offset = 0;
    for (size_t p = 0; p < ids.size(); ++p) {
      const size_t w = widths[p];
      if (t.requires_grad(ids[p])) {
        auto& gp = t.grad(ids[p]);
        for (size_t o = 0; o < os.outer; ++o)
          for (size_t i = 0; i < w; ++i) gp[o * w + i] += g[o * os.n * os.inner + offset + i];
      }
      offset += w;
    }
  });
}

template <typename T>
Var<T> slice(const Var<T>& x, int axis, int begin, int end) {
  axis = norm_axis(axis, x.shape().size(), "slice");
  require(0 <= begin && begin <= end && end <= x.dim(axis),
          "slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") out of bounds for " + to_string(x.shape()));
  const AxisSplit s = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const size_t w = static_cast<size_t>(end - begin) * s.inner;
  const size_t src_off = static_cast<size_t>(begin) * s.inner;
  std::vector<T> out(s.outer * w);
  const auto& xv = x.value();
  for (size_t o = 0; o < s.outer; ++o)
    std::copy(xv.begin() + o * s.n * s.inner + src_off, xv.begin() + o * s.n * s.inner + src_off + w,
              out.begin() + o * w);
  const int ix = x.id();
  return x.tape()->push(out_shape, std::move(out), {x}, [=](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    auto& gx = t.grad(ix);
    for (size_t o = 0; o < s.outer; ++o)
      for (size_t i = 0; i < w; ++i) gx[o * s.n * s.inner + src_off + i] += g[o * w + i];
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  require(numel(shape) == x.size(), shapes_msg("reshape", x.shape(), shape));
  const int ix = x.id();
  return x.tape()->push(std::move(shape), x.value(), {x}, [ix](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    auto& gx = t.grad(ix);
    for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Var<T> transpose(const Var<T>& x) {
  require(x.shape().size() == 2, "transpose: expected 2-D tensor, got " + to_string(x.shape()));
  const int r = x.dim(0), c = x.dim(1);
  std::vector<T> out(x.size());
  const auto& xv = x.value();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<size_t>(j) * r + i] = xv[static_cast<size_t>(i) * c + j];
  const int ix = x.id();
  return x.tape()->push({c, r}, std::move(out), {x}, [=](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    auto& gx = t.grad(ix);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) gx[static_cast<size_t>(i) * c + j] += g[static_cast<size_t>(j) * r + i];
  });
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, const std::vector<int>& idx) {
  require(x.shape().size() == 2, "gather_rows: expected 2-D tensor, got " + to_string(x.shape()));
  const int n = x.dim(0), d = x.dim(1);
  std::vector<T> out(idx.size() * d);
  const auto& xv = x.value();
  for (size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < n, "gather_rows: index out of range");
    std::copy(xv.begin() + static_cast<size_t>(idx[i]) * d, xv.begin() + static_cast<size_t>(idx[i] + 1) * d,
              out.begin() + i * d);
  }
  const int ix = x.id();
  return x.tape()->push({static_cast<int>(idx.size()), d}, std::move(out), {x}, [ix, idx, d](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    auto& gx = t.grad(ix);
    for (size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < d; ++j) gx[static_cast<size_t>(idx[i]) * d + j] += g[i * d + j];
  });
}

template <typename T>
Var<T> repeat_rows(const Var<T>& x, int n) {
  require(x.shape().size() == 2 && x.dim(0) == 1, "repeat_rows: expected [1,d], got " + to_string(x.shape()));
  const int d = x.dim(1);
  std::vector<T> out(static_cast<size_t>(n) * d);
  for (int i = 0; i < n; ++i) std::copy(x.value().begin(), x.value().end(), out.begin() + static_cast<size_t>(i) * d);
  const int ix = x.id();
  return x.tape()->push({n, d}, std::move(out), {x}, [ix, n, d](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    auto& gx = t.grad(ix);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) gx[j] += g[static_cast<size_t>(i) * d + j];
  });
}

template <typename T>
Var<T> detach(const Var<T>& x) {
  return x.tape()->constant(x.shape(), x.value());
}

// ---------------------------------------------------------------- reductions

template <typename T>
Var<T> sum(const Var<T>& x) {
  T total = 0;
  for (T v : x.value()) total += v;
  const int ix = x.id();
  return x.tape()->push({1}, {total}, {x}, [ix](Tape<T>& t, int self) {
    const T g = t.node(self).grad[0];
    for (auto& v : t.grad(ix)) v += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  require(x.size() > 0, "mean: empty tensor");
  T total = 0;
  for (T v : x.value()) total += v;
  const T inv = T(1) / static_cast<T>(x.size());
  const int ix = x.id();
  return x.tape()->push({1}, {total * inv}, {x}, [ix, inv](Tape<T>& t, int self) {
    const T g = t.node(self).grad[0] * inv;
    for (auto& v : t.grad(ix)) v += g;
  });
}

template <typename T>
Var<T> mean_rows(const Var<T>& x) {
  require(x.shape().size() == 2 && x.dim(0) > 0, "mean_rows: expected non-empty 2-D tensor, got " + to_string(x.shape()));
  const int n = x.dim(0), d = x.dim(1);
  std::vector<T> out(d, T(0));
  const auto& xv = x.value();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out[j] += xv[static_cast<size_t>(i) * d + j];
  const T inv = T(1) / static_cast<T>(n);
  for (auto& v : out) v *= inv;
  const int ix = x.id();
  return x.tape()->push({1, d}, std::move(out), {x}, [=](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    auto& gx = t.grad(ix);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) gx[static_cast<size_t>(i) * d + j] += g[j] * inv;
  });
}

template <typename T>
Var<T> abs_sum(const Var<T>& x) {
  T total = 0;
  for (T v : x.value()) total += std::abs(v);
  const int ix = x.id();
  return x.tape()->push({1}, {total}, {x}, [ix](Tape<T>& t, int self) {
    const T g = t.node(self).grad[0];
    const auto& xv = t.node(ix).value;
    auto& gx = t.grad(ix);
    for (size_t i = 0; i < xv.size(); ++i) gx[i] += g * (xv[i] > 0 ? T(1) : xv[i] < 0 ? T(-1) : T(0));
  });
}

template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const Var<T>& target) {
  require(logits.shape() == target.shape(), shapes_msg("bce_with_logits", logits.shape(), target.shape()));
  const auto& x = logits.value();
  const auto& y = target.value();
  T total = 0;
  for (size_t i = 0; i < x.size(); ++i)
    total += std::max(x[i], T(0)) - x[i] * y[i] + std::log1p(std::exp(-std::abs(x[i])));
  const T inv = T(1) / static_cast<T>(x.size());
  const int il = logits.id(), it = target.id();
  return logits.tape()->push({1}, {total * inv}, {logits, target}, [=](Tape<T>& t, int self) {
    const T g = t.node(self).grad[0] * inv;
    const auto& xv = t.node(il).value;
    const auto& yv = t.node(it).value;
    if (t.requires_grad(il)) {
      auto& gl = t.grad(il);
      for (size_t i = 0; i < xv.size(); ++i) {
        const T sig = xv[i] >= 0 ? T(1) / (T(1) + std::exp(-xv[i])) : std::exp(xv[i]) / (T(1) + std::exp(xv[i]));
        gl[i] += g * (sig - yv[i]);
      }
    }
    if (t.requires_grad(it)) {
      auto& gt = t.grad(it);
      for (size_t i = 0; i < xv.size(); ++i) gt[i] -= g * xv[i];
    }
  });
}

// ---------------------------------------------------------------- convolution

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int pad) {
  require(x.shape().size() == 3 && w.shape().size() == 4 && w.dim(1) == x.dim(0) && w.dim(2) == w.dim(3),
          shapes_msg("conv2d", x.shape(), w.shape()));
  const int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int co = w.dim(0), ks = w.dim(2);
  require(!bias.valid() || bias.size() == static_cast<size_t>(co), shapes_msg("conv2d(bias)", w.shape(), bias.valid() ? bias.shape() : Shape{}));
  const int ho = (h + 2 * pad - ks) / stride + 1;
  const int wo = (wd + 2 * pad - ks) / stride + 1;
  require(ho > 0 && wo > 0, shapes_msg("conv2d", x.shape(), w.shape()));
  const int plane = ho * wo, kk = ci * ks * ks;
  std::vector<T> col(static_cast<size_t>(kk) * plane);
  kernels::im2col(x.value().data(), ci, h, wd, ks, stride, pad, ho, wo, col.data());
  std::vector<T> out(static_cast<size_t>(co) * plane);
  if (bias.valid())
    for (int c = 0; c < co; ++c) std::fill_n(out.begin() + static_cast<size_t>(c) * plane, plane, bias.value()[c]);
  kernels::gemm(Trans::kNo, Trans::kNo, co, plane, kk, w.value().data(), col.data(), out.data(), bias.valid());
  const int ix = x.id(), iw = w.id(), ib = bias.valid() ? bias.id() : -1;
  return x.tape()->push({co, ho, wo}, std::move(out), {x, w, bias}, [=](Tape<T>& t, int self) {
    const T* g = t.node(self).grad.data();
    if (t.requires_grad(iw)) {
      std::vector<T> col(static_cast<size_t>(kk) * plane);
      kernels::im2col(t.node(ix).value.data(), ci, h, wd, ks, stride, pad, ho, wo, col.data());
      kernels::gemm(Trans::kNo, Trans::kYes, co, kk, plane, g, col.data(), t.grad(iw).data(), true);
    }
    if (ib >= 0 && t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (int c = 0; c < co; ++c)
        for (int p = 0; p < plane; ++p) gb[c] += g[static_cast<size_t>(c) * plane + p];
    }
    if (t.requires_grad(ix)) {
      std::vector<T> dcol(static_cast<size_t>(kk) * plane);
      kernels::gemm(Trans::kYes, Trans::kNo, kk, plane, co, t.node(iw).value.data(), g, dcol.data(), false);
      kernels::col2im(dcol.data(), ci, h, wd, ks, stride, pad, ho, wo, t.grad(ix).data());
    }
  });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int pad,
                        int out_pad) {
  require(x.shape().size() == 3 && w.shape().size() == 4 && w.dim(0) == x.dim(0) && w.dim(2) == w.dim(3),
          shapes_msg("conv_transpose2d", x.shape(), w.shape()));
  const int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int co = w.dim(1), ks = w.dim(2);
  require(!bias.valid() || bias.size() == static_cast<size_t>(co),
          shapes_msg("conv_transpose2d(bias)", w.shape(), bias.valid() ? bias.shape() : Shape{}));
  const int ho = (h - 1) * stride - 2 * pad + ks + out_pad;
  const int wo = (wd - 1) * stride - 2 * pad + ks + out_pad;
  const int in_plane = h * wd, out_plane = ho * wo, kk = co * ks * ks;
  std::vector<T> cols(static_cast<size_t>(kk) * in_plane);
  kernels::gemm(Trans::kYes, Trans::kNo, kk, in_plane, ci, w.value().data(), x.value().data(), cols.data(), false);
  std::vector<T> out(static_cast<size_t>(co) * out_plane, T(0));
  kernels::col2im(cols.data(), co, ho, wo, ks, stride, pad, h, wd, out.data());
  if (bias.valid())
    for (int c = 0; c < co; ++c)
      for (int p = 0; p < out_plane; ++p) out[static_cast<size_t>(c) * out_plane + p] += bias.value()[c];
  const int ix = x.id(), iw = w.id(), ib = bias.valid() ? bias.id() : -1;
  return x.tape()->push({co, ho, wo}, std::move(out), {x, w, bias}, [=](Tape<T>& t, int self) {
    const T* g = t.node(self).grad.data();
    std::vector<T> dcols(static_cast<size_t>(kk) * in_plane);
    kernels::im2col(g, co, ho, wo, ks, stride, pad, h, wd, dcols.data());
    if (t.requires_grad(ix))
      kernels::gemm(Trans::kNo, Trans::kNo, ci, in_plane, kk, t.node(iw).value.data(), dcols.data(), t.grad(ix).data(), true);
    if (t.requires_grad(iw))
      kernels::gemm(Trans::kNo, Trans::kYes, ci, kk, in_plane, t.node(ix).value.data(), dcols.data(), t.grad(iw).data(), true);
    if (ib >= 0 && t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (int c = 0; c < co; ++c)
        for (int p = 0; p < out_plane; ++p) gb[c] += g[static_cast<size_t>(c) * out_plane + p];
    }
  });
}

template <typename T>
Var<T> straight_through(const Var<T>& x, const Var<T>& w) {
  require(x.shape().size() == 2 && w.size() == static_cast<size_t>(x.dim(0)),
          shapes_msg("straight_through", x.shape(), w.shape()));
  const int n = x.dim(0), d = x.dim(1);
  const int ix = x.id(), iw = w.id();
  return x.tape()->push(x.shape(), x.value(), {x, w}, [=](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    if (t.requires_grad(ix)) {
      auto& gx = t.grad(ix);
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(iw)) {
      const auto& xv = t.node(ix).value;
      auto& gw = t.grad(iw);
      for (int i = 0; i < n; ++i) {
        T acc = 0;
        for (int j = 0; j < d; ++j) acc += g[static_cast<size_t>(i) * d + j] * xv[static_cast<size_t>(i) * d + j];
        gw[i] += acc;
      }
    }
  });
}

template <typename T>
Var<T> scale_rows(const Var<T>& x, const Var<T>& w) {
  require(x.shape().size() == 2 && w.size() == static_cast<size_t>(x.dim(0)),
          shapes_msg("scale_rows", x.shape(), w.shape()));
  const int n = x.dim(0), d = x.dim(1);
  std::vector<T> out(x.value());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out[static_cast<size_t>(i) * d + j] *= w.value()[i];
  const int ix = x.id(), iw = w.id();
  return x.tape()->push(x.shape(), std::move(out), {x, w}, [=](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    const auto& xv = t.node(ix).value;
    const auto& wv = t.node(iw).value;
    if (t.requires_grad(ix)) {
      auto& gx = t.grad(ix);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) gx[static_cast<size_t>(i) * d + j] += g[static_cast<size_t>(i) * d + j] * wv[i];
    }
    if (t.requires_grad(iw)) {
      auto& gw = t.grad(iw);
      for (int i = 0; i < n; ++i) {
        T acc = 0;
        for (int j = 0; j < d; ++j) acc += g[static_cast<size_t>(i) * d + j] * xv[static_cast<size_t>(i) * d + j];
        gw[i] += acc;
      }
    }
  });
}

// ---------------------------------------------------------------- instantiation

#define R2T_INSTANTIATE(T)                                                                       \
  template class Var<T>;                                                                         \
  template class Tape<T>;                                                                        \
  template Var<T> add(const Var<T>&, const Var<T>&);                                             \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                             \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                             \
  template Var<T> scale(const Var<T>&, T);                                                       \
  template Var<T> relu(const Var<T>&);                                                           \
  template Var<T> sigmoid(const Var<T>&);                                                        \
  template Var<T> matmul(const Var<T>&, const Var<T>&, bool, bool);                              \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                           \
  template Var<T> softmax(const Var<T>&, int);                                                   \
  template Var<T> layernorm(const Var<T>&, const Var<T>&, const Var<T>&, int, T);                \
  template Var<T> concat(const std::vector<Var<T>>&, int);                                       \
  template Var<T> slice(const Var<T>&, int, int, int);                                           \
  template Var<T> reshape(const Var<T>&, Shape);                                                 \
  template Var<T> transpose(const Var<T>&);                                                      \
  template Var<T> gather_rows(const Var<T>&, const std::vector<int>&);                           \
  template Var<T> repeat_rows(const Var<T>&, int);                                               \
  template Var<T> detach(const Var<T>&);                                                         \
  template Var<T> sum(const Var<T>&);                                                            \
  template Var<T> mean(const Var<T>&);                                                           \
  template Var<T> mean_rows(const Var<T>&);                                                      \
  template Var<T> abs_sum(const Var<T>&);                                                        \
  template Var<T> bce_with_logits(const Var<T>&, const Var<T>&);                                 \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                 \
  template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int, int);  \
  template Var<T> straight_through(const Var<T>&, const Var<T>&);                                \
  template Var<T> scale_rows(const Var<T>&, const Var<T>&);

R2T_INSTANTIATE(float)
R2T_INSTANTIATE(double)
#undef R2T_INSTANTIATE

}  // namespace ag
}  // namespace r2t
