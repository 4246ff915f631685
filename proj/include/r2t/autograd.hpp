#pragma once

// Minimal reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every op in creation order, which is already a topological
// order of the graph; backward() walks it in reverse. Parameters live outside
// the tape and receive accumulated gradients when a backward pass reaches
// their leaf. One tape per thread; parameters may be read-shared.
//
// Everything is templated on the scalar type: float for training and
// evaluation, double for finite-difference verification.

#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace r2t {

/// Thrown when an operation receives inputs that violate its shape or
/// value contract.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Thrown by a forward op that produced NaN or Inf while finite checks are on.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

std::string to_string(const Shape& shape);
size_t numel(const Shape& shape);

namespace ag {

template <typename T>
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter(std::string n, Shape s)
      : name(std::move(n)), shape(std::move(s)), value(numel(shape), T(0)), grad(value.size(), T(0)) {}

  size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <typename T>
class Tape;

/// Handle to a node on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape<T>* tape() const { return tape_; }
  int id() const { return id_; }

  const Shape& shape() const;
  int dim(int i) const;
  size_t size() const;
  const std::vector<T>& value() const;
  /// Gradient buffer (allocated zeroed on first access).
  std::vector<T>& grad() const;
  T item() const;

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Tape();

  Var<T> constant(Shape shape, std::vector<T> values);
  /// Free-standing input that collects its own gradient (used by gradcheck).
  Var<T> input(Shape shape, std::vector<T> values);
  /// Leaf bound to a parameter; one leaf per parameter per tape.
  Var<T> param(Parameter<T>& p);

  /// Records a new node. `fn` is kept only if grad mode is on and some
  /// input requires a gradient.
  Var<T> push(Shape shape, std::vector<T> value, std::initializer_list<Var<T>> inputs,
              BackwardFn fn);
  Var<T> push(Shape shape, std::vector<T> value, const std::vector<Var<T>>& inputs,
              BackwardFn fn);

  /// Reverse sweep from a scalar root. Gradients accumulate additively.
  void backward(const Var<T>& root);

  void clear();
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }
  void set_check_finite(bool on) { check_finite_ = on; }

  Node& node(int id) { return nodes_[id]; }
  const Node& node(int id) const { return nodes_[id]; }
  std::vector<T>& grad(int id);
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, int> param_nodes_;
  bool grad_enabled_ = true;
  bool check_finite_;
};

/// Disables gradient recording on a tape for the lifetime of the guard.
template <typename T>
class NoGradGuard {
 public:
  explicit NoGradGuard(Tape<T>& tape) : tape_(tape), prev_(tape.grad_enabled()) {
    tape.set_grad_enabled(false);
  }
  ~NoGradGuard() { tape_.set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape<T>& tape_;
  bool prev_;
};

// ---- elementwise ----
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
template <typename T> Var<T> relu(const Var<T>& x);
template <typename T> Var<T> sigmoid(const Var<T>& x);

// ---- linear algebra ----
/// 2-D matrix product with optional transposition of either operand.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool trans_a = false, bool trans_b = false);
/// x[n,in] * w[in,out] + bias[out].
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias);

// ---- normalization ----
template <typename T> Var<T> softmax(const Var<T>& x, int axis = -1);
/// Normalizes along `axis`; gamma/beta (length of that axis) may be invalid Vars.
template <typename T>
Var<T> layernorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, int axis = -1,
                 T eps = T(1e-5));

// ---- structure ----
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, int axis);
template <typename T> Var<T> slice(const Var<T>& x, int axis, int begin, int end);
template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);
template <typename T> Var<T> transpose(const Var<T>& x);
/// Rows x[idx[i], :] of a 2-D tensor.
template <typename T> Var<T> gather_rows(const Var<T>& x, const std::vector<int>& idx);
/// [1,d] -> [n,d].
template <typename T> Var<T> repeat_rows(const Var<T>& x, int n);
template <typename T> Var<T> detach(const Var<T>& x);

// ---- reductions ----
template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);
/// Mean over rows of a 2-D tensor: [n,d] -> [1,d].
template <typename T> Var<T> mean_rows(const Var<T>& x);
template <typename T> Var<T> abs_sum(const Var<T>& x);
/// Mean binary cross-entropy of sigmoid(logits) against targets in [0,1],
/// in the overflow-free form max(x,0) - x*t + log(1 + exp(-|x|)).
template <typename T> Var<T> bce_with_logits(const Var<T>& logits, const Var<T>& target);

// ---- convolution ([C,H,W] layout, square kernels) ----
/// w: [Cout, Cin, k, k], bias: [Cout].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int pad);
/// w: [Cin, Cout, k, k], bias: [Cout]; output size (H-1)*stride - 2*pad + k + out_pad.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int pad,
                        int out_pad);

/// Straight-through scaling: forward returns x unchanged; backward passes the
/// gradient to x as-is and to w[i] as if the output were x[i,:] * w[i].
template <typename T> Var<T> straight_through(const Var<T>& x, const Var<T>& w);
/// Forward x[i,:] * w[i].
template <typename T> Var<T> scale_rows(const Var<T>& x, const Var<T>& w);

}  // namespace ag
}  // namespace r2t
