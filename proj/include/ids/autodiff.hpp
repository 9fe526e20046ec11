#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ids/tensor.hpp"

namespace ids {

/// Graph node: a value plus an optional gradient slot of the same length.
struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;

  /// Allocates a zero gradient on first use and returns it.
  Tensor& grad_slot();
};

/// Shared handle to a graph node. Copies alias the same node, so a parameter
/// reused in several places accumulates gradient from every use.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  /// The gradient slot is shared state of the node, not of this handle.
  Tensor& grad_slot() const { return node_->grad_slot(); }
  void zero_grad();
  bool defined() const { return static_cast<bool>(node_); }
  Node* node() const { return node_.get(); }

 private:
  std::shared_ptr<Node> node_;
};

/// Ordered record of differentiable operations for one forward pass.
///
/// Ops append themselves in execution order; backward() replays them in exact
/// reverse order. A tape built with recording disabled records nothing and
/// produces outputs without gradient slots (inference mode).
class Tape {
 public:
  /// Receives the output node (value and accumulated gradient) and adds the
  /// contribution to each input gradient.
  using BackwardFn = std::function<void(const Node& output)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return ops_.size(); }

  /// Wraps `value` as the output of an op over `inputs`. Records `fn` only when
  /// recording is on and at least one input needs a gradient.
  Var record(Tensor value, std::initializer_list<const Var*> inputs, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable input.
  /// Gradients accumulate into existing slots.
  void backward(const Var& loss);

 private:
  struct Op {
    Var output;
    BackwardFn backward;
  };
  bool recording_;
  std::vector<Op> ops_;
};

/// Gradient slot of `v`, or nullptr when `v` takes no gradient.
inline Tensor* grad_target(const Var& v) { return v.requires_grad() ? &v.grad_slot() : nullptr; }

// Generic differentiable operations. Unless stated otherwise, the output has a
// fresh value and gradients are accumulated (never overwritten) into inputs.

/// 2-D matrix product [m,k]x[k,n].
Var matmul(Tape& tape, const Var& a, const Var& b);
/// x[..., in] x w[in, out] over all leading axes.
Var linear(Tape& tape, const Var& x, const Var& w);
/// Batched product a[N,m,k] x b[N,k,n], or b[N,n,k] transposed when transpose_b.
Var batched_matmul(Tape& tape, const Var& a, const Var& b, bool transpose_b = false);

enum class Binary { add, sub, mul };
/// Pointwise a (op) b. `b` either matches a's shape or is a vector broadcast
/// along a's last axis.
Var elementwise(Tape& tape, const Var& a, const Var& b, Binary op);
Var add(Tape& tape, const Var& a, const Var& b);
Var sub(Tape& tape, const Var& a, const Var& b);
Var mul(Tape& tape, const Var& a, const Var& b);
Var scale(Tape& tape, const Var& x, Real factor);
/// 1 - x
Var one_minus(Tape& tape, const Var& x);

enum class Activation { relu, sigmoid, tanh };
Var activate(Tape& tape, const Var& x, Activation kind);
Var relu(Tape& tape, const Var& x);
Var sigmoid(Tape& tape, const Var& x);
Var tanh(Tape& tape, const Var& x);

/// Numerically stable softmax along `axis`.
Var softmax(Tape& tape, const Var& x, std::size_t axis);

/// Sum of all elements, shape (1).
Var sum(Tape& tape, const Var& x);

Var reshape(Tape& tape, const Var& x, Shape shape);
Var concat(Tape& tape, std::span<const Var> parts, std::size_t axis);
Var slice(Tape& tape, const Var& x, std::size_t axis, std::size_t start, std::size_t length);
/// Stacks equally shaped tensors along a new axis.
Var stack(Tape& tape, std::span<const Var> parts, std::size_t axis);
/// Reorders axes: output axis i is input axis perm[i].
Var permute(Tape& tape, const Var& x, const std::vector<std::size_t>& perm);

// Raw kernels, shared with the layer implementations.
namespace kernel {
/// C (+)= op(A) op(B) for row-major A, B, C.
void gemm(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t n, std::size_t k, bool trans_a,
          bool trans_b, bool accumulate);
Tensor softmax_forward(const Tensor& x, std::size_t axis);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
}  // namespace kernel

}  // namespace ids
