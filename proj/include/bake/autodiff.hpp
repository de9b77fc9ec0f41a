#pragma once

// Reverse-mode automatic differentiation over Tensor values.
//
// A Tape owns every intermediate of one forward pass. Ops append a node
// holding the output value and a closure that pushes the output gradient
// back to the op's inputs. Nodes whose inputs need no gradient record no
// closure, so constants and detached values add no edges.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "bake/kernels.hpp"
#include "bake/numerics.hpp"
#include "bake/tensor.hpp"

namespace bake {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the Tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  /// Gradient after Tape::backward; zeros for unreached nodes.
  const Tensor& grad() const;
  bool requires_grad() const;

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the output gradient and propagates it with accumulate().
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends an op output. `fn` is dropped when no input requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);

  /// Adds `delta` into the gradient of `target` if it requires one.
  void accumulate(Var target, const Tensor& delta);

  /// Replays the tape from `loss`, overwriting gradients from any previous
  /// call. Throws ShapeError unless `loss` is 1x1.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& grad(std::size_t id) const { return nodes_.at(id).grad; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Differentiable ops. All operands must live on the same tape.

Var matmul(Var a, Var b);
Var transpose(Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var x, double s);
/// x (N x K) plus a 1 x K bias broadcast over rows.
Var add_row_bias(Var x, Var bias);
Var relu(Var x);
Var row_l2_normalize(Var x);
Var softmax_rows(Var x, const SoftmaxMask* mask = nullptr);
Var log_softmax_rows(Var x);
/// Sum of all entries, 1x1.
Var sum(Var x);
/// Mean of all entries, 1x1.
Var mean(Var x);
/// Sum of x * weights with constant weights, 1x1.
Var weighted_sum(Var x, const Tensor& weights);
/// x(i, cols[i]) for each row, N x 1.
Var pick(Var x, std::span<const int> cols);
/// Copy of the value with no path back to `x`.
Var detach(Var x);

Var conv2d(Var x, Var weight, Var bias, const kernels::ConvShape& shape);
Var maxpool2(Var x, const kernels::ImageShape& shape);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var x) { return scale(x, s); }

}  // namespace bake
