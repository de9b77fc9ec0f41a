#include "bake/autodiff.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "bake/error.hpp"

namespace bake {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw Error("autodiff: operand belongs to a different tape");
    needs = needs || nodes_[in.id_].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Tensor{}, needs, needs ? std::move(fn) : nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(Var target, const Tensor& delta) {
  Node& node = nodes_.at(target.id_);
  if (!node.requires_grad) return;
  node.grad += delta;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw Error("autodiff: loss belongs to a different tape");
  const Tensor& lv = nodes_.at(loss.id_).value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + lv.shape_string());
  }
  for (Node& node : nodes_) node.grad = Tensor(node.value.rows(), node.value.cols());
  if (!nodes_[loss.id_].requires_grad) return;
  nodes_[loss.id_].grad = Tensor::scalar(1.0);
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward) continue;
    node.backward(*this, node.grad);
  }
}

namespace {

void same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) throw Error(std::string(op) + ": operands on different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b, "matmul");
  return a.tape().record(kernels::matmul(a.value(), b.value()), {a, b},
                         [a, b](Tape& t, const Tensor& g) {
                           if (a.requires_grad()) t.accumulate(a, kernels::matmul_a_bt(g, b.value()));
                           if (b.requires_grad()) t.accumulate(b, kernels::matmul_at_b(a.value(), g));
                         });
}

Var transpose(Var x) {
  return x.tape().record(x.value().transposed(), {x},
                         [x](Tape& t, const Tensor& g) { t.accumulate(x, g.transposed()); });
}

Var add(Var a, Var b) {
  same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  return a.tape().record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  return a.tape().record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g * -1.0);
  });
}

Var mul(Var a, Var b) {
  same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.value().data()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (a.requires_grad()) {
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] *= b.value().data()[i];
      t.accumulate(a, ga);
    }
    if (b.requires_grad()) {
      Tensor gb = g;
      for (std::size_t i = 0; i < gb.size(); ++i) gb.data()[i] *= a.value().data()[i];
      t.accumulate(b, gb);
    }
  });
}

Var scale(Var x, double s) {
  return x.tape().record(x.value() * s, {x}, [x, s](Tape& t, const Tensor& g) { t.accumulate(x, g * s); });
}

Var add_row_bias(Var x, Var bias) {
  same_tape(x, bias, "add_row_bias");
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw ShapeError("add_row_bias: bias " + bv.shape_string() + " for input " + xv.shape_string());
  }
  Tensor out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv(0, j);
  return x.tape().record(std::move(out), {x, bias}, [x, bias](Tape& t, const Tensor& g) {
    t.accumulate(x, g);
    if (bias.requires_grad()) {
      Tensor gb(1, g.cols());
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
      t.accumulate(bias, gb);
    }
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    Tensor gx = g;
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (!(xv.data()[i] > 0.0)) gx.data()[i] = 0.0;
    t.accumulate(x, gx);
  });
}

Var row_l2_normalize(Var x) {
  auto norms = std::make_shared<std::vector<double>>(x.value().rows());
  Tensor out = kernels::row_l2_normalize(x.value(), *norms);
  Tape& tape = x.tape();
  const std::size_t self = tape.size();
  return tape.record(std::move(out), {x}, [x, norms, self](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(self);
    Tensor gx(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += y(i, j) * g(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) gx(i, j) = (g(i, j) - y(i, j) * dot) / (*norms)[i];
    }
    t.accumulate(x, gx);
  });
}

Var softmax_rows(Var x, const SoftmaxMask* mask) {
  Tensor out = bake::softmax_rows(x.value(), mask);
  Tape& tape = x.tape();
  const std::size_t self = tape.size();
  return tape.record(std::move(out), {x}, [x, self](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(self);
    Tensor gx(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) gx(i, j) = y(i, j) * (g(i, j) - dot);
    }
    t.accumulate(x, gx);
  });
}

Var log_softmax_rows(Var x) {
  Tensor out = kernels::log_softmax_rows(x.value());
  Tape& tape = x.tape();
  const std::size_t self = tape.size();
  return tape.record(std::move(out), {x}, [x, self](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(self);
    Tensor gx(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) gsum += g(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) gx(i, j) = g(i, j) - std::exp(y(i, j)) * gsum;
    }
    t.accumulate(x, gx);
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape().record(Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& g) {
    t.accumulate(x, Tensor(x.value().rows(), x.value().cols(), g.item()));
  });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var weighted_sum(Var x, const Tensor& weights) {
  require_same_shape(x.value(), weights, "weighted_sum");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += x.value().data()[i] * weights.data()[i];
  return x.tape().record(Tensor::scalar(s), {x},
                         [x, weights](Tape& t, const Tensor& g) { t.accumulate(x, weights * g.item()); });
}

Var pick(Var x, std::span<const int> cols) {
  const Tensor& xv = x.value();
  if (cols.size() != xv.rows()) {
    throw ShapeError("pick: " + std::to_string(cols.size()) + " indices for " + xv.shape_string());
  }
  std::vector<int> idx(cols.begin(), cols.end());
  Tensor out(xv.rows(), 1);
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= xv.cols()) {
      throw ShapeError("pick: column " + std::to_string(idx[i]) + " out of range for " + xv.shape_string());
    }
    out(i, 0) = xv(i, static_cast<std::size_t>(idx[i]));
  }
  return x.tape().record(std::move(out), {x}, [x, idx = std::move(idx)](Tape& t, const Tensor& g) {
    Tensor gx(x.value().rows(), x.value().cols());
    for (std::size_t i = 0; i < idx.size(); ++i) gx(i, static_cast<std::size_t>(idx[i])) = g(i, 0);
    t.accumulate(x, gx);
  });
}

Var detach(Var x) { return x.tape().constant(x.value()); }

Var conv2d(Var x, Var weight, Var bias, const kernels::ConvShape& shape) {
  same_tape(x, weight, "conv2d");
  same_tape(x, bias, "conv2d");
  Tensor out = kernels::conv2d(x.value(), weight.value(), bias.value(), shape);
  return x.tape().record(std::move(out), {x, weight, bias}, [x, weight, bias, shape](Tape& t, const Tensor& g) {
    Tensor gx;
    Tensor gw;
    Tensor gb;
    if (x.requires_grad()) gx = Tensor(x.value().rows(), x.value().cols());
    if (weight.requires_grad()) gw = Tensor(weight.value().rows(), weight.value().cols());
    if (bias.requires_grad()) gb = Tensor(bias.value().rows(), bias.value().cols());
    kernels::conv2d_backward(x.value(), weight.value(), g, shape, x.requires_grad() ? &gx : nullptr,
                             weight.requires_grad() ? &gw : nullptr, bias.requires_grad() ? &gb : nullptr);
    if (x.requires_grad()) t.accumulate(x, gx);
    if (weight.requires_grad()) t.accumulate(weight, gw);
    if (bias.requires_grad()) t.accumulate(bias, gb);
  });
}

Var maxpool2(Var x, const kernels::ImageShape& shape) {
  const std::size_t out_cols = shape.channels * (shape.height / 2) * (shape.width / 2);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(x.value().rows() * out_cols);
  Tensor out = kernels::maxpool2(x.value(), shape, *argmax);
  return x.tape().record(std::move(out), {x}, [x, argmax, out_cols](Tape& t, const Tensor& g) {
    Tensor gx(x.value().rows(), x.value().cols());
    for (std::size_t n = 0; n < g.rows(); ++n)
      for (std::size_t j = 0; j < out_cols; ++j) gx(n, (*argmax)[n * out_cols + j]) += g(n, j);
    t.accumulate(x, gx);
  });
}

}  // namespace bake
