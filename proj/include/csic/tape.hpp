#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "csic/ops.hpp"
#include "csic/tensor.hpp"

namespace csic {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t index = static_cast<std::size_t>(-1);
  bool valid() const noexcept { return index != static_cast<std::size_t>(-1); }
};

/// Reverse-mode autodiff over a recorded sequence of layer-level operations.
///
/// Values are appended in execution order; backward() walks the records in
/// reverse and accumulates gradients into every node that requires one.
/// Nodes that do not depend on a `parameter()` leaf never receive gradient.
template <typename T>
class Tape {
 public:
  using TensorT = BasicTensor<T>;

  Var constant(TensorT value) { return push(std::move(value), false, {}, nullptr); }
  Var parameter(TensorT value) { return push(std::move(value), true, {}, nullptr); }

  Var conv2d(Var x, Var kernel, Var bias) {
    TensorT out = ops::conv2d(value(x), value(kernel), value(bias));
    return push(std::move(out), any_grad({x, kernel, bias}), {x, kernel, bias},
                [](Tape& t, std::size_t self) {
                  const auto& n = t.nodes_[self];
                  const Var x = n.inputs[0], k = n.inputs[1], b = n.inputs[2];
                  TensorT gx, gk, gb;
                  ops::conv2d_backward(t.value(x), t.value(k), n.grad,
                                       t.needs(x) ? &gx : nullptr, t.needs(k) ? &gk : nullptr,
                                       t.needs(b) ? &gb : nullptr);
                  t.accumulate(x, gx);
                  t.accumulate(k, gk);
                  t.accumulate(b, gb);
                });
  }

  Var dense(Var x, Var weights, Var bias) {
    TensorT out = ops::dense(value(x), value(weights), value(bias));
    return push(std::move(out), any_grad({x, weights, bias}), {x, weights, bias},
                [](Tape& t, std::size_t self) {
                  const auto& n = t.nodes_[self];
                  const Var x = n.inputs[0], w = n.inputs[1], b = n.inputs[2];
                  TensorT gx, gw, gb;
                  ops::dense_backward(t.value(x), t.value(w), n.grad, t.needs(x) ? &gx : nullptr,
                                      t.needs(w) ? &gw : nullptr, t.needs(b) ? &gb : nullptr);
                  t.accumulate(x, gx);
                  t.accumulate(w, gw);
                  t.accumulate(b, gb);
                });
  }

  Var leaky_relu(Var x, T slope) {
    TensorT out = ops::leaky_relu(value(x), slope);
    return push(std::move(out), any_grad({x}), {x}, [slope](Tape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      t.accumulate(n.inputs[0], ops::leaky_relu_backward(t.value(n.inputs[0]), n.grad, slope));
    });
  }

  Var sigmoid(Var x) {
    TensorT out = ops::sigmoid(value(x));
    return push(std::move(out), any_grad({x}), {x}, [](Tape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      t.accumulate(n.inputs[0], ops::sigmoid_backward(n.value, n.grad));
    });
  }

  Var add(Var a, Var b) {
    TensorT out = ops::add(value(a), value(b));
    return push(std::move(out), any_grad({a, b}), {a, b}, [](Tape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      t.accumulate(n.inputs[0], n.grad);
      t.accumulate(n.inputs[1], n.grad);
    });
  }

  Var reshape(Var x, Shape shape) {
    TensorT out = value(x).reshaped(std::move(shape));
    return push(std::move(out), any_grad({x}), {x}, [](Tape& t, std::size_t self) {
      const auto& n = t.nodes_[self];
      t.accumulate(n.inputs[0], n.grad.reshaped(t.value(n.inputs[0]).shape()));
    });
  }

  /// Training-mode batch norm. Batch statistics are written to `stats` so the
  /// caller can fold them into running averages.
  Var batch_norm_train(Var x, Var gamma, Var beta, ops::BatchNormCache<T>* stats = nullptr) {
    auto cache = std::make_shared<ops::BatchNormCache<T>>();
    TensorT out = ops::batch_norm_train(value(x), value(gamma), value(beta), *cache);
    if (stats) *stats = *cache;
    return push(std::move(out), any_grad({x, gamma, beta}), {x, gamma, beta},
                [cache](Tape& t, std::size_t self) {
                  const auto& n = t.nodes_[self];
                  const Var x = n.inputs[0], g = n.inputs[1], b = n.inputs[2];
                  TensorT gx, gg, gb;
                  ops::batch_norm_backward(*cache, t.value(g), n.grad, t.needs(x) ? &gx : nullptr,
                                           t.needs(g) ? &gg : nullptr, t.needs(b) ? &gb : nullptr);
                  t.accumulate(x, gx);
                  t.accumulate(g, gg);
                  t.accumulate(b, gb);
                });
  }

  /// Inference-mode batch norm; running statistics are constants.
  Var batch_norm_infer(Var x, Var gamma, Var beta, std::vector<T> running_mean,
                       std::vector<T> running_var) {
    auto mean = std::make_shared<std::vector<T>>(std::move(running_mean));
    auto var = std::make_shared<std::vector<T>>(std::move(running_var));
    TensorT out = ops::batch_norm_infer<T>(value(x), value(gamma).values(), value(beta).values(),
                                           *mean, *var);
    return push(std::move(out), any_grad({x, gamma, beta}), {x, gamma, beta},
                [mean, var](Tape& t, std::size_t self) {
                  const auto& n = t.nodes_[self];
                  const TensorT& in = t.value(n.inputs[0]);
                  const TensorT& gamma = t.value(n.inputs[1]);
                  const int batch = in.dim(0), channels = in.dim(1);
                  const std::size_t plane = in.size() / (static_cast<std::size_t>(batch) * channels);
                  TensorT gx(in.shape()), gg(Shape{channels}), gb(Shape{channels});
                  for (int c = 0; c < channels; ++c) {
                    const T inv_std =
                        T(1) / std::sqrt((*var)[c] + static_cast<T>(ops::kBatchNormEpsilon));
                    for (int b = 0; b < batch; ++b) {
                      const std::size_t off = (static_cast<std::size_t>(b) * channels + c) * plane;
                      for (std::size_t i = 0; i < plane; ++i) {
                        const T g = n.grad[off + i];
                        gx[off + i] = g * gamma[c] * inv_std;
                        gg[c] += g * (in[off + i] - (*mean)[c]) * inv_std;
                        gb[c] += g;
                      }
                    }
                  }
                  t.accumulate(n.inputs[0], gx);
                  t.accumulate(n.inputs[1], gg);
                  t.accumulate(n.inputs[2], gb);
                });
  }

  /// Scalar mean-squared error; the result is a [1] tensor.
  Var mse(Var pred, Var target) {
    TensorT out = TensorT::scalar(ops::mse_loss(value(pred), value(target)));
    return push(std::move(out), any_grad({pred, target}), {pred, target},
                [](Tape& t, std::size_t self) {
                  const auto& n = t.nodes_[self];
                  const Var p = n.inputs[0], y = n.inputs[1];
                  TensorT gp = ops::mse_loss_backward(t.value(p), t.value(y), n.grad[0]);
                  if (t.needs(y)) {
                    TensorT gy = gp;
                    for (auto& v : gy.values()) v = -v;
                    t.accumulate(y, gy);
                  }
                  t.accumulate(p, gp);
                });
  }

  const TensorT& value(Var v) const { return node(v).value; }

  /// Gradient of the last backward() root w.r.t. `v`; all zeros if `v` was
  /// not on the path to the loss.
  TensorT grad(Var v) const {
    const auto& n = node(v);
    if (n.grad.empty()) return TensorT(n.value.shape());
    return n.grad;
  }

  /// Propagates d(loss)/d(node) for every recorded node. `loss` must be a
  /// scalar recorded on this tape.
  void backward(Var loss) {
    if (nodes_.empty() || !loss.valid() || loss.index >= nodes_.size()) {
      fail(ErrorKind::kInvariant, "backward called without a recorded forward pass");
    }
    if (nodes_[loss.index].value.size() != 1) {
      fail(ErrorKind::kShape, "backward requires a scalar loss");
    }
    for (auto& n : nodes_) n.grad = TensorT();
    nodes_[loss.index].grad = TensorT::scalar(T(1));
    for (std::size_t i = loss.index + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      n.backward(*this, i);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  struct Node {
    TensorT value;
    TensorT grad;
    bool requires_grad = false;
    std::vector<Var> inputs;
    BackwardFn backward;
  };

  const Node& node(Var v) const {
    if (!v.valid() || v.index >= nodes_.size()) fail(ErrorKind::kInvariant, "unknown tape variable");
    return nodes_[v.index];
  }

  bool needs(Var v) const { return nodes_[v.index].requires_grad; }

  bool any_grad(std::initializer_list<Var> vars) const {
    for (Var v : vars) {
      if (node(v).requires_grad) return true;
    }
    return false;
  }

  void accumulate(Var v, const TensorT& g) {
    auto& n = nodes_[v.index];
    if (!n.requires_grad || g.empty()) return;
    if (n.grad.empty()) {
      n.grad = g;
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
    }
  }

  Var push(TensorT value, bool requires_grad, std::vector<Var> inputs, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), TensorT(), requires_grad, std::move(inputs),
                          std::move(fn)});
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

}  // namespace csic
