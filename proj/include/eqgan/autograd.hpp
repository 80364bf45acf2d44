/* Copyright 2026 The eqgan Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
        limitations under the License.
==============================================================================*/

#ifndef EQGAN_AUTOGRAD_HPP
#define EQGAN_AUTOGRAD_HPP

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "eqgan/tensor.hpp"

// Minimal reverse-mode differentiation over Tensor values. Graphs are built
// eagerly by the ops below; backward() walks them in reverse topological order.
namespace eqgan::nn {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void accumulate(const Tensor& g);
  Tensor& grad_buffer();  // zero-initialized on first use
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var parameter(Tensor value);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  void zero_grad();

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

  // Same value, cut from the graph.
  Var detach() const { return constant(node_->value); }

 private:
  std::shared_ptr<Node> node_;
};

// Seeds d(objective)/d(root) for every root and propagates to all leaves.
void backward(const std::vector<std::pair<Var, Tensor>>& seeds);
inline void backward(const Var& root, const Tensor& seed) { backward({{root, seed}}); }

// ---- ops ----------------------------------------------------------------

// x: (B, in) (higher ranks are flattened after dim 0); weight: (out, in); bias: (out) or empty.
Var linear(const Var& x, const Var& weight, const Var& bias);

// x: (B, C, H, W); weight: (O, C, k, k); bias: (O) or empty.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding);

// x: (B, C, H, W); weight: (C, O, k, k); output spatial (H-1)*stride - 2*padding + k.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding);

struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Per-channel normalization over batch (and spatial dims for rank 4).
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormStats& stats, bool training);

// Power-iteration state for spectral normalization of a weight viewed as
// (rows, numel/rows).
struct SpectralState {
  Tensor u;  // (rows)
  Tensor v;  // (cols)
};

// Returns weight / sigma, where sigma = u^T W v. When `update` is set, one
// power iteration refreshes (u, v) first. Gradients treat (u, v) as constants.
Var spectral_normalize(const Var& weight, SpectralState& state, bool update);
void power_iteration(const Tensor& weight, SpectralState& state, int iterations);
double spectral_sigma(const Tensor& weight, const SpectralState& state);

Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var tanh(const Var& x);
Var reshape(const Var& x, Shape shape);
// Concatenates along dim 1; all other dims must match.
Var concat(const Var& a, const Var& b);

}  // namespace eqgan::nn

#endif  // EQGAN_AUTOGRAD_HPP
