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

#include "eqgan/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace eqgan::nn {

void Node::accumulate(const Tensor& g) {
  if (grad.empty() && value.numel() > 0) {
    grad = g;
    return;
  }
  grad += g;
}

Tensor& Node::grad_buffer() {
  if (grad.empty() || grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var Var::constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Var::parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

void backward(const std::vector<std::pair<Var, Tensor>>& seeds) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, std::size_t>> stack;
  for (const auto& [root, seed] : seeds) {
    if (!root.requires_grad()) continue;
    if (seed.shape() != root.shape()) {
      throw ShapeError("backward seed " + to_string(seed.shape()) + " does not match root " +
                       to_string(root.shape()));
    }
    root.node().accumulate(seed);
    if (visited.insert(&root.node()).second) stack.emplace_back(&root.node(), 0);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        Node* child = node->inputs[next++].get();
        if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  // Interior nodes release their gradients; leaves keep them.
  for (Node* node : order) {
    if (node->backward) node->grad = Tensor();
  }
}

namespace {

bool any_requires_grad(std::initializer_list<const Var*> vars) {
  for (const Var* v : vars) {
    if (v && *v && v->requires_grad()) return true;
  }
  return false;
}

Var make_result(Tensor value, std::vector<std::shared_ptr<Node>> inputs, std::function<void(Node&)> fn,
                bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (requires_grad) {
    n->requires_grad = true;
    n->inputs = std::move(inputs);
    n->backward = std::move(fn);
  }
  return Var(std::move(n));
}

struct ConvGeometry {
  std::int64_t channels, height, width;
  int kernel, stride, padding;
  std::int64_t out_h() const { return (height + 2 * padding - kernel) / stride + 1; }
  std::int64_t out_w() const { return (width + 2 * padding - kernel) / stride + 1; }
  std::int64_t col_rows() const { return channels * kernel * kernel; }
  std::int64_t col_cols() const { return out_h() * out_w(); }
};

void im2col(const double* image, const ConvGeometry& g, double* cols) {
  const auto oh = g.out_h(), ow = g.out_w();
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        double* dst = cols + ((c * g.kernel + ky) * g.kernel + kx) * oh * ow;
        for (std::int64_t y = 0; y < oh; ++y) {
          const std::int64_t iy = y * g.stride - g.padding + ky;
          for (std::int64_t x = 0; x < ow; ++x) {
            const std::int64_t ix = x * g.stride - g.padding + kx;
            dst[y * ow + x] = (iy >= 0 && iy < g.height && ix >= 0 && ix < g.width)
                                  ? image[(c * g.height + iy) * g.width + ix]
                                  : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* image) {
  const auto oh = g.out_h(), ow = g.out_w();
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        const double* src = cols + ((c * g.kernel + ky) * g.kernel + kx) * oh * ow;
        for (std::int64_t y = 0; y < oh; ++y) {
          const std::int64_t iy = y * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          for (std::int64_t x = 0; x < ow; ++x) {
            const std::int64_t ix = x * g.stride - g.padding + kx;
            if (ix >= 0 && ix < g.width) image[(c * g.height + iy) * g.width + ix] += src[y * ow + x];
          }
        }
      }
    }
  }
}

void require_rank(const Var& v, std::size_t rank, const char* what) {
  if (v.value().rank() != rank) {
    throw ShapeError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                     to_string(v.shape()));
  }
}

}  // namespace

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const std::int64_t batch = xv.rows();
  const std::int64_t in = xv.row_size();
  if (wv.rank() != 2 || wv.dim(1) != in) {
    throw ShapeError("linear: input " + to_string(xv.shape()) + " incompatible with weight " +
                     to_string(wv.shape()));
  }
  const std::int64_t out = wv.dim(0);
  Tensor y({batch, out});
  auto ym = y.matrix(batch, out);
  ym.noalias() = xv.matrix(batch, in) * wv.matrix(out, in).transpose();
  if (bias) ym.rowwise() += bias.value().matrix(1, out).row(0);

  const bool rg = any_requires_grad({&x, &weight, &bias});
  std::vector<std::shared_ptr<Node>> inputs{x.ptr(), weight.ptr()};
  if (bias) inputs.push_back(bias.ptr());
  return make_result(
      std::move(y), std::move(inputs),
      [batch, in, out](Node& self) {
        auto gy = self.grad.matrix(batch, out);
        Node& xn = *self.inputs[0];
        Node& wn = *self.inputs[1];
        if (xn.requires_grad) {
          xn.grad_buffer().matrix(batch, in).noalias() += gy * wn.value.matrix(out, in);
        }
        if (wn.requires_grad) {
          wn.grad_buffer().matrix(out, in).noalias() += gy.transpose() * xn.value.matrix(batch, in);
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          self.inputs[2]->grad_buffer().matrix(1, out) += gy.colwise().sum();
        }
      },
      rg);
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding) {
  require_rank(x, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (wv.dim(1) != xv.dim(1) || wv.dim(2) != wv.dim(3)) {
    throw ShapeError("conv2d: input " + to_string(xv.shape()) + " incompatible with weight " +
                     to_string(wv.shape()));
  }
  const ConvGeometry g{xv.dim(1), xv.dim(2), xv.dim(3), static_cast<int>(wv.dim(2)), stride, padding};
  if (g.out_h() <= 0 || g.out_w() <= 0) {
    throw ShapeError("conv2d: input " + to_string(xv.shape()) + " too small for kernel " +
                     std::to_string(g.kernel));
  }
  const std::int64_t batch = xv.dim(0), out_c = wv.dim(0);
  const std::int64_t in_size = g.channels * g.height * g.width;
  const std::int64_t out_size = out_c * g.col_cols();
  Tensor y({batch, out_c, g.out_h(), g.out_w()});
  RowMatrix cols(g.col_rows(), g.col_cols());
  const auto wm = wv.matrix(out_c, g.col_rows());
  for (std::int64_t b = 0; b < batch; ++b) {
    im2col(xv.data().data() + b * in_size, g, cols.data());
    MatrixMap yb(y.data().data() + b * out_size, out_c, g.col_cols());
    yb.noalias() = wm * cols;
    if (bias) yb.colwise() += bias.value().matrix(out_c, 1).col(0);
  }

  const bool rg = any_requires_grad({&x, &weight, &bias});
  std::vector<std::shared_ptr<Node>> inputs{x.ptr(), weight.ptr()};
  if (bias) inputs.push_back(bias.ptr());
  return make_result(
      std::move(y), std::move(inputs),
      [g, batch, out_c, in_size, out_size](Node& self) {
        Node& xn = *self.inputs[0];
        Node& wn = *self.inputs[1];
        Node* bn = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
        RowMatrix cols(g.col_rows(), g.col_cols());
        RowMatrix dcols(g.col_rows(), g.col_cols());
        const auto wm = wn.value.matrix(out_c, g.col_rows());
        for (std::int64_t b = 0; b < batch; ++b) {
          ConstMatrixMap gy(self.grad.data().data() + b * out_size, out_c, g.col_cols());
          if (wn.requires_grad) {
            im2col(xn.value.data().data() + b * in_size, g, cols.data());
            wn.grad_buffer().matrix(out_c, g.col_rows()).noalias() += gy * cols.transpose();
          }
          if (bn && bn->requires_grad) bn->grad_buffer().matrix(out_c, 1) += gy.rowwise().sum();
          if (xn.requires_grad) {
            dcols.noalias() = wm.transpose() * gy;
            col2im_add(dcols.data(), g, xn.grad_buffer().data().data() + b * in_size);
          }
        }
      },
      rg);
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding) {
  require_rank(x, 4, "conv_transpose2d input");
  require_rank(weight, 4, "conv_transpose2d weight");
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (wv.dim(0) != xv.dim(1) || wv.dim(2) != wv.dim(3)) {
    throw ShapeError("conv_transpose2d: input " + to_string(xv.shape()) + " incompatible with weight " +
                     to_string(wv.shape()));
  }
  const std::int64_t batch = xv.dim(0), in_c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::int64_t out_c = wv.dim(1);
  const int k = static_cast<int>(wv.dim(2));
  const std::int64_t oh = (h - 1) * stride - 2 * padding + k;
  const std::int64_t ow = (w - 1) * stride - 2 * padding + k;
  if (oh <= 0 || ow <= 0) {
    throw ShapeError("conv_transpose2d: non-positive output size for input " + to_string(xv.shape()));
  }
  // The transpose is the adjoint of a convolution from (out_c, oh, ow) to (in_c, h, w).
  const ConvGeometry g{out_c, oh, ow, k, stride, padding};
  if (g.out_h() != h || g.out_w() != w) throw ShapeError("conv_transpose2d: inconsistent geometry");
  const std::int64_t in_size = in_c * h * w;
  const std::int64_t out_size = out_c * oh * ow;
  Tensor y({batch, out_c, oh, ow});
  RowMatrix cols(g.col_rows(), g.col_cols());
  const auto wm = wv.matrix(in_c, g.col_rows());
  for (std::int64_t b = 0; b < batch; ++b) {
    ConstMatrixMap xb(xv.data().data() + b * in_size, in_c, h * w);
    cols.noalias() = wm.transpose() * xb;
    col2im_add(cols.data(), g, y.data().data() + b * out_size);
    if (bias) {
      MatrixMap yb(y.data().data() + b * out_size, out_c, oh * ow);
      yb.colwise() += bias.value().matrix(out_c, 1).col(0);
    }
  }

  const bool rg = any_requires_grad({&x, &weight, &bias});
  std::vector<std::shared_ptr<Node>> inputs{x.ptr(), weight.ptr()};
  if (bias) inputs.push_back(bias.ptr());
  return make_result(
      std::move(y), std::move(inputs),
      [g, batch, in_c, h, w, out_c, oh, ow, in_size, out_size](Node& self) {
        Node& xn = *self.inputs[0];
        Node& wn = *self.inputs[1];
        Node* bn = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
        RowMatrix dcols(g.col_rows(), g.col_cols());
        const auto wm = wn.value.matrix(in_c, g.col_rows());
        for (std::int64_t b = 0; b < batch; ++b) {
          const double* gy = self.grad.data().data() + b * out_size;
          im2col(gy, g, dcols.data());
          if (xn.requires_grad) {
            MatrixMap dx(xn.grad_buffer().data().data() + b * in_size, in_c, h * w);
            dx.noalias() += wm * dcols;
          }
          if (wn.requires_grad) {
            ConstMatrixMap xb(xn.value.data().data() + b * in_size, in_c, h * w);
            wn.grad_buffer().matrix(in_c, g.col_rows()).noalias() += xb * dcols.transpose();
          }
          if (bn && bn->requires_grad) {
            ConstMatrixMap gyb(gy, out_c, oh * ow);
            bn->grad_buffer().matrix(out_c, 1) += gyb.rowwise().sum();
          }
        }
      },
      rg);
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormStats& stats, bool training) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 && xv.rank() != 4) throw ShapeError("batch_norm expects rank 2 or 4, got " + to_string(xv.shape()));
  const std::int64_t batch = xv.dim(0), channels = xv.dim(1);
  const std::int64_t spatial = xv.rank() == 4 ? xv.dim(2) * xv.dim(3) : 1;
  if (gamma.value().numel() != channels || beta.value().numel() != channels) {
    throw ShapeError("batch_norm: affine parameters do not match channels of " + to_string(xv.shape()));
  }
  const double count = static_cast<double>(batch * spatial);
  auto at = [channels, spatial](std::int64_t b, std::int64_t c, std::int64_t s) {
    return (b * channels + c) * spatial + s;
  };

  std::vector<double> mean(static_cast<std::size_t>(channels)), invstd(static_cast<std::size_t>(channels));
  for (std::int64_t c = 0; c < channels; ++c) {
    double m, var;
    if (training) {
      double sum = 0.0;
      for (std::int64_t b = 0; b < batch; ++b)
        for (std::int64_t s = 0; s < spatial; ++s) sum += xv[at(b, c, s)];
      m = sum / count;
      double sq = 0.0;
      for (std::int64_t b = 0; b < batch; ++b)
        for (std::int64_t s = 0; s < spatial; ++s) {
          const double d = xv[at(b, c, s)] - m;
          sq += d * d;
        }
      var = sq / count;
      const double unbiased = count > 1 ? sq / (count - 1) : var;
      stats.running_mean[c] = (1 - stats.momentum) * stats.running_mean[c] + stats.momentum * m;
      stats.running_var[c] = (1 - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
    } else {
      m = stats.running_mean[c];
      var = stats.running_var[c];
    }
    mean[static_cast<std::size_t>(c)] = m;
    invstd[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var + stats.eps);
  }

  Tensor xhat(xv.shape());
  Tensor y(xv.shape());
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t c = 0; c < channels; ++c)
      for (std::int64_t s = 0; s < spatial; ++s) {
        const auto i = at(b, c, s);
        xhat[i] = (xv[i] - mean[static_cast<std::size_t>(c)]) * invstd[static_cast<std::size_t>(c)];
        y[i] = gamma.value()[c] * xhat[i] + beta.value()[c];
      }

  const bool rg = any_requires_grad({&x, &gamma, &beta});
  return make_result(
      std::move(y), {x.ptr(), gamma.ptr(), beta.ptr()},
      [xhat = std::move(xhat), invstd = std::move(invstd), batch, channels, spatial, count, training,
       at](Node& self) {
        Node& xn = *self.inputs[0];
        Node& gn = *self.inputs[1];
        Node& bn = *self.inputs[2];
        const Tensor& gy = self.grad;
        for (std::int64_t c = 0; c < channels; ++c) {
          double sum_gy = 0.0, sum_gy_xhat = 0.0;
          for (std::int64_t b = 0; b < batch; ++b)
            for (std::int64_t s = 0; s < spatial; ++s) {
              const auto i = at(b, c, s);
              sum_gy += gy[i];
              sum_gy_xhat += gy[i] * xhat[i];
            }
          if (gn.requires_grad) gn.grad_buffer()[c] += sum_gy_xhat;
          if (bn.requires_grad) bn.grad_buffer()[c] += sum_gy;
          if (!xn.requires_grad) continue;
          const double g = gn.value[c];
          const double is = invstd[static_cast<std::size_t>(c)];
          Tensor& dx = xn.grad_buffer();
          for (std::int64_t b = 0; b < batch; ++b)
            for (std::int64_t s = 0; s < spatial; ++s) {
              const auto i = at(b, c, s);
              if (training) {
                dx[i] += g * is * (gy[i] - sum_gy / count - xhat[i] * sum_gy_xhat / count);
              } else {
                dx[i] += g * is * gy[i];
              }
            }
        }
      },
      rg);
}

void power_iteration(const Tensor& weight, SpectralState& state, int iterations) {
  const std::int64_t rows = weight.dim(0);
  const std::int64_t cols = weight.numel() / rows;
  const auto w = weight.matrix(rows, cols);
  auto u = state.u.matrix(rows, 1);
  auto v = state.v.matrix(cols, 1);
  for (int it = 0; it < iterations; ++it) {
    v.noalias() = w.transpose() * u;
    v /= std::max(v.norm(), 1e-12);
    u.noalias() = w * v;
    u /= std::max(u.norm(), 1e-12);
  }
}

double spectral_sigma(const Tensor& weight, const SpectralState& state) {
  const std::int64_t rows = weight.dim(0);
  const std::int64_t cols = weight.numel() / rows;
  return (state.u.matrix(rows, 1).transpose() * weight.matrix(rows, cols) * state.v.matrix(cols, 1))(0, 0);
}

Var spectral_normalize(const Var& weight, SpectralState& state, bool update) {
  const Tensor& wv = weight.value();
  const std::int64_t rows = wv.dim(0);
  const std::int64_t cols = wv.numel() / rows;
  if (state.u.numel() != rows || state.v.numel() != cols) {
    throw ShapeError("spectral_normalize: power-iteration state does not match weight " + to_string(wv.shape()));
  }
  if (update) power_iteration(wv, state, 1);
  const double sigma = std::max(spectral_sigma(wv, state), 1e-12);
  Tensor out(wv.shape());
  for (std::int64_t i = 0; i < wv.numel(); ++i) out[i] = wv[i] / sigma;
  Tensor u = state.u, v = state.v;
  return make_result(
      std::move(out), {weight.ptr()},
      [sigma, rows, cols, u = std::move(u), v = std::move(v)](Node& self) {
        Node& wn = *self.inputs[0];
        const auto g = self.grad.matrix(rows, cols);
        const auto wsn = self.value.matrix(rows, cols);
        const double inner = (g.array() * wsn.array()).sum();
        wn.grad_buffer().matrix(rows, cols) +=
            (g - inner * u.matrix(rows, 1) * v.matrix(cols, 1).transpose()) / sigma;
      },
      weight.requires_grad());
}

namespace {

template <class F, class D>
Var elementwise(const Var& x, F f, D dfdx_from_out_and_in) {
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::int64_t i = 0; i < xv.numel(); ++i) y[i] = f(xv[i]);
  return make_result(
      std::move(y), {x.ptr()},
      [dfdx_from_out_and_in](Node& self) {
        Node& xn = *self.inputs[0];
        Tensor& dx = xn.grad_buffer();
        for (std::int64_t i = 0; i < self.value.numel(); ++i) {
          dx[i] += self.grad[i] * dfdx_from_out_and_in(self.value[i], xn.value[i]);
        }
      },
      x.requires_grad());
}

}  // namespace

Var relu(const Var& x) {
  return elementwise(
      x, [](double v) { return v > 0 ? v : 0.0; }, [](double, double in) { return in > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& x, double slope) {
  return elementwise(
      x, [slope](double v) { return v > 0 ? v : slope * v; },
      [slope](double, double in) { return in > 0 ? 1.0 : slope; });
}

Var tanh(const Var& x) {
  return elementwise(
      x, [](double v) { return std::tanh(v); }, [](double out, double) { return 1.0 - out * out; });
}

Var reshape(const Var& x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return make_result(
      std::move(y), {x.ptr()},
      [](Node& self) {
        Node& xn = *self.inputs[0];
        xn.grad_buffer() += self.grad.reshaped(xn.value.shape());
      },
      x.requires_grad());
}

Var concat(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() < 2 || av.rank() != bv.rank() || av.dim(0) != bv.dim(0)) {
    throw ShapeError("concat: incompatible shapes " + to_string(av.shape()) + " and " + to_string(bv.shape()));
  }
  for (std::size_t d = 2; d < av.rank(); ++d) {
    if (av.dim(d) != bv.dim(d)) {
      throw ShapeError("concat: incompatible shapes " + to_string(av.shape()) + " and " + to_string(bv.shape()));
    }
  }
  Shape shape = av.shape();
  shape[1] = av.dim(1) + bv.dim(1);
  const std::int64_t batch = av.dim(0);
  const std::int64_t na = av.row_size(), nb = bv.row_size();
  Tensor y(shape);
  for (std::int64_t r = 0; r < batch; ++r) {
    auto dst = y.row(r);
    auto ra = av.row(r);
    auto rb = bv.row(r);
    std::copy(ra.begin(), ra.end(), dst.begin());
    std::copy(rb.begin(), rb.end(), dst.begin() + na);
  }
  return make_result(
      std::move(y), {a.ptr(), b.ptr()},
      [batch, na, nb](Node& self) {
        Node& an = *self.inputs[0];
        Node& bn = *self.inputs[1];
        for (std::int64_t r = 0; r < batch; ++r) {
          auto g = std::as_const(self.grad).row(r);
          if (an.requires_grad) {
            auto da = an.grad_buffer().row(r);
            for (std::int64_t i = 0; i < na; ++i) da[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(i)];
          }
          if (bn.requires_grad) {
            auto db = bn.grad_buffer().row(r);
            for (std::int64_t i = 0; i < nb; ++i) {
              db[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(na + i)];
            }
          }
        }
      },
      any_requires_grad({&a, &b}));
}

}  // namespace eqgan::nn
