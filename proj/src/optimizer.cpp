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

#include "eqgan/optimizer.hpp"

#include <cmath>
#include <stdexcept>

#include "eqgan/models.hpp"

namespace eqgan {

Adam::Adam(std::vector<nn::Var> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor& g = params_[i].grad();
    if (g.empty()) continue;
    auto w = params_[i].mutable_value().data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    const auto gd = g.data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * gd[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * gd[j] * gd[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
    }
  }
}

void Adam::write(std::ostream& os) const {
  os.write(reinterpret_cast<const char*>(&t_), sizeof t_);
  for (std::size_t i = 0; i < m_.size(); ++i) {
    write_tensor(os, m_[i]);
    write_tensor(os, v_[i]);
  }
}

void Adam::read(std::istream& is) {
  is.read(reinterpret_cast<char*>(&t_), sizeof t_);
  if (!is) throw std::runtime_error("truncated optimizer state");
  for (std::size_t i = 0; i < m_.size(); ++i) {
    Tensor m = read_tensor(is);
    Tensor v = read_tensor(is);
    if (m.shape() != m_[i].shape() || v.shape() != v_[i].shape()) {
      throw ShapeError("optimizer state does not match parameter " + std::to_string(i));
    }
    m_[i] = std::move(m);
    v_[i] = std::move(v);
  }
}

}  // namespace eqgan
