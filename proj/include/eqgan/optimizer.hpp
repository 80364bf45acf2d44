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

#ifndef EQGAN_OPTIMIZER_HPP
#define EQGAN_OPTIMIZER_HPP

#include <cstdint>
#include <istream>
#include <ostream>
#include <vector>

#include "eqgan/autograd.hpp"

namespace eqgan {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over a fixed list of parameters. Parameters without a gradient are skipped.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<nn::Var> params, AdamConfig config);

  void step(double lr);
  void zero_grad();
  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

  void write(std::ostream& os) const;
  void read(std::istream& is);

 private:
  std::vector<nn::Var> params_;
  std::vector<Tensor> m_, v_;
  AdamConfig config_;
  std::int64_t t_ = 0;
};

}  // namespace eqgan

#endif  // EQGAN_OPTIMIZER_HPP
