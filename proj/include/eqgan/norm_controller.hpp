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

#ifndef EQGAN_NORM_CONTROLLER_HPP
#define EQGAN_NORM_CONTROLLER_HPP

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

namespace eqgan {

struct NormStatistics {
  double mean = 0.0;
  double variance = 0.0;
};

// Monte Carlo mean and variance of ||z|| for z ~ N(0, I_latent_dim). Requires n_mc >= 10,000.
NormStatistics prior_norm_statistics(int latent_dim, std::int64_t n_mc, std::uint64_t seed);

// Mean and (population) variance of a set of norms.
NormStatistics norm_statistics(std::span<const double> norms);

struct ControllerHistoryEntry {
  int epoch;
  double lambda_norm;
  double empirical_var;
};

// Auto-tuning state for the weight of the encoder prior-norm penalty.
// After warmup, lambda is scaled by exp(step_rate * (empirical_var / prior_var - 1))
// and clipped to [lambda_min, lambda_max].
struct ControllerState {
  double lambda_norm = 0.01;
  int warmup_epochs = 200;
  double prior_norm_var = 0.5;
  double step_rate = 0.1;
  double lambda_min = 1e-3;
  double lambda_max = 10.0;
  std::vector<ControllerHistoryEntry> history;

  void validate() const;
};

ControllerState update_lambda(const ControllerState& state, int epoch, double empirical_norm_var);

// CSV columns: epoch,lambda_norm,empirical_var,prior_var
void write_controller_history(std::ostream& os, const ControllerState& state);

}  // namespace eqgan

#endif  // EQGAN_NORM_CONTROLLER_HPP
