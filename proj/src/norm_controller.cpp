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

#include "eqgan/norm_controller.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <stdexcept>

#include "eqgan/errors.hpp"
#include "eqgan/rng.hpp"

namespace eqgan {

NormStatistics prior_norm_statistics(int latent_dim, std::int64_t n_mc, std::uint64_t seed) {
  if (latent_dim <= 0) throw ConfigError("latent_dim must be positive");
  if (n_mc < 10000) throw ConfigError("prior_norm_statistics needs at least 10,000 Monte Carlo draws");
  Rng rng(seed);
  std::vector<double> norms(static_cast<std::size_t>(n_mc));
  for (auto& n : norms) {
    double sq = 0.0;
    for (int k = 0; k < latent_dim; ++k) {
      const double z = rng.normal();
      sq += z * z;
    }
    n = std::sqrt(sq);
  }
  return norm_statistics(norms);
}

NormStatistics norm_statistics(std::span<const double> norms) {
  NormStatistics s;
  if (norms.empty()) return s;
  for (double n : norms) s.mean += n;
  s.mean /= static_cast<double>(norms.size());
  for (double n : norms) s.variance += (n - s.mean) * (n - s.mean);
  s.variance /= static_cast<double>(norms.size());
  return s;
}

void ControllerState::validate() const {
  if (!(lambda_min > 0) || !(lambda_max >= lambda_min)) throw ConfigError("controller bounds must satisfy 0 < min <= max");
  if (lambda_norm < lambda_min || lambda_norm > lambda_max) {
    throw ConfigError("initial lambda_norm must lie within the controller bounds");
  }
  if (!(prior_norm_var > 0)) throw ConfigError("prior norm variance must be positive");
  if (step_rate < 0) throw ConfigError("controller step rate must be non-negative");
  if (warmup_epochs < 0) throw ConfigError("controller warmup must be non-negative");
}

ControllerState update_lambda(const ControllerState& state, int epoch, double empirical_norm_var) {
  if (!(empirical_norm_var >= 0) || !std::isfinite(empirical_norm_var)) {
    throw std::invalid_argument("empirical norm variance must be finite and non-negative");
  }
  ControllerState next = state;
  if (epoch < state.warmup_epochs) return next;
  const double ratio = empirical_norm_var / state.prior_norm_var;
  next.lambda_norm =
      std::clamp(state.lambda_norm * std::exp(state.step_rate * (ratio - 1.0)), state.lambda_min, state.lambda_max);
  next.history.push_back({epoch, next.lambda_norm, empirical_norm_var});
  return next;
}

void write_controller_history(std::ostream& os, const ControllerState& state) {
  os << "epoch,lambda_norm,empirical_var,prior_var\n" << std::setprecision(17);
  for (const auto& h : state.history) {
    os << h.epoch << ',' << h.lambda_norm << ',' << h.empirical_var << ',' << state.prior_norm_var << '\n';
  }
}

}  // namespace eqgan
