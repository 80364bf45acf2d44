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

#ifndef EQGAN_LOSSES_HPP
#define EQGAN_LOSSES_HPP

#include <ostream>
#include <span>
#include <string>

#include "eqgan/tensor.hpp"

// Loss terms of the prior-regularized BiGAN objective. Every term returns its
// value together with the analytic gradient with respect to its direct inputs,
// so the trainer can seed backpropagation through the networks.
namespace eqgan::losses {

inline constexpr double kLogClamp = 1e-12;

enum class GeneratorLoss { non_saturating, saturating };

struct AdversarialTerms {
  double l_d = 0.0;
  double l_ge = 0.0;
  // Gradients of l_d / l_ge with respect to the logits.
  Tensor dd_real, dd_fake;
  Tensor dge_real, dge_fake;
};

// l_d  = -mean log s(real) - mean log(1 - s(fake))
// l_ge = -mean log s(fake) - mean log(1 - s(real))   (non-saturating)
//      = -l_d                                         (saturating)
// s is the logistic function; log arguments are clamped at kLogClamp.
AdversarialTerms adversarial_loss(const Tensor& logits_real, const Tensor& logits_fake,
                                  GeneratorLoss form = GeneratorLoss::non_saturating);

struct ValueAndGrad {
  double value = 0.0;
  Tensor grad;  // d value / d input
};

// Batch mean of per-sample mean squared error. Gradient is w.r.t. x_rec.
ValueAndGrad cycle_loss(const Tensor& x, const Tensor& x_rec);

// Batch mean of (||z_i|| - sqrt(latent_dim))^2. Gradient is w.r.t. z_enc.
ValueAndGrad norm_loss(const Tensor& z_enc, int latent_dim);

struct LossBreakdown {
  double l_adv_d = 0.0;
  double l_adv_ge = 0.0;
  double l_cyc = 0.0;
  double l_norm = 0.0;
  double lambda_cyc = 0.0;
  double lambda_norm = 0.0;
  double total_ge = 0.0;
  double total_d = 0.0;
};

struct LossParts {
  double l_adv_d = 0.0;
  double l_adv_ge = 0.0;
  double l_cyc = 0.0;
  double l_norm = 0.0;
};

// total_ge = l_adv_ge + lambda_cyc * l_cyc + lambda_norm * l_norm; total_d = l_adv_d.
LossBreakdown combine(const LossParts& parts, double lambda_cyc, double lambda_norm);

std::string loss_csv_header();
void write_loss_csv_row(std::ostream& os, long step, int epoch, const LossBreakdown& b);

}  // namespace eqgan::losses

#endif  // EQGAN_LOSSES_HPP
