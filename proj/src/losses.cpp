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

#include "eqgan/losses.hpp"

#include <cmath>
#include <iomanip>
#include <stdexcept>

#include "eqgan/errors.hpp"

namespace eqgan::losses {

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// -log(max(s(x), clamp)) and its derivative in x.
struct NegLogSigmoid {
  double value;
  double grad;
};

NegLogSigmoid neg_log_sigmoid(double x) {
  const double s = sigmoid(x);
  if (s <= kLogClamp) return {-std::log(kLogClamp), 0.0};
  return {-std::log(s), s - 1.0};
}

// -log(1 - s(x)) = -log s(-x).
NegLogSigmoid neg_log_one_minus_sigmoid(double x) {
  const auto r = neg_log_sigmoid(-x);
  return {r.value, -r.grad};
}

}  // namespace

AdversarialTerms adversarial_loss(const Tensor& logits_real, const Tensor& logits_fake, GeneratorLoss form) {
  if (logits_real.numel() == 0 || logits_fake.numel() == 0) {
    throw std::invalid_argument("adversarial_loss: empty logit batch");
  }
  if (logits_real.numel() != logits_fake.numel()) {
    throw ShapeError("adversarial_loss: real and fake batches differ in length");
  }
  const auto n = static_cast<double>(logits_real.numel());
  AdversarialTerms t;
  t.dd_real = Tensor(logits_real.shape());
  t.dd_fake = Tensor(logits_fake.shape());
  t.dge_real = Tensor(logits_real.shape());
  t.dge_fake = Tensor(logits_fake.shape());
  for (std::int64_t i = 0; i < logits_real.numel(); ++i) {
    const auto real_pos = neg_log_sigmoid(logits_real[i]);
    const auto fake_neg = neg_log_one_minus_sigmoid(logits_fake[i]);
    t.l_d += (real_pos.value + fake_neg.value) / n;
    t.dd_real[i] = real_pos.grad / n;
    t.dd_fake[i] = fake_neg.grad / n;
    if (form == GeneratorLoss::non_saturating) {
      const auto fake_pos = neg_log_sigmoid(logits_fake[i]);
      const auto real_neg = neg_log_one_minus_sigmoid(logits_real[i]);
      t.l_ge += (fake_pos.value + real_neg.value) / n;
      t.dge_real[i] = real_neg.grad / n;
      t.dge_fake[i] = fake_pos.grad / n;
    } else {
      t.dge_real[i] = -t.dd_real[i];
      t.dge_fake[i] = -t.dd_fake[i];
    }
  }
  if (form == GeneratorLoss::saturating) t.l_ge = -t.l_d;
  return t;
}

ValueAndGrad cycle_loss(const Tensor& x, const Tensor& x_rec) {
  if (x.shape() != x_rec.shape()) {
    throw ShapeError("cycle_loss: x " + to_string(x.shape()) + " vs reconstruction " + to_string(x_rec.shape()));
  }
  ValueAndGrad out{0.0, Tensor(x.shape())};
  if (x.numel() == 0) return out;
  // Mean of per-sample means equals the global mean when all samples have the same size.
  const auto n = static_cast<double>(x.numel());
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double d = x_rec[i] - x[i];
    out.value += d * d / n;
    out.grad[i] = 2.0 * d / n;
  }
  return out;
}

ValueAndGrad norm_loss(const Tensor& z_enc, int latent_dim) {
  if (latent_dim <= 0 || z_enc.row_size() == 0) throw std::invalid_argument("norm_loss: zero-width latent");
  if (z_enc.row_size() != latent_dim) {
    throw ShapeError("norm_loss: latent width " + std::to_string(z_enc.row_size()) + " != latent_dim " +
                     std::to_string(latent_dim));
  }
  ValueAndGrad out{0.0, Tensor(z_enc.shape())};
  const std::int64_t batch = z_enc.rows();
  if (batch == 0) return out;
  const double target = std::sqrt(static_cast<double>(latent_dim));
  for (std::int64_t r = 0; r < batch; ++r) {
    auto row = z_enc.row(r);
    double sq = 0.0;
    for (double v : row) sq += v * v;
    const double norm = std::sqrt(sq);
    const double gap = norm - target;
    out.value += gap * gap / static_cast<double>(batch);
    if (norm > 0) {
      auto g = out.grad.row(r);
      const double scale = 2.0 * gap / (norm * static_cast<double>(batch));
      for (std::size_t i = 0; i < row.size(); ++i) g[i] = scale * row[i];
    }
  }
  return out;
}

LossBreakdown combine(const LossParts& parts, double lambda_cyc, double lambda_norm) {
  if (lambda_cyc < 0 || lambda_norm < 0) throw ConfigError("loss weights must be non-negative");
  LossBreakdown b;
  b.l_adv_d = parts.l_adv_d;
  b.l_adv_ge = parts.l_adv_ge;
  b.l_cyc = parts.l_cyc;
  b.l_norm = parts.l_norm;
  b.lambda_cyc = lambda_cyc;
  b.lambda_norm = lambda_norm;
  b.total_ge = parts.l_adv_ge + lambda_cyc * parts.l_cyc + lambda_norm * parts.l_norm;
  b.total_d = parts.l_adv_d;
  return b;
}

std::string loss_csv_header() {
  return "step,epoch,l_adv_d,l_adv_ge,l_cyc,l_norm,lambda_cyc,lambda_norm,total_ge,total_d";
}

void write_loss_csv_row(std::ostream& os, long step, int epoch, const LossBreakdown& b) {
  const auto prec = os.precision();
  os << std::setprecision(17) << step << ',' << epoch << ',' << b.l_adv_d << ',' << b.l_adv_ge << ',' << b.l_cyc
     << ',' << b.l_norm << ',' << b.lambda_cyc << ',' << b.lambda_norm << ',' << b.total_ge << ',' << b.total_d
     << '\n';
  os.precision(prec);
}

}  // namespace eqgan::losses
