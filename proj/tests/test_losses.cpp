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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "eqgan/losses.hpp"
#include "eqgan/rng.hpp"
#include "oracles.hpp"

using namespace eqgan;
using namespace eqgan::losses;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

}  // namespace

TEST_CASE("adversarial loss at zero logits is 2 log 2") {
  const auto t = adversarial_loss(Tensor({4}, 0.0), Tensor({4}, 0.0));
  CHECK(t.l_d == doctest::Approx(2 * std::numbers::ln2).epsilon(1e-12));
  CHECK(t.l_d == doctest::Approx(1.3863).epsilon(1e-4));
  CHECK(t.l_ge == doctest::Approx(2 * std::numbers::ln2).epsilon(1e-12));
}

TEST_CASE("perfect discriminator drives l_d to zero") {
  const auto t = adversarial_loss(Tensor({2}, 40.0), Tensor({2}, -40.0));
  CHECK(t.l_d < 1e-12);
  const auto clamped = adversarial_loss(Tensor({2}, -1e4), Tensor({2}, 1e4));
  CHECK(std::isfinite(clamped.l_d));
  CHECK(clamped.l_d == doctest::Approx(-2 * std::log(kLogClamp)).epsilon(1e-9));
}

TEST_CASE("single-element batches use the same formula") {
  const double r = 0.7, f = -1.3;
  const auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const auto t = adversarial_loss(Tensor({1}, r), Tensor({1}, f));
  CHECK(t.l_d == doctest::Approx(-std::log(sig(r)) - std::log(1 - sig(f))).epsilon(1e-12));
  CHECK(t.l_ge == doctest::Approx(-std::log(sig(f)) - std::log(1 - sig(r))).epsilon(1e-12));
  const auto s = adversarial_loss(Tensor({1}, r), Tensor({1}, f), GeneratorLoss::saturating);
  CHECK(s.l_ge == doctest::Approx(-s.l_d).epsilon(1e-12));
}

TEST_CASE("cycle loss examples") {
  Rng rng(1);
  const Tensor x = random_tensor({3, 2, 2, 2}, rng);
  CHECK(cycle_loss(x, x).value == 0.0);
  CHECK(cycle_loss(Tensor({5, 3, 4, 4}, 0.0), Tensor({5, 3, 4, 4}, 0.5)).value == doctest::Approx(0.25).epsilon(1e-15));
  // Per-sample MSEs 0 and 0.5.
  Tensor a({2, 2}, 0.0), b({2, 2}, 0.0);
  b[2] = 1.0;  // sample 1: (1^2 + 0^2) / 2 = 0.5
  CHECK(cycle_loss(a, b).value == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("cycle loss is symmetric") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = random_tensor({4, 6}, rng), y = random_tensor({4, 6}, rng);
    CHECK(cycle_loss(x, y).value == doctest::Approx(cycle_loss(y, x).value).epsilon(1e-14));
  }
}

TEST_CASE("norm loss examples") {
  Tensor z({3, 256}, 0.0);
  for (std::int64_t r = 0; r < 3; ++r) z[r * 256] = 16.0;
  CHECK(norm_loss(z, 256).value == 0.0);

  Tensor one({1, 4}, 0.0);
  one[0] = 3.0;
  CHECK(norm_loss(one, 4).value == doctest::Approx(1.0).epsilon(1e-15));

  Tensor two({2, 256}, 0.0);
  two[0] = 16.0;
  two[256 + 7] = 18.0;
  CHECK(norm_loss(two, 256).value == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("norm loss depends only on row norms") {
  Rng rng(3);
  const Tensor z = random_tensor({5, 4}, rng);
  // Random orthogonal matrix via QR.
  Eigen::MatrixXd g(4, 4);
  for (int i = 0; i < 16; ++i) g.data()[i] = rng.normal();
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  Tensor rotated({5, 4});
  rotated.as_matrix() = z.as_matrix() * q;
  CHECK(norm_loss(rotated, 4).value == doctest::Approx(norm_loss(z, 4).value).epsilon(1e-12));
}

TEST_CASE("combine examples") {
  const LossParts parts{.l_adv_d = 0.5, .l_adv_ge = 1.0, .l_cyc = 2.0, .l_norm = 3.0};
  CHECK(combine(parts, 0, 0).total_ge == 1.0);
  CHECK(combine(parts, 8, 0).total_ge == 17.0);
  CHECK(combine(parts, 3, 0.01).total_ge == doctest::Approx(7.03).epsilon(1e-14));
  CHECK(combine(parts, 3, 0.01).total_d == 0.5);
}

TEST_CASE("analytic loss gradients match central differences") {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor real = random_tensor({6}, rng, 2.0), fake = random_tensor({6}, rng, 2.0);
    for (auto form : {GeneratorLoss::non_saturating, GeneratorLoss::saturating}) {
      const auto t = adversarial_loss(real, fake, form);
      for (std::int64_t i = 0; i < 6; ++i) {
        auto l_d = [&] { return adversarial_loss(real, fake, form).l_d; };
        auto l_ge = [&] { return adversarial_loss(real, fake, form).l_ge; };
        CHECK(relative_error(t.dd_real[i], oracle::central_difference(l_d, real[i], 1e-6)) < 1e-4);
        CHECK(relative_error(t.dd_fake[i], oracle::central_difference(l_d, fake[i], 1e-6)) < 1e-4);
        CHECK(relative_error(t.dge_real[i], oracle::central_difference(l_ge, real[i], 1e-6)) < 1e-4);
        CHECK(relative_error(t.dge_fake[i], oracle::central_difference(l_ge, fake[i], 1e-6)) < 1e-4);
      }
    }
    const Tensor x = random_tensor({3, 2, 2}, rng);
    Tensor xr = random_tensor({3, 2, 2}, rng);
    const auto cyc = cycle_loss(x, xr);
    for (std::int64_t i = 0; i < xr.numel(); ++i) {
      auto f = [&] { return cycle_loss(x, xr).value; };
      CHECK(relative_error(cyc.grad[i], oracle::central_difference(f, xr[i], 1e-6)) < 1e-4);
    }
    Tensor z = random_tensor({4, 5}, rng);
    const auto nl = norm_loss(z, 5);
    for (std::int64_t i = 0; i < z.numel(); ++i) {
      auto f = [&] { return norm_loss(z, 5).value; };
      CHECK(relative_error(nl.grad[i], oracle::central_difference(f, z[i], 1e-6)) < 1e-4);
    }
  }
}

TEST_CASE("gradient descent on norm loss reaches the typical-set radius") {
  Rng rng(5);
  Tensor z = random_tensor({32, 16}, rng, 0.3);
  for (int it = 0; it < 2000; ++it) {
    const auto nl = norm_loss(z, 16);
    for (std::int64_t i = 0; i < z.numel(); ++i) z[i] -= 4.0 * nl.grad[i];
  }
  for (std::int64_t r = 0; r < 32; ++r) {
    double sq = 0;
    for (double v : z.row(r)) sq += v * v;
    CHECK(std::abs(std::sqrt(sq) - 4.0) < 1e-3);
  }
}

TEST_CASE("loss CSV row matches the header") {
  std::ostringstream os;
  write_loss_csv_row(os, 5, 1, combine({0.1, 0.2, 0.3, 0.4}, 7, 0.01));
  const auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  CHECK(count(os.str()) == count(loss_csv_header()));
}
