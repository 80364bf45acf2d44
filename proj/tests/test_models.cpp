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
#include <sstream>

#include "eqgan/models.hpp"
#include "eqgan/optimizer.hpp"
#include "oracles.hpp"

using namespace eqgan;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

double largest_singular_value(const Tensor& w) {
  const auto rows = w.dim(0);
  const Eigen::MatrixXd m = w.matrix(rows, w.numel() / rows);
  const Eigen::MatrixXd gram = m.rows() <= m.cols() ? Eigen::MatrixXd(m * m.transpose()) : Eigen::MatrixXd(m.transpose() * m);
  return std::sqrt(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff());
}

// Compares analytic parameter gradients of sum(weights * output) with central differences.
// Probes whose one-sided differences disagree straddle an activation kink and are skipped.
template <typename Forward>
void check_parameter_gradients(Network& net, Forward forward, int probes, double tol, std::uint64_t seed,
                               double step = 1e-5) {
  Rng rng(seed);
  const Tensor out0 = forward().value();
  const Tensor weights = random_tensor(out0.shape(), rng);
  auto scalar = [&] {
    const Tensor out = forward().value();
    double s = 0.0;
    for (std::int64_t i = 0; i < out.numel(); ++i) s += weights[i] * out[i];
    return s;
  };
  net.zero_grad();
  nn::Var out = forward();
  nn::backward(out, weights);
  const double base = scalar();
  auto& params = net.parameters();
  int kinks = 0;
  for (int p = 0; p < probes; ++p) {
    auto& param = params[static_cast<std::size_t>(rng.next_u64() % params.size())];
    const auto idx = static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(param.value().numel()));
    const double analytic = param.grad().empty() ? 0.0 : param.grad()[idx];
    double& slot = param.mutable_value()[idx];
    const double numeric = oracle::central_difference(scalar, slot, step);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    if (std::abs(analytic - numeric) / scale >= tol) {
      const double keep = slot;
      slot = keep + step;
      const double forward_diff = (scalar() - base) / step;
      slot = keep - step;
      const double backward_diff = (base - scalar()) / step;
      slot = keep;
      if (std::abs(forward_diff - backward_diff) / scale >= tol) {
        ++kinks;
        continue;
      }
    }
    INFO("probe " << p << " analytic " << analytic << " numeric " << numeric);
    CHECK(std::abs(analytic - numeric) / scale < tol);
  }
  CHECK(kinks <= probes / 4);
}

}  // namespace

TEST_CASE("conv networks at 32x32 map to the documented shapes") {
  const ModelTriple t = build_triple(conv_spec_set(Resolution::r32, 256, 3), 1);
  ModelTriple m = t;
  Rng rng(3);
  const Tensor x = random_tensor({2, 3, 32, 32}, rng, 0.5);
  const Tensor z = random_tensor({2, 256}, rng);
  CHECK(m.encoder.forward(nn::Var::constant(x), Mode::train).shape() == Shape{2, 256});
  CHECK(m.generator.forward(nn::Var::constant(z), Mode::train).shape() == Shape{2, 3, 32, 32});
}

TEST_CASE("conv networks at 28x28 and 64x64") {
  Rng rng(4);
  {
    ModelTriple m = build_triple(conv_spec_set(Resolution::r28, 32, 1), 1);
    const Tensor x = random_tensor({2, 1, 28, 28}, rng, 0.5);
    const Tensor z = random_tensor({2, 32}, rng);
    CHECK(m.encoder.forward(nn::Var::constant(x), Mode::eval).shape() == Shape{2, 32});
    CHECK(m.generator.forward(nn::Var::constant(z), Mode::eval).shape() == Shape{2, 1, 28, 28});
    const auto logits = forward_joint(m, nn::Var::constant(x), nn::Var::constant(z), Mode::eval);
    CHECK(logits.real.shape() == Shape{2});
  }
  {
    ModelTriple m = build_triple(conv_spec_set(Resolution::r64, 32, 3), 1);
    const Tensor z = random_tensor({1, 32}, rng);
    const Tensor g = m.generator.forward(nn::Var::constant(z), Mode::eval).value();
    CHECK(g.shape() == Shape{1, 3, 64, 64});
    CHECK(m.encoder.forward(nn::Var::constant(g), Mode::eval).shape() == Shape{1, 32});
  }
}

TEST_CASE("same seed gives bit-identical parameters") {
  const auto specs = conv_spec_set(Resolution::r32, 64, 3);
  const ModelTriple a = build_triple(specs, 11), b = build_triple(specs, 11), c = build_triple(specs, 12);
  std::ostringstream sa, sb, sc;
  a.generator.write(sa), a.encoder.write(sa), a.discriminator.write(sa);
  b.generator.write(sb), b.encoder.write(sb), b.discriminator.write(sb);
  c.generator.write(sc), c.encoder.write(sc), c.discriminator.write(sc);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str() != sc.str());
}

TEST_CASE("forward_joint returns one logit per sample") {
  ModelTriple m = build_triple(conv_spec_set(Resolution::r32, 256, 3), 2);
  Rng rng(5);
  for (std::int64_t batch : {128, 1}) {
    const Tensor x = random_tensor({batch, 3, 32, 32}, rng, 0.5);
    const Tensor z = random_tensor({batch, 256}, rng);
    const auto logits = forward_joint(m, nn::Var::constant(x), nn::Var::constant(z), Mode::train);
    CHECK(logits.real.shape() == Shape{batch});
    CHECK(logits.fake.shape() == Shape{batch});
  }
}

TEST_CASE("forward_joint rejects a wrong channel count") {
  ModelTriple m = build_triple(conv_spec_set(Resolution::r32, 16, 3), 2);
  Rng rng(6);
  const Tensor x = random_tensor({2, 1, 32, 32}, rng);
  const Tensor z = random_tensor({2, 16}, rng);
  CHECK_THROWS_AS(forward_joint(m, nn::Var::constant(x), nn::Var::constant(z), Mode::train), ShapeError);
  const Tensor z_bad = random_tensor({2, 15}, rng);
  const Tensor x_ok = random_tensor({2, 3, 32, 32}, rng);
  CHECK_THROWS_AS(forward_joint(m, nn::Var::constant(x_ok), nn::Var::constant(z_bad), Mode::train), ShapeError);
}

TEST_CASE("generator outputs stay inside the tanh range") {
  Rng rng(8);
  for (auto specs : {toy_spec_set({3, 8, 8}, 16, 64), conv_spec_set(Resolution::r32, 32, 3)}) {
    ModelTriple m = build_triple(specs, 3);
    const Tensor z = random_tensor({16, m.latent_dim()}, rng, 3.0);
    for (Mode mode : {Mode::train, Mode::eval}) {
      const Tensor g = m.generator.forward(nn::Var::constant(z), mode).value();
      for (double v : g.data()) REQUIRE(std::abs(v) < 1.0);
    }
  }
}

TEST_CASE("spectrally normalized discriminator weights stay near unit norm after updates") {
  for (auto specs : {toy_spec_set({3, 8, 8}, 16, 64), conv_spec_set(Resolution::r32, 32, 3)}) {
    ModelTriple m = build_triple(specs, 4);
    Adam opt(m.discriminator.parameters(), AdamConfig{});
    Rng rng(9);
    const auto& shape = m.image_shape();
    for (int step = 0; step < 10; ++step) {
      const Tensor x = random_tensor({8, shape[0], shape[1], shape[2]}, rng, 0.5);
      const Tensor z = random_tensor({8, m.latent_dim()}, rng);
      m.discriminator.zero_grad();
      nn::Var logits = m.discriminator.forward(nn::Var::constant(x), nn::Var::constant(z), Mode::train);
      nn::backward(logits, random_tensor(logits.shape(), rng));
      opt.step(opt.config().lr);
      const auto weights = m.discriminator.spectral_weights();
      REQUIRE(!weights.empty());
      for (const auto& w : weights) REQUIRE(largest_singular_value(w) <= 1.05);
    }
  }
}

TEST_CASE("parameter gradients match central differences on toy networks") {
  ModelTriple m = build_triple(toy_spec_set({1, 3, 3}, 4, 8), 5);
  Rng rng(10);
  const Tensor x = random_tensor({3, 1, 3, 3}, rng, 0.5);
  const Tensor z = random_tensor({3, 4}, rng);
  // Eval mode keeps batch-norm statistics and spectral-norm vectors fixed.
  SUBCASE("generator") {
    check_parameter_gradients(m.generator, [&] { return m.generator.forward(nn::Var::constant(z), Mode::eval); }, 20,
                              1e-3, 1);
  }
  SUBCASE("encoder") {
    check_parameter_gradients(m.encoder, [&] { return m.encoder.forward(nn::Var::constant(x), Mode::eval); }, 20, 1e-3,
                              2);
  }
  SUBCASE("discriminator") {
    check_parameter_gradients(
        m.discriminator,
        [&] { return m.discriminator.forward(nn::Var::constant(x), nn::Var::constant(z), Mode::eval); }, 20, 1e-3, 3);
  }
}

TEST_CASE("parameter gradients match central differences on small conv networks") {
  ModelTriple m = build_triple(conv_spec_set(Resolution::r28, 4, 1), 6);
  Rng rng(11);
  const Tensor x = random_tensor({2, 1, 28, 28}, rng, 0.5);
  const Tensor z = random_tensor({2, 4}, rng);
  // Wide layers put some ReLU inputs within 1e-5 of the kink; a smaller step avoids crossing it.
  check_parameter_gradients(m.generator, [&] { return m.generator.forward(nn::Var::constant(z), Mode::eval); }, 20,
                            1e-3, 4, 1e-7);
  check_parameter_gradients(m.encoder, [&] { return m.encoder.forward(nn::Var::constant(x), Mode::eval); }, 20, 1e-3,
                            5, 1e-7);
}

TEST_CASE("network serialization round-trips bit-exactly") {
  ModelTriple m = build_triple(toy_spec_set({3, 8, 8}, 16, 32), 7);
  Rng rng(12);
  const Tensor z = random_tensor({4, 16}, rng);
  m.generator.forward(nn::Var::constant(z), Mode::train);  // moves running statistics
  std::stringstream ss;
  m.generator.write(ss);
  Network copy(m.generator.spec(), 99);
  copy.read(ss);
  CHECK(copy.forward(nn::Var::constant(z), Mode::eval).value() ==
        m.generator.forward(nn::Var::constant(z), Mode::eval).value());
  std::stringstream bad;
  m.encoder.write(bad);
  CHECK_THROWS(copy.read(bad));
}

TEST_CASE("network copies are deep") {
  ModelTriple m = build_triple(toy_spec_set({3, 8, 8}, 16, 32), 7);
  Network copy = m.generator;
  copy.parameters()[0].mutable_value()[0] += 1.0;
  CHECK(copy.parameters()[0].value()[0] != m.generator.parameters()[0].value()[0]);
}

TEST_CASE("network specs round-trip through JSON") {
  const auto specs = conv_spec_set(Resolution::r64, 128, 3);
  nlohmann::json j = specs.discriminator;
  CHECK(j.get<NetworkSpec>() == specs.discriminator);
}
