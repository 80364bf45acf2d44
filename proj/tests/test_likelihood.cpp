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
#include <filesystem>
#include <fstream>
#include <numbers>

#include "eqgan/likelihood.hpp"
#include "oracles.hpp"

using namespace eqgan;

namespace {

LinearGaussianParams identity_1d() {
  LinearGaussianParams p;
  p.a = RowMatrix::Identity(1, 1);
  p.b = Eigen::VectorXd::Zero(1);
  p.sigma = 1.0;
  return p;
}

AISConfig ais(double sigma, int temps, int chains, std::uint64_t seed) {
  AISConfig c;
  c.sigma = sigma;
  c.n_temps = temps;
  c.n_chains = chains;
  c.transition.n_steps_per_temp = 3;
  c.seed = seed;
  return c;
}

double oracle_log10(const LinearGaussianParams& p, std::span<const double> x, double sigma) {
  const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  return oracle::linear_gaussian_log_density(v, p.a, p.b, sigma) / std::numbers::ln10;
}

DatasetSplit linear_data(std::int64_t n, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::linear_gaussian;
  spec.n_samples = n;
  spec.image_shape = {1, 2, 3};
  spec.latent_dim = 2;
  spec.sigma = 0.5;
  spec.seed = seed;
  return make_synthetic(spec);
}

DatasetSplit toy_images(std::int64_t n) {
  SyntheticSpec spec;
  spec.n_samples = n;
  spec.image_shape = {1, 4, 4};
  spec.seed = 3;
  return make_synthetic(spec);
}

}  // namespace

TEST_CASE("observation density at the mode") {
  const std::vector<double> x{0.25};
  CHECK(log_obs_density(x, x, 1.0) == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-14));
  CHECK(log_obs_density(x, x, 1.0) == doctest::Approx(-0.9189).epsilon(1e-4));
}

TEST_CASE("observation density with residual 2 sigma^2 d") {
  const double sigma = 0.3;
  const int d = 4;
  const std::vector<double> mean{0.1, -0.2, 0.3, 0.0};
  std::vector<double> x = mean;
  for (auto& v : x) v += std::sqrt(2.0) * sigma;
  const double expected = -0.5 * d * std::log(2 * std::numbers::pi * sigma * sigma) - d;
  CHECK(log_obs_density(x, mean, sigma) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("density at the mode decreases with sigma") {
  const std::vector<double> x{0.1, 0.2, 0.3};
  double last = INFINITY;
  for (double sigma : {0.01, 0.05, 0.1, 0.5, 1.0, 5.0}) {
    const double v = log_obs_density(x, x, sigma);
    CHECK(v < last);
    last = v;
  }
  CHECK_THROWS(log_obs_density(x, x, 0.0));
  CHECK_THROWS(log_obs_density(x, std::vector<double>{0.1}, 1.0));
}

TEST_CASE("observation density through a generator") {
  const auto g = linear_generator(identity_1d(), {1});
  const std::vector<double> x{0.5}, z{0.5};
  CHECK(log_obs_density(x, z, g, 1.0) == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-14));
}

TEST_CASE("AIS recovers the 1-D identity marginal") {
  const auto g = linear_generator(identity_1d(), {1});
  const std::vector<double> x{0.0};
  const auto rec = ais_marginal(x, 1, g, ais(1.0, 200, 64, 1));
  const double expected = -0.5 * std::log(4 * std::numbers::pi) / std::numbers::ln10;
  CHECK(expected == doctest::Approx(-0.5496).epsilon(1e-4));
  CHECK(rec.std_error >= 0.0);
  CHECK(std::abs(rec.log10_marginal - expected) < 3 * rec.std_error + 1e-12);
  CHECK(std::abs(rec.log10_marginal - expected) < 0.01);
  CHECK(rec.sample_index == 0);
  CHECK(rec.config_hash == ais(1.0, 200, 64, 1).hash());
}

TEST_CASE("AIS matches the closed-form linear-Gaussian density") {
  const auto data = linear_data(16, 5);
  REQUIRE(data.linear_gaussian);
  const auto& p = *data.linear_gaussian;
  const auto g = linear_generator(p, data.image_shape);
  for (std::int64_t i = 0; i < 8; ++i) {
    const auto x = data.train.sample(i);
    const auto rec = ais_marginal(x, 2, g, ais(p.sigma, 500, 32, 2), i);
    const double expected = oracle_log10(p, x, p.sigma);
    INFO("sample " << i << " ais " << rec.log10_marginal << " +- " << rec.std_error << " oracle " << expected);
    CHECK(std::abs(rec.log10_marginal - expected) < 3 * rec.std_error);
  }
}

TEST_CASE("two temperatures reduce to importance sampling from the prior") {
  const auto g = linear_generator(identity_1d(), {1});
  const std::vector<double> x{0.7};
  const int chains = 4000;
  const auto config = ais(1.0, 2, chains, 9);
  const auto rec = ais_marginal(x, 1, g, config, 3);

  Rng rng(derive_seed(9, 3));
  std::vector<double> ll(chains);
  for (auto& v : ll) {
    const double z = rng.normal();
    v = -0.5 * std::log(2 * std::numbers::pi) - 0.5 * (x[0] - z) * (x[0] - z);
  }
  const double m = *std::max_element(ll.begin(), ll.end());
  double mean = 0.0;
  for (double v : ll) mean += std::exp(v - m);
  mean /= chains;
  const double direct = (m + std::log(mean)) / std::numbers::ln10;
  CHECK(rec.log10_marginal == doctest::Approx(direct).epsilon(1e-12));

  const double closed = -0.5 * std::log(2 * std::numbers::pi * 2.0) - 0.49 / 4.0;
  CHECK(std::abs(rec.log10_marginal - closed / std::numbers::ln10) < 3 * rec.std_error);
}

TEST_CASE("AIS error shrinks as temperatures increase") {
  const auto data = linear_data(6, 7);
  const auto& p = *data.linear_gaussian;
  const auto g = linear_generator(p, data.image_shape);
  std::vector<double> errors;
  for (int temps : {10, 100, 1000}) {
    double err = 0.0;
    for (std::int64_t i = 0; i < 6; ++i) {
      const auto x = data.train.sample(i);
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        AISConfig c = ais(0.1, temps, 8, seed);
        c.transition.n_steps_per_temp = 1;
        err += std::abs(ais_marginal(x, 2, g, c, i).log10_marginal - oracle_log10(p, x, 0.1));
      }
    }
    errors.push_back(err / 18);
  }
  INFO("mean abs errors " << errors[0] << " " << errors[1] << " " << errors[2]);
  CHECK(errors[1] < errors[0]);
  CHECK(errors[2] < errors[1]);
}

TEST_CASE("ranking survives a ten-fold sigma change") {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::linear_gaussian;
  spec.n_samples = 40;
  spec.image_shape = {1, 4, 4};
  spec.latent_dim = 2;
  spec.seed = 11;
  const auto data = make_synthetic(spec);
  const auto& p = *data.linear_gaussian;
  const auto g = linear_generator(p, data.image_shape);
  // Points on the generator manifold, as reconstructions are.
  Rng rng(12);
  Tensor z({40, 2});
  for (auto& v : z.data()) v = rng.normal();
  const Tensor recon = g(z);
  std::vector<double> narrow, wide;
  for (std::int64_t i = 0; i < 40; ++i) {
    const auto x = recon.row(i);
    AISConfig c = ais(0.2, 1000, 16, 1);
    c.schedule = TempSchedule::sigmoidal;
    narrow.push_back(ais_marginal(x, 2, g, c, i).log10_marginal);
    c.sigma = 2.0;
    wide.push_back(ais_marginal(x, 2, g, c, i).log10_marginal);
  }
  CHECK(narrow != wide);
  CHECK(oracle::kendall_tau(narrow, wide) >= 0.9);
}

TEST_CASE("AIS is deterministic per sample index") {
  const auto g = linear_generator(identity_1d(), {1});
  const std::vector<double> x{0.3};
  const auto c = ais(1.0, 30, 8, 4);
  CHECK(ais_marginal(x, 1, g, c, 5).log10_marginal == ais_marginal(x, 1, g, c, 5).log10_marginal);
  CHECK(ais_marginal(x, 1, g, c, 5).log10_marginal != ais_marginal(x, 1, g, c, 6).log10_marginal);
}

TEST_CASE("AIS configuration validation") {
  AISConfig c;
  CHECK_NOTHROW(c.validate());
  const auto b = c.betas();
  CHECK(b.size() == 1000);
  CHECK(b.front() == 0.0);
  CHECK(b.back() == 1.0);
  CHECK(std::is_sorted(b.begin(), b.end()));
  c.schedule = TempSchedule::sigmoidal;
  const auto s = c.betas();
  CHECK(s.front() == 0.0);
  CHECK(s.back() == 1.0);
  for (std::size_t i = 1; i < s.size(); ++i) REQUIRE(s[i] > s[i - 1]);
  c.n_temps = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.sigma = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.n_chains = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("non-finite log-weights name the temperature index") {
  const BatchGenerator broken = [](const Tensor& z) {
    Tensor x({z.rows(), 1}, std::nan(""));
    return x;
  };
  const std::vector<double> x{0.0};
  CHECK_THROWS_WITH(ais_marginal(x, 1, broken, ais(1.0, 5, 2, 0)), doctest::Contains("temperature index 1"));
}

TEST_CASE("scoring a toy training set") {
  const auto data = toy_images(64);
  ModelTriple triple = build_triple(toy_spec_set(data.image_shape, 4, 16), 1);
  const auto config = ais(0.2, 10, 4, 1);
  const auto result = score_training_set(data.train, triple, config, {.progress_path = {}, .chunk_size = 16});
  REQUIRE(result.complete);
  REQUIRE(result.records.size() == 64);
  for (std::size_t i = 0; i < 64; ++i) {
    CHECK(result.records[i].sample_index == static_cast<std::int64_t>(i));
    CHECK(std::isfinite(result.records[i].log10_marginal));
    CHECK(result.table.scores()[i] == result.records[i].log10_marginal);
  }
  CHECK(result.table.fully_initialized());

  const auto again = score_training_set(data.train, triple, config, {.progress_path = {}, .chunk_size = 16});
  CHECK(again.table == result.table);
}

TEST_CASE("interrupted scoring resumes to the same table") {
  const auto data = toy_images(40);
  ModelTriple triple = build_triple(toy_spec_set(data.image_shape, 4, 16), 2);
  const auto config = ais(0.2, 10, 4, 3);
  const auto dir = std::filesystem::temp_directory_path() / "eqgan_test_likelihood";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto progress = dir / "progress.csv";

  const auto full = score_training_set(data.train, triple, config, {.progress_path = {}, .chunk_size = 8});
  const auto partial = score_training_set(data.train, triple, config, {progress, 8, 2});
  CHECK_FALSE(partial.complete);
  CHECK(partial.records.size() == 16);
  const auto resumed = score_training_set(data.train, triple, config, {progress, 8, -1});
  REQUIRE(resumed.complete);
  CHECK(resumed.table == full.table);

  // A progress file from another configuration is rejected.
  const auto other = ais(0.3, 10, 4, 3);
  CHECK_THROWS(score_training_set(data.train, triple, other, {progress, 8, -1}));
  std::filesystem::remove_all(dir);
}

TEST_CASE("likelihood CSV") {
  const auto dir = std::filesystem::temp_directory_path() / "eqgan_test_likelihood_csv";
  std::filesystem::create_directories(dir);
  const std::vector<LikelihoodRecord> recs{{0, -1.5, 0.1, "h"}, {1, -2.5, 0.2, "h"}};
  write_likelihood_csv(dir / "a.csv", recs);
  write_likelihood_csv(dir / "b.csv", recs, std::vector<double>{30.0, 20.0});
  CHECK_THROWS(write_likelihood_csv(dir / "c.csv", recs, std::vector<double>{30.0}));
  std::ifstream a(dir / "a.csv"), b(dir / "b.csv");
  std::string line;
  std::getline(a, line);
  CHECK(line == "sample_index,log10_marginal,std_error");
  std::getline(b, line);
  CHECK(line == "sample_index,log10_marginal,std_error,psnr");
  std::getline(b, line);
  CHECK(line == "0,-1.5,0.10000000000000001,30");
  std::filesystem::remove_all(dir);
}
