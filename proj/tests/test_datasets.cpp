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

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "eqgan/datasets.hpp"

namespace fs = std::filesystem;
using namespace eqgan;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("eqgan_test_datasets_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_bytes(const fs::path& p, std::int64_t n, std::uint8_t seed) {
  std::ofstream os(p, std::ios::binary);
  std::vector<char> buf(1 << 20);
  std::int64_t written = 0;
  std::uint8_t v = seed;
  while (written < n) {
    const auto chunk = std::min<std::int64_t>(n - written, static_cast<std::int64_t>(buf.size()));
    for (std::int64_t i = 0; i < chunk; ++i) buf[static_cast<std::size_t>(i)] = static_cast<char>(v += 37);
    os.write(buf.data(), chunk);
    written += chunk;
  }
}

void write_idx(const fs::path& p, std::uint32_t count) {
  std::ofstream os(p, std::ios::binary);
  const std::uint32_t header[] = {0x00000803u, count, 28u, 28u};
  for (std::uint32_t h : header) {
    const char be[] = {char(h >> 24), char(h >> 16), char(h >> 8), char(h)};
    os.write(be, 4);
  }
  os.close();
  std::ofstream app(p, std::ios::binary | std::ios::app);
  std::vector<char> img(784, 7);
  for (std::uint32_t i = 0; i < count; ++i) app.write(img.data(), 784);
}

}  // namespace

TEST_CASE("reference split sizes") {
  CHECK(expected_split_sizes("cifar10").train == 45000);
  CHECK(expected_split_sizes("cifar10").validation == 5000);
  CHECK(expected_split_sizes("fmnist").train == 54000);
  CHECK(expected_split_sizes("fmnist").validation == 6000);
  CHECK(expected_split_sizes("celeba").validation == 20060);
  CHECK(expected_split_sizes("celeba").test == 1999);
  CHECK_THROWS_AS(expected_split_sizes("mnist"), ConfigError);
}

TEST_CASE("cifar10 binary layout gives 45,000 training images") {
  const fs::path root = scratch("cifar");
  fs::create_directories(root / "cifar10");
  for (int b = 1; b <= 5; ++b) write_bytes(root / "cifar10" / ("data_batch_" + std::to_string(b) + ".bin"), 10000 * 3073, b);
  write_bytes(root / "cifar10" / "test_batch.bin", 10000 * 3073, 9);
  const DatasetSplit d = load_dataset("cifar10", root);
  CHECK(d.train.size() == 45000);
  CHECK(d.validation.size() == 5000);
  CHECK(d.test.size() == 10000);
  CHECK(d.image_shape == Shape{3, 32, 32});
  // Label bytes are dropped: the first pixel is byte 1 of the first record.
  std::ifstream is(root / "cifar10" / "data_batch_1.bin", std::ios::binary);
  char rec[2];
  is.read(rec, 2);
  CHECK(d.train.raw(0)[0] == static_cast<std::uint8_t>(rec[1]));
  fs::remove_all(root);
}

TEST_CASE("fmnist idx layout gives 54,000 training images") {
  const fs::path root = scratch("fmnist");
  fs::create_directories(root / "fmnist");
  write_idx(root / "fmnist" / "train-images-idx3-ubyte", 60000);
  write_idx(root / "fmnist" / "t10k-images-idx3-ubyte", 10000);
  const DatasetSplit d = load_dataset("fmnist", root);
  CHECK(d.train.size() == 54000);
  CHECK(d.validation.size() == 6000);
  CHECK(d.image_shape == Shape{1, 28, 28});
  fs::remove_all(root);
}

TEST_CASE("dataset errors name the missing path or the count mismatch") {
  const fs::path root = scratch("errors");
  CHECK_THROWS_WITH_AS(load_dataset("cifar10", root), doctest::Contains("cifar10"), DataError);
  fs::create_directories(root / "fmnist");
  write_idx(root / "fmnist" / "train-images-idx3-ubyte", 10);
  write_idx(root / "fmnist" / "t10k-images-idx3-ubyte", 10000);
  CHECK_THROWS_WITH_AS(load_dataset("fmnist", root), doctest::Contains("expected 60000"), DataError);
  fs::create_directories(root / "celeba" / "img_align_celeba");
  CHECK_THROWS_WITH_AS(load_dataset("celeba", root), doctest::Contains("expected 202599"), DataError);
  fs::remove_all(root);
}

TEST_CASE("center crop and resize") {
  // 1 channel 4x4 ramp, crop 2 -> the central 2x2 block, resized to 2 is the identity.
  std::vector<std::uint8_t> img(16);
  for (int i = 0; i < 16; ++i) img[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i * 10);
  const auto out = center_crop_resize(img, 1, 4, 4, 2, 2);
  CHECK(out == std::vector<std::uint8_t>{50, 60, 90, 100});
  const auto one = center_crop_resize(img, 1, 4, 4, 4, 1);
  CHECK(one[0] == 75);  // bilinear sample at the centre
}

TEST_CASE("synthetic mixture is deterministic and byte-identical") {
  SyntheticSpec s;
  s.n_samples = 512;
  s.image_shape = {3, 8, 8};
  s.seed = 7;
  const DatasetSplit a = make_synthetic(s);
  const DatasetSplit b = make_synthetic(s);
  CHECK(a.train.bytes() == b.train.bytes());
  CHECK(a.test.bytes() == b.test.bytes());
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.train.size() == 512);
  CHECK(a.validation.size() == 128);
  s.seed = 8;
  CHECK(make_synthetic(s).fingerprint() != a.fingerprint());
}

TEST_CASE("synthetic linear-Gaussian exposes its parameters") {
  SyntheticSpec s;
  s.kind = SyntheticKind::linear_gaussian;
  s.n_samples = 100;
  s.latent_dim = 2;
  s.image_shape = {1, 1, 6};
  s.seed = 1;
  const DatasetSplit d = make_synthetic(s);
  REQUIRE(d.linear_gaussian.has_value());
  CHECK(d.linear_gaussian->a.rows() == 6);
  CHECK(d.linear_gaussian->a.cols() == 2);
  CHECK(d.linear_gaussian->b.size() == 6);
  CHECK(d.linear_gaussian->sigma == 0.5);
  CHECK(d.train.size() == 100);
}

TEST_CASE("empty synthetic dataset is rejected") {
  SyntheticSpec s;
  s.n_samples = 0;
  CHECK_THROWS_AS(make_synthetic(s), ConfigError);
}

TEST_CASE("hard subpopulation flags follow the requested fraction") {
  SyntheticSpec s;
  s.n_samples = 4000;
  s.hard_fraction = 0.25;
  const DatasetSplit d = make_synthetic(s);
  REQUIRE(d.train_is_hard.size() == 4000);
  const double share = std::count(d.train_is_hard.begin(), d.train_is_hard.end(), 1) / 4000.0;
  CHECK(share == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("iterating a split twice gives identical batches") {
  SyntheticSpec s;
  s.n_samples = 64;
  const DatasetSplit d = make_synthetic(s);
  std::vector<std::int64_t> idx(64);
  std::iota(idx.begin(), idx.end(), 0);
  CHECK(d.train.batch(idx) == d.train.batch(idx));
  CHECK(d.train.all() == d.train.batch(idx));
}

TEST_CASE("denormalizing recovers the stored 8-bit pixels") {
  for (int pm : {1, 255}) {
    for (int v = 0; v <= pm; ++v) CHECK(denormalize_pixel(normalize_pixel(v, pm), pm) == v);
  }
  SyntheticSpec s;
  s.n_samples = 32;
  const DatasetSplit d = make_synthetic(s);
  for (std::int64_t i = 0; i < d.train.size(); ++i) {
    const auto norm = d.train.sample(i);
    const auto raw = d.train.raw(i);
    for (std::size_t k = 0; k < norm.size(); ++k) REQUIRE(denormalize_pixel(norm[k], 255) == raw[k]);
  }
}

TEST_CASE("synthetic container round-trip") {
  const fs::path dir = scratch("container");
  SyntheticSpec s;
  s.n_samples = 40;
  s.hard_fraction = 0.5;
  const DatasetSplit d = make_synthetic(s);
  save_synthetic(d, dir / "toy.bin");
  const DatasetSplit e = load_synthetic(dir / "toy.bin");
  CHECK(e.train.all() == d.train.all());
  CHECK(e.test.all() == d.test.all());
  CHECK(e.image_shape == d.image_shape);

  s.kind = SyntheticKind::linear_gaussian;
  s.image_shape = {1, 1, 4};
  const DatasetSplit lg = make_synthetic(s);
  save_synthetic(lg, dir / "lg.bin");
  const DatasetSplit lg2 = load_synthetic(dir / "lg.bin");
  CHECK(lg2.train.all() == lg.train.all());
  REQUIRE(lg2.linear_gaussian.has_value());
  CHECK(lg2.linear_gaussian->a == lg.linear_gaussian->a);
  fs::remove_all(dir);
}
