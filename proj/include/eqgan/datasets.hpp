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

#ifndef EQGAN_DATASETS_HPP
#define EQGAN_DATASETS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eqgan/errors.hpp"
#include "eqgan/tensor.hpp"

namespace eqgan {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Indexed, immutable collection of same-shaped samples. Samples are stored
// either as raw 8-bit pixels (normalized on access) or as float32 values
// already in normalized units.
class SampleCollection {
 public:
  SampleCollection() = default;
  static SampleCollection from_bytes(Shape sample_shape, std::vector<std::uint8_t> bytes, int pixel_max);
  static SampleCollection from_floats(Shape sample_shape, std::vector<float> values);

  std::int64_t size() const { return count_; }
  const Shape& sample_shape() const { return sample_shape_; }
  std::int64_t sample_numel() const { return sample_numel_; }
  bool is_quantized() const { return !bytes_.empty() || (count_ == 0 && pixel_max_ > 0); }
  int pixel_max() const { return pixel_max_; }

  // Normalized values of sample i.
  void copy_sample(std::int64_t i, std::span<double> out) const;
  std::vector<double> sample(std::int64_t i) const;
  // (B, C, H, W) batch of normalized samples.
  Tensor batch(std::span<const std::int64_t> indices) const;
  Tensor all() const;
  // Raw 8-bit pixels of sample i (quantized storage only).
  std::span<const std::uint8_t> raw(std::int64_t i) const;

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  const std::vector<float>& floats() const { return floats_; }

 private:
  Shape sample_shape_;
  std::int64_t sample_numel_ = 0;
  std::int64_t count_ = 0;
  int pixel_max_ = 0;
  std::vector<std::uint8_t> bytes_;
  std::vector<float> floats_;
};

double normalize_pixel(int value, int pixel_max);
// Pixel value in [0, pixel_max] scale (not rounded).
double denormalize_value(double normalized, int pixel_max);
int denormalize_pixel(double normalized, int pixel_max);

struct LinearGaussianParams {
  RowMatrix a;  // (data_dim, latent_dim)
  Eigen::VectorXd b;
  double sigma = 0.0;
};

struct DatasetSplit {
  std::string name;
  SampleCollection train;
  SampleCollection validation;
  SampleCollection test;
  Shape image_shape;  // (C, H, W)
  int pixel_max = 255;
  // Synthetic extras.
  std::optional<LinearGaussianParams> linear_gaussian;
  std::vector<std::uint8_t> train_is_hard;  // per train sample, when a hard subpopulation was injected
  std::vector<std::uint8_t> test_is_hard;

  const SampleCollection& split(const std::string& which) const;
  // Cheap content hash (FNV-1a over sizes and payload) for run manifests.
  std::string fingerprint() const;
};

struct SplitSizes {
  std::int64_t train, validation, test;
};

// Reference split sizes for the supported image datasets.
SplitSizes expected_split_sizes(const std::string& name);

struct CelebaOptions {
  int crop_size = 140;  // center crop side before resizing
  int image_size = 64;
};

// Loads `<root>/<name>/...` (layouts documented in the README). Throws DataError
// naming a missing path, or reporting expected vs found counts.
DatasetSplit load_dataset(const std::string& name, const std::filesystem::path& root,
                          const CelebaOptions& celeba = {});

enum class SyntheticKind { gaussian_mixture_images, linear_gaussian };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::gaussian_mixture_images;
  std::int64_t n_samples = 512;    // training samples
  std::int64_t n_validation = -1;  // -1: n_samples / 4
  std::int64_t n_test = -1;        // -1: n_samples / 4
  Shape image_shape{3, 8, 8};
  std::uint64_t seed = 0;
  // gaussian_mixture_images
  int n_components = 8;
  double hard_fraction = 0.0;  // share of samples drawn from high-variance textured components
  // linear_gaussian
  int latent_dim = 2;
  double sigma = 0.5;
};

SyntheticKind synthetic_kind_from_string(const std::string& s);
DatasetSplit make_synthetic(const SyntheticSpec& spec);

// Binary container: 8-byte magic, version byte, quantized flag byte, pixel_max (u16),
// then per split: rank (u32), dims (i64 LE), float32 payload (normalized values).
void save_synthetic(const DatasetSplit& data, const std::filesystem::path& path);
DatasetSplit load_synthetic(const std::filesystem::path& path);

// Center crop of side `crop` followed by bilinear resize to `size`; image is (C, H, W) bytes.
std::vector<std::uint8_t> center_crop_resize(std::span<const std::uint8_t> image, int channels, int height,
                                             int width, int crop, int size);

}  // namespace eqgan

#endif  // EQGAN_DATASETS_HPP
