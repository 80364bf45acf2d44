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

#include "eqgan/datasets.hpp"

#include <jpeglib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "eqgan/hash.hpp"
#include "eqgan/rng.hpp"

namespace eqgan {

namespace fs = std::filesystem;

// ---- SampleCollection ------------------------------------------------------

SampleCollection SampleCollection::from_bytes(Shape sample_shape, std::vector<std::uint8_t> bytes, int pixel_max) {
  if (pixel_max <= 0 || pixel_max > 255) throw DataError("pixel_max must be in [1, 255] for 8-bit storage");
  SampleCollection c;
  c.sample_numel_ = shape_numel(sample_shape);
  if (c.sample_numel_ == 0 || bytes.size() % static_cast<std::size_t>(c.sample_numel_) != 0) {
    throw DataError("byte payload is not a whole number of samples of shape " + to_string(sample_shape));
  }
  c.sample_shape_ = std::move(sample_shape);
  c.count_ = static_cast<std::int64_t>(bytes.size()) / c.sample_numel_;
  c.pixel_max_ = pixel_max;
  c.bytes_ = std::move(bytes);
  return c;
}

SampleCollection SampleCollection::from_floats(Shape sample_shape, std::vector<float> values) {
  SampleCollection c;
  c.sample_numel_ = shape_numel(sample_shape);
  if (c.sample_numel_ == 0 || values.size() % static_cast<std::size_t>(c.sample_numel_) != 0) {
    throw DataError("float payload is not a whole number of samples of shape " + to_string(sample_shape));
  }
  c.sample_shape_ = std::move(sample_shape);
  c.count_ = static_cast<std::int64_t>(values.size()) / c.sample_numel_;
  c.floats_ = std::move(values);
  return c;
}

void SampleCollection::copy_sample(std::int64_t i, std::span<double> out) const {
  if (i < 0 || i >= count_) throw std::out_of_range("sample index " + std::to_string(i) + " out of range");
  if (static_cast<std::int64_t>(out.size()) != sample_numel_) throw ShapeError("copy_sample: output size mismatch");
  const auto offset = static_cast<std::size_t>(i * sample_numel_);
  if (!bytes_.empty()) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = normalize_pixel(bytes_[offset + k], pixel_max_);
  } else {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = floats_[offset + k];
  }
}

std::vector<double> SampleCollection::sample(std::int64_t i) const {
  std::vector<double> out(static_cast<std::size_t>(sample_numel_));
  copy_sample(i, out);
  return out;
}

Tensor SampleCollection::batch(std::span<const std::int64_t> indices) const {
  Shape shape{static_cast<std::int64_t>(indices.size())};
  shape.insert(shape.end(), sample_shape_.begin(), sample_shape_.end());
  Tensor out(shape);
  for (std::size_t r = 0; r < indices.size(); ++r) copy_sample(indices[r], out.row(static_cast<std::int64_t>(r)));
  return out;
}

Tensor SampleCollection::all() const {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(count_));
  for (std::int64_t i = 0; i < count_; ++i) idx[static_cast<std::size_t>(i)] = i;
  return batch(idx);
}

std::span<const std::uint8_t> SampleCollection::raw(std::int64_t i) const {
  if (bytes_.empty()) throw DataError("raw pixels requested from float-valued samples");
  if (i < 0 || i >= count_) throw std::out_of_range("sample index " + std::to_string(i) + " out of range");
  return std::span<const std::uint8_t>(bytes_).subspan(static_cast<std::size_t>(i * sample_numel_),
                                                       static_cast<std::size_t>(sample_numel_));
}

double normalize_pixel(int value, int pixel_max) { return 2.0 * value / pixel_max - 1.0; }

double denormalize_value(double normalized, int pixel_max) { return (normalized + 1.0) * 0.5 * pixel_max; }

int denormalize_pixel(double normalized, int pixel_max) {
  const long v = std::lround(denormalize_value(normalized, pixel_max));
  return static_cast<int>(std::clamp<long>(v, 0, pixel_max));
}

const SampleCollection& DatasetSplit::split(const std::string& which) const {
  if (which == "train") return train;
  if (which == "validation" || which == "val") return validation;
  if (which == "test") return test;
  throw ConfigError("unknown split '" + which + "'");
}

std::string DatasetSplit::fingerprint() const {
  Fnv1a h;
  h.mix(name);
  for (const auto* c : {&train, &validation, &test}) {
    const auto n = c->size();
    h.mix(&n, sizeof n);
    h.mix(c->bytes().data(), c->bytes().size());
    h.mix(c->floats().data(), c->floats().size() * sizeof(float));
  }
  return h.hex();
}

// ---- Real datasets ---------------------------------------------------------

SplitSizes expected_split_sizes(const std::string& name) {
  if (name == "cifar10") return {45000, 5000, 10000};
  if (name == "fmnist") return {54000, 6000, 10000};
  if (name == "celeba") return {180540, 20060, 1999};
  throw ConfigError("unknown dataset '" + name + "' (expected cifar10, fmnist or celeba)");
}

namespace {

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw DataError("missing dataset file: " + p.string());
}

void check_count(const std::string& what, std::int64_t expected, std::int64_t found) {
  if (expected != found) {
    throw DataError(what + ": expected " + std::to_string(expected) + " samples, found " + std::to_string(found));
  }
}

std::vector<std::uint8_t> read_all(const fs::path& p) {
  require_file(p);
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

// Splits a contiguous byte payload at sample boundaries.
SampleCollection slice(const std::vector<std::uint8_t>& bytes, const Shape& shape, std::int64_t from,
                       std::int64_t count, int pixel_max) {
  const std::int64_t n = shape_numel(shape);
  std::vector<std::uint8_t> part(bytes.begin() + from * n, bytes.begin() + (from + count) * n);
  return SampleCollection::from_bytes(shape, std::move(part), pixel_max);
}

DatasetSplit load_cifar10(const fs::path& dir) {
  constexpr std::int64_t kRecord = 1 + 3072;
  const SplitSizes sizes = expected_split_sizes("cifar10");
  std::vector<std::uint8_t> train_pixels;
  std::int64_t train_found = 0;
  auto append_records = [](const std::vector<std::uint8_t>& raw, std::vector<std::uint8_t>& dst,
                           const fs::path& p) {
    if (raw.size() % kRecord != 0) {
      throw DataError(p.string() + ": size " + std::to_string(raw.size()) + " is not a multiple of " +
                      std::to_string(kRecord));
    }
    const std::int64_t n = static_cast<std::int64_t>(raw.size()) / kRecord;
    for (std::int64_t r = 0; r < n; ++r) {
      dst.insert(dst.end(), raw.begin() + r * kRecord + 1, raw.begin() + (r + 1) * kRecord);
    }
    return n;
  };
  for (int b = 1; b <= 5; ++b) require_file(dir / ("data_batch_" + std::to_string(b) + ".bin"));
  require_file(dir / "test_batch.bin");
  for (int b = 1; b <= 5; ++b) {
    const fs::path p = dir / ("data_batch_" + std::to_string(b) + ".bin");
    train_found += append_records(read_all(p), train_pixels, p);
  }
  check_count("cifar10 train+validation", sizes.train + sizes.validation, train_found);
  std::vector<std::uint8_t> test_pixels;
  const std::int64_t test_found = append_records(read_all(dir / "test_batch.bin"), test_pixels, dir / "test_batch.bin");
  check_count("cifar10 test", sizes.test, test_found);

  const Shape shape{3, 32, 32};
  DatasetSplit d;
  d.name = "cifar10";
  d.image_shape = shape;
  d.pixel_max = 255;
  d.train = slice(train_pixels, shape, 0, sizes.train, 255);
  d.validation = slice(train_pixels, shape, sizes.train, sizes.validation, 255);
  d.test = SampleCollection::from_bytes(shape, std::move(test_pixels), 255);
  return d;
}

std::vector<std::uint8_t> read_idx_images(const fs::path& p, std::int64_t& count, int& rows, int& cols) {
  const auto raw = read_all(p);
  auto be32 = [&raw](std::size_t off) {
    return (std::uint32_t(raw[off]) << 24) | (std::uint32_t(raw[off + 1]) << 16) | (std::uint32_t(raw[off + 2]) << 8) |
           std::uint32_t(raw[off + 3]);
  };
  if (raw.size() < 16 || be32(0) != 0x00000803) throw DataError(p.string() + ": not an idx3-ubyte image file");
  count = be32(4);
  rows = static_cast<int>(be32(8));
  cols = static_cast<int>(be32(12));
  const auto payload = static_cast<std::size_t>(count) * rows * cols;
  if (raw.size() != 16 + payload) {
    throw DataError(p.string() + ": header announces " + std::to_string(count) + " images but payload size differs");
  }
  return std::vector<std::uint8_t>(raw.begin() + 16, raw.end());
}

DatasetSplit load_fmnist(const fs::path& dir) {
  const SplitSizes sizes = expected_split_sizes("fmnist");
  require_file(dir / "train-images-idx3-ubyte");
  require_file(dir / "t10k-images-idx3-ubyte");
  std::int64_t n_train = 0, n_test = 0;
  int rows = 0, cols = 0;
  auto train_pixels = read_idx_images(dir / "train-images-idx3-ubyte", n_train, rows, cols);
  check_count("fmnist train+validation", sizes.train + sizes.validation, n_train);
  auto test_pixels = read_idx_images(dir / "t10k-images-idx3-ubyte", n_test, rows, cols);
  check_count("fmnist test", sizes.test, n_test);
  if (rows != 28 || cols != 28) throw DataError("fmnist images must be 28x28");

  const Shape shape{1, 28, 28};
  DatasetSplit d;
  d.name = "fmnist";
  d.image_shape = shape;
  d.pixel_max = 255;
  d.train = slice(train_pixels, shape, 0, sizes.train, 255);
  d.validation = slice(train_pixels, shape, sizes.train, sizes.validation, 255);
  d.test = SampleCollection::from_bytes(shape, std::move(test_pixels), 255);
  return d;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
};

// Decodes an RGB JPEG into (3, H, W) bytes.
std::vector<std::uint8_t> decode_jpeg(const fs::path& p, int& height, int& width) {
  std::FILE* f = std::fopen(p.c_str(), "rb");
  if (!f) throw DataError("missing dataset file: " + p.string());
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = [](j_common_ptr info) { std::longjmp(reinterpret_cast<JpegErrorManager*>(info->err)->jump, 1); };
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    std::fclose(f);
    throw DataError("corrupt JPEG: " + p.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  height = static_cast<int>(cinfo.output_height);
  width = static_cast<int>(cinfo.output_width);
  std::vector<std::uint8_t> hwc(static_cast<std::size_t>(height) * width * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = hwc.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  std::fclose(f);
  std::vector<std::uint8_t> chw(hwc.size());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        chw[(static_cast<std::size_t>(c) * height + y) * width + x] = hwc[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  return chw;
}

DatasetSplit load_celeba(const fs::path& dir, const CelebaOptions& opts) {
  const SplitSizes sizes = expected_split_sizes("celeba");
  const fs::path images = dir / "img_align_celeba";
  if (!fs::is_directory(images)) throw DataError("missing dataset directory: " + images.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(images)) {
    if (entry.path().extension() == ".jpg") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  check_count("celeba images", sizes.train + sizes.validation + sizes.test, static_cast<std::int64_t>(files.size()));

  const int s = opts.image_size;
  const Shape shape{3, s, s};
  std::vector<std::uint8_t> pixels;
  pixels.reserve(files.size() * 3 * s * s);
  for (const auto& p : files) {
    int h = 0, w = 0;
    const auto chw = decode_jpeg(p, h, w);
    const auto small = center_crop_resize(chw, 3, h, w, opts.crop_size, s);
    pixels.insert(pixels.end(), small.begin(), small.end());
  }
  DatasetSplit d;
  d.name = "celeba";
  d.image_shape = shape;
  d.pixel_max = 255;
  d.train = slice(pixels, shape, 0, sizes.train, 255);
  d.validation = slice(pixels, shape, sizes.train, sizes.validation, 255);
  d.test = slice(pixels, shape, sizes.train + sizes.validation, sizes.test, 255);
  return d;
}

}  // namespace

std::vector<std::uint8_t> center_crop_resize(std::span<const std::uint8_t> image, int channels, int height, int width,
                                             int crop, int size) {
  if (static_cast<std::size_t>(channels) * height * width != image.size()) {
    throw ShapeError("center_crop_resize: buffer does not match (C, H, W)");
  }
  if (crop <= 0 || size <= 0) throw ConfigError("crop and output size must be positive");
  crop = std::min({crop, height, width});
  const int y0 = (height - crop) / 2;
  const int x0 = (width - crop) / 2;
  const double scale = static_cast<double>(crop) / size;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(channels) * size * size);
  for (int c = 0; c < channels; ++c) {
    const std::uint8_t* src = image.data() + static_cast<std::size_t>(c) * height * width;
    for (int y = 0; y < size; ++y) {
      const double sy = std::clamp((y + 0.5) * scale - 0.5, 0.0, crop - 1.0);
      const int iy = static_cast<int>(sy);
      const int iy1 = std::min(iy + 1, crop - 1);
      const double fy = sy - iy;
      for (int x = 0; x < size; ++x) {
        const double sx = std::clamp((x + 0.5) * scale - 0.5, 0.0, crop - 1.0);
        const int ix = static_cast<int>(sx);
        const int ix1 = std::min(ix + 1, crop - 1);
        const double fx = sx - ix;
        auto at = [&](int yy, int xx) { return static_cast<double>(src[(y0 + yy) * width + (x0 + xx)]); };
        const double v = (1 - fy) * ((1 - fx) * at(iy, ix) + fx * at(iy, ix1)) +
                         fy * ((1 - fx) * at(iy1, ix) + fx * at(iy1, ix1));
        out[(static_cast<std::size_t>(c) * size + y) * size + x] =
            static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
      }
    }
  }
  return out;
}

DatasetSplit load_dataset(const std::string& name, const fs::path& root, const CelebaOptions& celeba) {
  expected_split_sizes(name);  // validates the name
  const fs::path dir = root / name;
  if (!fs::is_directory(dir)) throw DataError("missing dataset directory: " + dir.string());
  if (name == "cifar10") return load_cifar10(dir);
  if (name == "fmnist") return load_fmnist(dir);
  return load_celeba(dir, celeba);
}

// ---- Synthetic -------------------------------------------------------------

SyntheticKind synthetic_kind_from_string(const std::string& s) {
  if (s == "gaussian_mixture_images") return SyntheticKind::gaussian_mixture_images;
  if (s == "linear_gaussian") return SyntheticKind::linear_gaussian;
  throw ConfigError("unsupported synthetic kind '" + s + "'");
}

namespace {

// Mixture of low-rank Gaussians in pixel space. Easy components have smooth
// means and two small smooth factors; hard components carry high-frequency
// means and many larger textured factors.
struct MixtureModel {
  struct Component {
    std::vector<double> mean;
    std::vector<std::vector<double>> factors;
    double factor_scale;
    bool hard;
  };
  std::vector<Component> easy, hard;
  double pixel_noise = 0.02;
};

MixtureModel build_mixture(const SyntheticSpec& spec, Rng& rng) {
  const auto c = spec.image_shape[0], h = spec.image_shape[1], w = spec.image_shape[2];
  const auto n = static_cast<std::size_t>(c * h * w);
  auto smooth_pattern = [&](double amplitude) {
    // Per-channel offset plus a low-frequency plane wave.
    std::vector<double> v(n);
    const double fx = rng.uniform() * 0.6, fy = rng.uniform() * 0.6, phase = rng.uniform() * 6.283185307179586;
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double offset = (rng.uniform() * 2 - 1) * 0.6;
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
          v[static_cast<std::size_t>((ch * h + y) * w + x)] = offset + amplitude * std::sin(fx * x + fy * y + phase);
    }
    return v;
  };
  auto texture_pattern = [&](double amplitude) {
    std::vector<double> v(n);
    const double fx = 1.2 + rng.uniform() * 1.8, fy = 1.2 + rng.uniform() * 1.8;
    const double px = rng.uniform() * 6.283185307179586, py = rng.uniform() * 6.283185307179586;
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double gain = 0.5 + rng.uniform();
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
          v[static_cast<std::size_t>((ch * h + y) * w + x)] =
              amplitude * gain * std::sin(fx * x + px) * std::cos(fy * y + py);
    }
    return v;
  };

  MixtureModel m;
  const int n_hard = spec.hard_fraction > 0 ? std::max(1, spec.n_components / 2) : 0;
  const int n_easy = std::max(1, spec.n_components - n_hard);
  for (int k = 0; k < n_easy; ++k) {
    MixtureModel::Component comp{smooth_pattern(0.3), {}, 0.15, false};
    for (int f = 0; f < 2; ++f) comp.factors.push_back(smooth_pattern(1.0));
    m.easy.push_back(std::move(comp));
  }
  for (int k = 0; k < n_hard; ++k) {
    MixtureModel::Component comp{texture_pattern(0.4), {}, 0.25, true};
    for (int f = 0; f < 6; ++f) comp.factors.push_back(texture_pattern(1.0));
    m.hard.push_back(std::move(comp));
  }
  return m;
}

void draw_mixture_split(const SyntheticSpec& spec, const MixtureModel& m, std::int64_t count, Rng& rng,
                        std::vector<std::uint8_t>& pixels, std::vector<std::uint8_t>& is_hard) {
  const auto n = static_cast<std::size_t>(shape_numel(spec.image_shape));
  std::vector<double> v(n);
  for (std::int64_t i = 0; i < count; ++i) {
    const bool hard = !m.hard.empty() && rng.uniform() < spec.hard_fraction;
    const auto& pool = hard ? m.hard : m.easy;
    const auto& comp = pool[static_cast<std::size_t>(rng.uniform() * static_cast<double>(pool.size()))];
    v = comp.mean;
    for (const auto& f : comp.factors) {
      const double coef = comp.factor_scale * rng.normal();
      for (std::size_t k = 0; k < n; ++k) v[k] += coef * f[k];
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double val = std::clamp(v[k] + m.pixel_noise * rng.normal(), -1.0, 1.0);
      pixels.push_back(static_cast<std::uint8_t>(denormalize_pixel(val, 255)));
    }
    is_hard.push_back(hard ? 1 : 0);
  }
}

}  // namespace

DatasetSplit make_synthetic(const SyntheticSpec& spec) {
  if (spec.n_samples < 1) throw ConfigError("synthetic dataset needs n_samples >= 1");
  if (spec.image_shape.size() != 3 || shape_numel(spec.image_shape) <= 0) {
    throw ConfigError("synthetic image_shape must be (C, H, W) with positive dims");
  }
  const std::int64_t n_val = spec.n_validation >= 0 ? spec.n_validation : spec.n_samples / 4;
  const std::int64_t n_test = spec.n_test >= 0 ? spec.n_test : spec.n_samples / 4;
  Rng rng(spec.seed);
  DatasetSplit d;
  d.image_shape = spec.image_shape;

  switch (spec.kind) {
    case SyntheticKind::gaussian_mixture_images: {
      if (spec.hard_fraction < 0 || spec.hard_fraction > 1) throw ConfigError("hard_fraction must be in [0, 1]");
      if (spec.n_components < 1) throw ConfigError("n_components must be >= 1");
      d.name = "synthetic-mixture";
      d.pixel_max = 255;
      const MixtureModel m = build_mixture(spec, rng);
      std::vector<std::uint8_t> train, val, test, val_hard;
      draw_mixture_split(spec, m, spec.n_samples, rng, train, d.train_is_hard);
      draw_mixture_split(spec, m, n_val, rng, val, val_hard);
      draw_mixture_split(spec, m, n_test, rng, test, d.test_is_hard);
      d.train = SampleCollection::from_bytes(spec.image_shape, std::move(train), 255);
      d.validation = SampleCollection::from_bytes(spec.image_shape, std::move(val), 255);
      d.test = SampleCollection::from_bytes(spec.image_shape, std::move(test), 255);
      if (spec.hard_fraction == 0) {
        d.train_is_hard.clear();
        d.test_is_hard.clear();
      }
      break;
    }
    case SyntheticKind::linear_gaussian: {
      if (spec.latent_dim < 1 || spec.sigma <= 0) throw ConfigError("linear_gaussian needs latent_dim >= 1, sigma > 0");
      d.name = "synthetic-linear-gaussian";
      d.pixel_max = 0;
      const auto dim = shape_numel(spec.image_shape);
      LinearGaussianParams p;
      p.a = RowMatrix(dim, spec.latent_dim);
      p.b = Eigen::VectorXd(dim);
      for (std::int64_t r = 0; r < dim; ++r)
        for (int k = 0; k < spec.latent_dim; ++k) p.a(r, k) = rng.normal() / std::sqrt(spec.latent_dim);
      for (std::int64_t r = 0; r < dim; ++r) p.b(r) = 0.5 * rng.normal();
      p.sigma = spec.sigma;
      auto draw = [&](std::int64_t count) {
        std::vector<float> out;
        out.reserve(static_cast<std::size_t>(count * dim));
        Eigen::VectorXd z(spec.latent_dim);
        for (std::int64_t i = 0; i < count; ++i) {
          for (int k = 0; k < spec.latent_dim; ++k) z(k) = rng.normal();
          const Eigen::VectorXd mean = p.a * z + p.b;
          for (std::int64_t r = 0; r < dim; ++r) out.push_back(static_cast<float>(mean(r) + p.sigma * rng.normal()));
        }
        return SampleCollection::from_floats(spec.image_shape, std::move(out));
      };
      d.train = draw(spec.n_samples);
      d.validation = draw(n_val);
      d.test = draw(n_test);
      d.linear_gaussian = std::move(p);
      break;
    }
    default:
      throw ConfigError("unsupported synthetic kind");
  }
  return d;
}

namespace {

constexpr std::array<char, 8> kMagic{'E', 'Q', 'G', 'A', 'N', 'D', 'S', '\0'};
constexpr std::uint8_t kFormatVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw DataError("truncated synthetic dataset file");
  return v;
}

}  // namespace

void save_synthetic(const DatasetSplit& data, const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(kMagic.data(), kMagic.size());
  put<std::uint8_t>(os, kFormatVersion);
  const bool quantized = data.train.is_quantized();
  put<std::uint8_t>(os, quantized ? 1 : 0);
  put<std::uint16_t>(os, static_cast<std::uint16_t>(data.pixel_max));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(data.name.size()));
  os.write(data.name.data(), static_cast<std::streamsize>(data.name.size()));
  for (const auto* c : {&data.train, &data.validation, &data.test}) {
    put<std::uint32_t>(os, 4);
    put<std::int64_t>(os, c->size());
    for (auto d : data.image_shape) put<std::int64_t>(os, d);
    std::vector<double> buf(static_cast<std::size_t>(c->sample_numel()));
    for (std::int64_t i = 0; i < c->size(); ++i) {
      c->copy_sample(i, buf);
      for (double v : buf) put<float>(os, static_cast<float>(v));
    }
  }
  for (const auto* flags : {&data.train_is_hard, &data.test_is_hard}) {
    put<std::uint64_t>(os, flags->size());
    os.write(reinterpret_cast<const char*>(flags->data()), static_cast<std::streamsize>(flags->size()));
  }
  put<std::uint8_t>(os, data.linear_gaussian ? 1 : 0);
  if (data.linear_gaussian) {
    const auto& p = *data.linear_gaussian;
    put<std::int64_t>(os, p.a.rows());
    put<std::int64_t>(os, p.a.cols());
    os.write(reinterpret_cast<const char*>(p.a.data()), static_cast<std::streamsize>(p.a.size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(p.b.data()), static_cast<std::streamsize>(p.b.size() * sizeof(double)));
    put<double>(os, p.sigma);
  }
  if (!os) throw DataError("failed writing " + path.string());
}

DatasetSplit load_synthetic(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("missing dataset file: " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw DataError(path.string() + ": not a synthetic dataset file");
  const auto version = get<std::uint8_t>(is);
  if (version != kFormatVersion) throw DataError(path.string() + ": unsupported format version " + std::to_string(version));
  const bool quantized = get<std::uint8_t>(is) != 0;
  DatasetSplit d;
  d.pixel_max = get<std::uint16_t>(is);
  d.name.resize(get<std::uint32_t>(is));
  is.read(d.name.data(), static_cast<std::streamsize>(d.name.size()));
  for (auto* c : {&d.train, &d.validation, &d.test}) {
    if (get<std::uint32_t>(is) != 4) throw DataError(path.string() + ": expected rank-4 split");
    const auto count = get<std::int64_t>(is);
    Shape shape{get<std::int64_t>(is), get<std::int64_t>(is), get<std::int64_t>(is)};
    d.image_shape = shape;
    std::vector<float> values(static_cast<std::size_t>(count * shape_numel(shape)));
    is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
    if (!is) throw DataError("truncated synthetic dataset file");
    if (quantized) {
      std::vector<std::uint8_t> bytes(values.size());
      for (std::size_t i = 0; i < values.size(); ++i) bytes[i] = static_cast<std::uint8_t>(denormalize_pixel(values[i], d.pixel_max));
      *c = SampleCollection::from_bytes(shape, std::move(bytes), d.pixel_max);
    } else {
      *c = SampleCollection::from_floats(shape, std::move(values));
    }
  }
  for (auto* flags : {&d.train_is_hard, &d.test_is_hard}) {
    flags->resize(get<std::uint64_t>(is));
    is.read(reinterpret_cast<char*>(flags->data()), static_cast<std::streamsize>(flags->size()));
  }
  if (get<std::uint8_t>(is)) {
    LinearGaussianParams p;
    const auto rows = get<std::int64_t>(is), cols = get<std::int64_t>(is);
    p.a = RowMatrix(rows, cols);
    p.b = Eigen::VectorXd(rows);
    is.read(reinterpret_cast<char*>(p.a.data()), static_cast<std::streamsize>(p.a.size() * sizeof(double)));
    is.read(reinterpret_cast<char*>(p.b.data()), static_cast<std::streamsize>(p.b.size() * sizeof(double)));
    p.sigma = get<double>(is);
    d.linear_gaussian = std::move(p);
  }
  return d;
}

}  // namespace eqgan
