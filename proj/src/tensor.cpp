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

#include "eqgan/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace eqgan {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + to_string(shape));
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw ShapeError("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape_));
  }
}

MatrixMap Tensor::matrix(std::int64_t rows, std::int64_t cols) {
  if (rows * cols != numel()) throw ShapeError("matrix view does not cover tensor " + to_string(shape_));
  return MatrixMap(data_.data(), rows, cols);
}

ConstMatrixMap Tensor::matrix(std::int64_t rows, std::int64_t cols) const {
  if (rows * cols != numel()) throw ShapeError("matrix view does not cover tensor " + to_string(shape_));
  return ConstMatrixMap(data_.data(), rows, cols);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

std::span<const double> Tensor::row(std::int64_t i) const {
  auto n = static_cast<std::size_t>(row_size());
  return std::span<const double>(data_).subspan(static_cast<std::size_t>(i) * n, n);
}

std::span<double> Tensor::row(std::int64_t i) {
  auto n = static_cast<std::size_t>(row_size());
  return std::span<double>(data_).subspan(static_cast<std::size_t>(i) * n, n);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw ShapeError("cannot add " + to_string(other.shape_) + " into " + to_string(shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor gather_rows(const Tensor& source, std::span<const std::int64_t> indices) {
  Shape shape = source.shape();
  if (shape.empty()) throw ShapeError("gather_rows needs rank >= 1");
  shape[0] = static_cast<std::int64_t>(indices.size());
  Tensor out(shape);
  const auto n = static_cast<std::size_t>(source.row_size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] < 0 || indices[r] >= source.rows()) {
      throw std::out_of_range("gather_rows index " + std::to_string(indices[r]) + " out of range");
    }
    auto src = source.row(indices[r]);
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  return out;
}

}  // namespace eqgan
