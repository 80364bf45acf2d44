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

#ifndef EQGAN_METRICS_HPP
#define EQGAN_METRICS_HPP

#include <cstdint>
#include <filesystem>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eqgan/models.hpp"
#include "eqgan/tensor.hpp"

namespace eqgan {

// ---- PSNR ---------------------------------------------------------------

inline constexpr double kPsnrCap = 100.0;
inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

// 10 log10(n M^2 / SSE) over the n entries of two images given in the 0..M scale.
// Returns +infinity for identical images.
double psnr(std::span<const double> x, std::span<const double> x_rec, double max_value);
// Inputs in normalized units; both are mapped back to 0..pixel_max first.
double psnr_normalized(std::span<const double> x, std::span<const double> x_rec, int pixel_max);
// Per-sample PSNR of two (B, ...) batches in normalized units.
std::vector<double> batch_psnr(const Tensor& x, const Tensor& x_rec, int pixel_max);
inline double cap_psnr(double v) { return v > kPsnrCap ? kPsnrCap : v; }

// ---- embeddings -----------------------------------------------------------

enum class EmbeddingSource { raw_pca, external_model_file };
std::string to_string(EmbeddingSource s);
EmbeddingSource embedding_source_from_string(const std::string& s);

struct EmbeddingSet {
  RowMatrix vectors;  // (N, d)
  EmbeddingSource source = EmbeddingSource::raw_pca;
  std::int64_t size() const { return vectors.rows(); }
  std::int64_t dim() const { return vectors.cols(); }
};

// Principal-component projection fit once on a reference set.
class PcaEmbedder {
 public:
  PcaEmbedder() = default;
  // data: (N, D) flattened samples. Throws if dim > D.
  static PcaEmbedder fit(const RowMatrix& data, int dim = 64);

  EmbeddingSet embed(const RowMatrix& data) const;
  EmbeddingSet embed(const Tensor& images) const;

  int dim() const { return static_cast<int>(components_.rows()); }
  const RowMatrix& components() const { return components_; }  // (d, D), unit rows
  const Eigen::VectorXd& mean() const { return mean_; }
  // Share of the reference set's total variance captured by the kept components.
  double explained_variance_fraction() const { return explained_fraction_; }

  void save(const std::filesystem::path& path) const;
  static PcaEmbedder load(const std::filesystem::path& path);

 private:
  Eigen::VectorXd mean_;
  RowMatrix components_;
  double explained_fraction_ = 0.0;
};

// Feature extractor stored as a network file (spec + weights); its eval-mode
// output is used as the embedding.
void save_feature_extractor(const std::filesystem::path& path, const Network& network);
Network load_feature_extractor(const std::filesystem::path& path);
EmbeddingSet embed_with_network(Network& network, const Tensor& images, std::int64_t batch_size = 256);

// ---- FID -----------------------------------------------------------------

// Frechet distance between Gaussian fits (sample mean, unbiased covariance).
double fid(const RowMatrix& real, const RowMatrix& fake);
inline double fid(const EmbeddingSet& real, const EmbeddingSet& fake) { return fid(real.vectors, fake.vectors); }

// ---- precision / recall --------------------------------------------------

// nearest_neighbor: a point is covered when it lies inside the k-NN ball of its
// nearest reference point. union_of_balls: inside any reference point's k-NN ball.
enum class PrRule { nearest_neighbor, union_of_balls };
std::string to_string(PrRule r);
PrRule pr_rule_from_string(const std::string& s);

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;
  int k = 3;
};

PrPoint precision_recall(const RowMatrix& real, const RowMatrix& fake, int k = 3,
                         PrRule rule = PrRule::nearest_neighbor);
inline PrPoint precision_recall(const EmbeddingSet& real, const EmbeddingSet& fake, int k = 3,
                                PrRule rule = PrRule::nearest_neighbor) {
  return precision_recall(real.vectors, fake.vectors, k, rule);
}

// ---- summaries -------------------------------------------------------------

// Linear-interpolation percentile (q in [0, 100]).
double percentile(std::vector<double> values, double q);

struct MetricsReport {
  std::string model_tag;
  std::string dataset;
  std::string split;
  double fid = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  int k = 3;
  std::string pr_rule = "nearest_neighbor";
  std::string embedding = "raw_pca";
  double psnr_mean = 0.0;
  double psnr_p10 = 0.0;
  double psnr_p50 = 0.0;
  double psnr_p90 = 0.0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

std::string metrics_csv_header();
void write_metrics_csv_row(std::ostream& os, const MetricsReport& r);

}  // namespace eqgan

#endif  // EQGAN_METRICS_HPP
