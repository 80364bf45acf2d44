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

#include "eqgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "eqgan/datasets.hpp"

namespace eqgan {

double psnr(std::span<const double> x, std::span<const double> x_rec, double max_value) {
  if (x.size() != x_rec.size()) {
    throw ShapeError("psnr: images differ in size (" + std::to_string(x.size()) + " vs " +
                     std::to_string(x_rec.size()) + ")");
  }
  if (x.empty()) throw ShapeError("psnr: empty image");
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - x_rec[i];
    sse += d * d;
  }
  if (sse == 0.0) return kPsnrInfinity;
  return 10.0 * std::log10(static_cast<double>(x.size()) * max_value * max_value / sse);
}

double psnr_normalized(std::span<const double> x, std::span<const double> x_rec, int pixel_max) {
  std::vector<double> a(x.size()), b(x_rec.size());
  std::transform(x.begin(), x.end(), a.begin(), [&](double v) { return denormalize_value(v, pixel_max); });
  std::transform(x_rec.begin(), x_rec.end(), b.begin(), [&](double v) { return denormalize_value(v, pixel_max); });
  return psnr(a, b, pixel_max);
}

std::vector<double> batch_psnr(const Tensor& x, const Tensor& x_rec, int pixel_max) {
  if (x.shape() != x_rec.shape()) {
    throw ShapeError("batch_psnr: " + to_string(x.shape()) + " vs " + to_string(x_rec.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (std::int64_t i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = psnr_normalized(x.row(i), x_rec.row(i), pixel_max);
  return out;
}

// ---- embeddings --------------------------------------------------------------

std::string to_string(EmbeddingSource s) { return s == EmbeddingSource::raw_pca ? "raw_pca" : "external_model_file"; }

EmbeddingSource embedding_source_from_string(const std::string& s) {
  if (s == "raw_pca") return EmbeddingSource::raw_pca;
  if (s == "external_model_file") return EmbeddingSource::external_model_file;
  throw ConfigError("unknown embedding source '" + s + "'");
}

PcaEmbedder PcaEmbedder::fit(const RowMatrix& data, int dim) {
  const auto n = data.rows();
  const auto raw_dim = data.cols();
  if (dim < 1) throw std::invalid_argument("pca: dim must be >= 1");
  if (dim > raw_dim) {
    throw std::invalid_argument("pca: dim " + std::to_string(dim) + " exceeds raw dimension " + std::to_string(raw_dim));
  }
  if (n < 2 || dim > n) throw std::invalid_argument("pca: need at least max(2, dim) samples");

  PcaEmbedder p;
  p.mean_ = data.colwise().mean().transpose();
  const RowMatrix centered = data.rowwise() - p.mean_.transpose();
  const double denom = static_cast<double>(n - 1);

  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;  // columns are components in raw space, descending variance
  double total = 0.0;
  if (raw_dim <= n) {
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    values = es.eigenvalues().reverse();
    vectors = es.eigenvectors().rowwise().reverse();
    total = cov.trace();
  } else {
    // Fewer samples than dimensions: eigendecompose the Gram matrix instead.
    const Eigen::MatrixXd gram = (centered * centered.transpose()) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    values = es.eigenvalues().reverse();
    const Eigen::MatrixXd u = es.eigenvectors().rowwise().reverse();
    vectors = centered.transpose() * u.leftCols(dim);
    for (int i = 0; i < dim; ++i) {
      const double nrm = vectors.col(i).norm();
      if (nrm > 0) vectors.col(i) /= nrm;
    }
    total = gram.trace();
  }

  p.components_.resize(dim, raw_dim);
  double kept = 0.0;
  for (int i = 0; i < dim; ++i) {
    Eigen::VectorXd v = vectors.col(i);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    p.components_.row(i) = v.transpose();
    kept += std::max(values(i), 0.0);
  }
  p.explained_fraction_ = total > 0 ? kept / total : 1.0;
  return p;
}

EmbeddingSet PcaEmbedder::embed(const RowMatrix& data) const {
  if (data.cols() != mean_.size()) {
    throw ShapeError("pca embed: data dimension " + std::to_string(data.cols()) + " vs fitted " +
                     std::to_string(mean_.size()));
  }
  EmbeddingSet e;
  e.source = EmbeddingSource::raw_pca;
  e.vectors = (data.rowwise() - mean_.transpose()) * components_.transpose();
  return e;
}

EmbeddingSet PcaEmbedder::embed(const Tensor& images) const { return embed(RowMatrix(images.as_matrix())); }

namespace {
constexpr char kPcaMagic[8] = {'E', 'Q', 'G', 'A', 'N', 'P', 'C', 'A'};
constexpr char kExtractorMagic[8] = {'E', 'Q', 'G', 'A', 'N', 'F', 'E', 'X'};

void expect_magic(std::istream& is, const char (&magic)[8], const std::filesystem::path& path) {
  char buf[8];
  is.read(buf, 8);
  if (!is || std::memcmp(buf, magic, 8) != 0) throw std::runtime_error(path.string() + ": bad file signature");
}
}  // namespace

void PcaEmbedder::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(kPcaMagic, 8);
  Tensor mean({mean_.size()});
  std::copy(mean_.data(), mean_.data() + mean_.size(), mean.data().begin());
  Tensor comps({components_.rows(), components_.cols()});
  comps.as_matrix() = components_;
  write_tensor(os, mean);
  write_tensor(os, comps);
  os.write(reinterpret_cast<const char*>(&explained_fraction_), sizeof explained_fraction_);
}

PcaEmbedder PcaEmbedder::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("missing PCA file " + path.string());
  expect_magic(is, kPcaMagic, path);
  PcaEmbedder p;
  const Tensor mean = read_tensor(is);
  const Tensor comps = read_tensor(is);
  p.mean_ = Eigen::Map<const Eigen::VectorXd>(mean.data().data(), mean.numel());
  p.components_ = comps.as_matrix();
  is.read(reinterpret_cast<char*>(&p.explained_fraction_), sizeof p.explained_fraction_);
  if (!is) throw std::runtime_error(path.string() + ": truncated PCA file");
  return p;
}

void save_feature_extractor(const std::filesystem::path& path, const Network& network) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(kExtractorMagic, 8);
  nlohmann::json spec = network.spec();
  const std::string text = spec.dump();
  const std::uint64_t len = text.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof len);
  os.write(text.data(), static_cast<std::streamsize>(len));
  network.write(os);
}

Network load_feature_extractor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("missing external feature model: " + path.string());
  expect_magic(is, kExtractorMagic, path);
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!is || len > (1u << 26)) throw std::runtime_error(path.string() + ": corrupt feature model header");
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  Network net(nlohmann::json::parse(text).get<NetworkSpec>(), 0);
  net.read(is);
  return net;
}

EmbeddingSet embed_with_network(Network& network, const Tensor& images, std::int64_t batch_size) {
  EmbeddingSet e;
  e.source = EmbeddingSource::external_model_file;
  const std::int64_t n = images.rows();
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const std::int64_t end = std::min(n, start + batch_size);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(end - start));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + static_cast<std::int64_t>(i);
    const Tensor out = network.forward(nn::Var::constant(gather_rows(images, idx)), Mode::eval).value();
    if (e.vectors.size() == 0) e.vectors.resize(n, out.row_size());
    e.vectors.middleRows(start, end - start) = out.as_matrix();
  }
  return e;
}

// ---- FID -------------------------------------------------------------------

namespace {

void moments(const RowMatrix& x, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
  mean = x.colwise().mean().transpose();
  const RowMatrix c = x.rowwise() - mean.transpose();
  cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double fid(const RowMatrix& real, const RowMatrix& fake) {
  if (real.cols() != fake.cols()) {
    throw ShapeError("fid: embedding dimensions differ (" + std::to_string(real.cols()) + " vs " +
                     std::to_string(fake.cols()) + ")");
  }
  if (real.rows() < 2 || fake.rows() < 2) throw std::invalid_argument("fid: need at least 2 points per set");
  if (!real.allFinite() || !fake.allFinite()) throw std::invalid_argument("fid: embeddings contain NaN or infinity");
  Eigen::VectorXd mu_r, mu_f;
  Eigen::MatrixXd cov_r, cov_f;
  moments(real, mu_r, cov_r);
  moments(fake, mu_f, cov_f);

  // Tr((Cr Cf)^1/2) = sum of sqrt(eig(Cr^1/2 Cf Cr^1/2)).
  const Eigen::MatrixXd root_r = psd_sqrt(cov_r);
  Eigen::MatrixXd inner = root_r * cov_f * root_r;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  const double trace_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double value = (mu_r - mu_f).squaredNorm() + cov_r.trace() + cov_f.trace() - 2.0 * trace_sqrt;
  return std::max(value, 0.0);
}

// ---- precision / recall -----------------------------------------------------

std::string to_string(PrRule r) { return r == PrRule::nearest_neighbor ? "nearest_neighbor" : "union_of_balls"; }

PrRule pr_rule_from_string(const std::string& s) {
  if (s == "nearest_neighbor") return PrRule::nearest_neighbor;
  if (s == "union_of_balls") return PrRule::union_of_balls;
  throw ConfigError("unknown precision/recall rule '" + s + "'");
}

namespace {

double squared_distance(const RowMatrix& a, Eigen::Index i, const RowMatrix& b, Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    const double d = a(i, c) - b(j, c);
    s += d * d;
  }
  return s;
}

// Squared distance from each point to its k-th nearest other point in the same set.
std::vector<double> knn_radii(const RowMatrix& set, int k) {
  const auto n = set.rows();
  std::vector<double> radii(static_cast<std::size_t>(n));
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    dist.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) dist.push_back(squared_distance(set, i, set, j));
    }
    std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
    radii[static_cast<std::size_t>(i)] = dist[static_cast<std::size_t>(k - 1)];
  }
  return radii;
}

// Fraction of `query` points covered by the k-NN manifold of `reference`.
double coverage(const RowMatrix& reference, const RowMatrix& query, int k, PrRule rule) {
  const auto radii = knn_radii(reference, k);
  std::int64_t covered = 0;
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    if (rule == PrRule::nearest_neighbor) {
      Eigen::Index best = 0;
      double best_d = squared_distance(query, q, reference, 0);
      for (Eigen::Index r = 1; r < reference.rows(); ++r) {
        const double d = squared_distance(query, q, reference, r);
        if (d < best_d) {
          best_d = d;
          best = r;
        }
      }
      if (best_d <= radii[static_cast<std::size_t>(best)]) ++covered;
    } else {
      for (Eigen::Index r = 0; r < reference.rows(); ++r) {
        if (squared_distance(query, q, reference, r) <= radii[static_cast<std::size_t>(r)]) {
          ++covered;
          break;
        }
      }
    }
  }
  return static_cast<double>(covered) / static_cast<double>(query.rows());
}

}  // namespace

PrPoint precision_recall(const RowMatrix& real, const RowMatrix& fake, int k, PrRule rule) {
  if (k < 1) throw std::invalid_argument("precision_recall: k must be >= 1");
  if (real.cols() != fake.cols()) throw ShapeError("precision_recall: embedding dimensions differ");
  if (real.rows() < k + 1 || fake.rows() < k + 1) {
    throw std::invalid_argument("precision_recall: each set needs at least k + 1 = " + std::to_string(k + 1) +
                                " points");
  }
  PrPoint p;
  p.k = k;
  p.precision = coverage(real, fake, k, rule);
  p.recall = coverage(fake, real, k, rule);
  return p;
}

// ---- summaries ---------------------------------------------------------------

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  if (q < 0 || q > 100) throw std::invalid_argument("percentile q must be in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

nlohmann::json MetricsReport::to_json() const {
  return {{"model_tag", model_tag},
          {"dataset", dataset},
          {"split", split},
          {"fid", fid},
          {"precision", precision},
          {"recall", recall},
          {"k", k},
          {"pr_rule", pr_rule},
          {"embedding", embedding},
          {"psnr_mean", psnr_mean},
          {"psnr_percentiles", {{"10", psnr_p10}, {"50", psnr_p50}, {"90", psnr_p90}}},
          {"warnings", warnings}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.model_tag = j.at("model_tag").get<std::string>();
  r.dataset = j.at("dataset").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.fid = j.at("fid").get<double>();
  r.precision = j.at("precision").get<double>();
  r.recall = j.at("recall").get<double>();
  r.k = j.at("k").get<int>();
  r.pr_rule = j.at("pr_rule").get<std::string>();
  r.embedding = j.at("embedding").get<std::string>();
  r.psnr_mean = j.at("psnr_mean").get<double>();
  const auto& pct = j.at("psnr_percentiles");
  r.psnr_p10 = pct.at("10").get<double>();
  r.psnr_p50 = pct.at("50").get<double>();
  r.psnr_p90 = pct.at("90").get<double>();
  r.warnings = j.value("warnings", std::vector<std::string>{});
  return r;
}

std::string metrics_csv_header() {
  return "model_tag,dataset,split,fid,precision,recall,k,pr_rule,psnr_mean,psnr_p10,psnr_p50,psnr_p90";
}

void write_metrics_csv_row(std::ostream& os, const MetricsReport& r) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::setprecision(17) << r.model_tag << ',' << r.dataset << ',' << r.split << ',' << r.fid << ','
     << r.precision << ',' << r.recall << ',' << r.k << ',' << r.pr_rule << ',' << r.psnr_mean << ',' << r.psnr_p10
     << ',' << r.psnr_p50 << ',' << r.psnr_p90 << '\n';
  os.flags(flags);
  os.precision(prec);
}

}  // namespace eqgan
