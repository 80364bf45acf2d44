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

#ifndef EQGAN_EQUALIZER_HPP
#define EQGAN_EQUALIZER_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "eqgan/errors.hpp"
#include "eqgan/rng.hpp"

// Non-uniform mini-batch selection. Samples are ranked by score from largest
// (rank 1) to smallest (rank N); sample with rank k is drawn with probability
//
//   (1 - lambda_perc) / N + lambda_perc * k^lambda_dist / sum_j j^lambda_dist
//
// so the worst-scored samples are revisited most often.
namespace eqgan {

enum class SamplerMode { uniform, static_ll, dynamic_psnr };

std::string to_string(SamplerMode m);
SamplerMode sampler_mode_from_string(const std::string& s);

struct SamplerConfig {
  SamplerMode mode = SamplerMode::uniform;
  double lambda_perc = 0.0;
  double lambda_dist = 0.0;
  int warmup_epochs = 1;   // dynamic mode: uniform sampling while the table fills
  int refresh_period = 0;  // dynamic mode: full PSNR refresh every n batches (0 = never)
  std::uint64_t seed = 0;

  void validate() const;
};

class ScoreTable {
 public:
  ScoreTable() = default;
  explicit ScoreTable(std::int64_t n);
  static ScoreTable from_scores(std::vector<double> scores);
  static ScoreTable from_state(std::vector<double> scores, std::vector<std::uint8_t> initialized,
                               std::uint64_t version);

  std::int64_t size() const { return static_cast<std::int64_t>(scores_.size()); }
  std::span<const double> scores() const { return scores_; }
  std::span<const std::uint8_t> initialized() const { return initialized_; }
  std::uint64_t version() const { return version_; }
  bool fully_initialized() const;

  void set(std::int64_t index, double score);
  // Entries never written get the median of the written ones.
  void fill_uninitialized_with_median();

  void save_csv(const std::filesystem::path& path) const;
  static ScoreTable load_csv(const std::filesystem::path& path);

  friend bool operator==(const ScoreTable&, const ScoreTable&) = default;

 private:
  std::vector<double> scores_;
  std::vector<std::uint8_t> initialized_;
  std::uint64_t version_ = 0;
};

// ranks[i] in [1, N] is the rank of sample i; ties go to the lower index first.
std::vector<std::int64_t> rank_samples(const ScoreTable& table);

// Probability vector indexed by sample, computed in the log domain.
std::vector<double> sampling_distribution(std::span<const std::int64_t> ranks, const SamplerConfig& config);
// Same distribution written with the ranks rescaled as (k / scale)^lambda_dist.
std::vector<double> sampling_distribution_scaled(std::span<const std::int64_t> ranks, const SamplerConfig& config,
                                                 double scale);

// Cached inverse-CDF sampler over a fixed probability vector.
class IndexSampler {
 public:
  IndexSampler() = default;
  explicit IndexSampler(std::span<const double> probabilities);
  std::int64_t draw(Rng& rng) const;
  std::vector<std::int64_t> draw_batch(std::int64_t batch_size, Rng& rng) const;
  std::int64_t size() const { return static_cast<std::int64_t>(cdf_.size()); }

 private:
  std::vector<double> cdf_;
};

std::vector<std::int64_t> draw_batch(std::span<const double> dist, std::int64_t batch_size, Rng& rng);

// Overwrites scores at the given indices (last write wins for duplicates).
void update_scores_dynamic(ScoreTable& table, std::span<const std::int64_t> batch_indices,
                           std::span<const double> psnr_values);

// Owns the score table and the current sampler for a training run.
class Equalizer {
 public:
  Equalizer(SamplerConfig config, std::int64_t n);
  Equalizer(SamplerConfig config, ScoreTable table);

  const SamplerConfig& config() const { return config_; }
  const ScoreTable& table() const { return table_; }
  ScoreTable& mutable_table() { return table_; }

  // Draws a batch for the given (1-based) epoch.
  std::vector<std::int64_t> next_batch(int epoch, std::int64_t batch_size, Rng& rng);
  void record_scores(std::span<const std::int64_t> indices, std::span<const double> scores);

 private:
  const IndexSampler& sampler_for(int epoch);

  SamplerConfig config_;
  ScoreTable table_;
  IndexSampler uniform_;
  IndexSampler weighted_;
  std::uint64_t weighted_version_ = ~0ull;
};

}  // namespace eqgan

#endif  // EQGAN_EQUALIZER_HPP
