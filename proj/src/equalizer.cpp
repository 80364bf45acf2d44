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

#include "eqgan/equalizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace eqgan {

std::string to_string(SamplerMode m) {
  switch (m) {
    case SamplerMode::uniform: return "uniform";
    case SamplerMode::static_ll: return "static_ll";
    case SamplerMode::dynamic_psnr: return "dynamic_psnr";
  }
  return "?";
}

SamplerMode sampler_mode_from_string(const std::string& s) {
  if (s == "uniform") return SamplerMode::uniform;
  if (s == "static_ll") return SamplerMode::static_ll;
  if (s == "dynamic_psnr") return SamplerMode::dynamic_psnr;
  throw ConfigError("unknown sampler mode '" + s + "'");
}

void SamplerConfig::validate() const {
  if (!(lambda_perc >= 0 && lambda_perc <= 1)) throw ConfigError("lambda_perc must be in [0, 1]");
  if (!(lambda_dist >= 0) || !std::isfinite(lambda_dist)) throw ConfigError("lambda_dist must be >= 0");
  if (warmup_epochs < 0) throw ConfigError("sampler warmup_epochs must be >= 0");
  if (refresh_period < 0) throw ConfigError("refresh_period must be >= 0");
}

// ---- ScoreTable ------------------------------------------------------------

ScoreTable::ScoreTable(std::int64_t n)
    : scores_(static_cast<std::size_t>(n), 0.0), initialized_(static_cast<std::size_t>(n), 0) {
  if (n < 0) throw std::invalid_argument("score table size must be non-negative");
}

ScoreTable ScoreTable::from_scores(std::vector<double> scores) {
  ScoreTable t;
  t.initialized_.assign(scores.size(), 1);
  t.scores_ = std::move(scores);
  t.version_ = 1;
  return t;
}

ScoreTable ScoreTable::from_state(std::vector<double> scores, std::vector<std::uint8_t> initialized,
                                  std::uint64_t version) {
  if (scores.size() != initialized.size()) throw std::invalid_argument("score table state sizes differ");
  ScoreTable t;
  t.scores_ = std::move(scores);
  t.initialized_ = std::move(initialized);
  t.version_ = version;
  return t;
}

bool ScoreTable::fully_initialized() const {
  return std::all_of(initialized_.begin(), initialized_.end(), [](std::uint8_t v) { return v != 0; });
}

void ScoreTable::set(std::int64_t index, double score) {
  if (index < 0 || index >= size()) {
    throw std::out_of_range("score index " + std::to_string(index) + " outside [0, " + std::to_string(size()) + ")");
  }
  scores_[static_cast<std::size_t>(index)] = score;
  initialized_[static_cast<std::size_t>(index)] = 1;
  ++version_;
}

void ScoreTable::fill_uninitialized_with_median() {
  std::vector<double> known;
  for (std::size_t i = 0; i < scores_.size(); ++i) {
    if (initialized_[i]) known.push_back(scores_[i]);
  }
  if (known.size() == scores_.size()) return;
  double median = 0.0;
  if (!known.empty()) {
    const auto mid = known.begin() + static_cast<std::ptrdiff_t>(known.size() / 2);
    std::nth_element(known.begin(), mid, known.end());
    median = *mid;
    if (known.size() % 2 == 0) {
      median = 0.5 * (median + *std::max_element(known.begin(), mid));
    }
  }
  for (std::size_t i = 0; i < scores_.size(); ++i) {
    if (!initialized_[i]) {
      scores_[i] = median;
      initialized_[i] = 1;
    }
  }
  ++version_;
}

void ScoreTable::save_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write score table " + path.string());
  os << "sample_index,score,initialized,version\n" << std::setprecision(17);
  for (std::size_t i = 0; i < scores_.size(); ++i) {
    os << i << ',' << scores_[i] << ',' << int(initialized_[i]) << ',' << version_ << '\n';
  }
  if (!os) throw std::runtime_error("failed writing score table " + path.string());
}

ScoreTable ScoreTable::load_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("missing score table " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "sample_index,score,initialized,version") {
    throw std::runtime_error(path.string() + ": unexpected score table header");
  }
  ScoreTable t;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string idx, score, init, version;
    std::getline(row, idx, ',');
    std::getline(row, score, ',');
    std::getline(row, init, ',');
    std::getline(row, version, ',');
    if (std::stoll(idx) != t.size()) throw std::runtime_error(path.string() + ": sample indices must be 0..N-1 in order");
    t.scores_.push_back(std::strtod(score.c_str(), nullptr));
    t.initialized_.push_back(static_cast<std::uint8_t>(std::stoi(init)));
    t.version_ = std::stoull(version);
  }
  return t;
}

// ---- ranking and distribution ------------------------------------------------

std::vector<std::int64_t> rank_samples(const ScoreTable& table) {
  const auto scores = table.scores();
  const auto init = table.initialized();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!init[i]) throw std::runtime_error("rank_samples: score " + std::to_string(i) + " is uninitialized");
    if (std::isnan(scores[i])) throw std::runtime_error("rank_samples: score " + std::to_string(i) + " is NaN");
  }
  std::vector<std::int64_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&scores](std::int64_t a, std::int64_t b) {
    return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
  });
  std::vector<std::int64_t> ranks(scores.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) ranks[static_cast<std::size_t>(order[pos])] = static_cast<std::int64_t>(pos) + 1;
  return ranks;
}

namespace {

void check_permutation(std::span<const std::int64_t> ranks) {
  const auto n = static_cast<std::int64_t>(ranks.size());
  if (n == 0) throw std::invalid_argument("sampling_distribution: empty rank vector");
  std::vector<std::uint8_t> seen(ranks.size(), 0);
  for (auto k : ranks) {
    if (k < 1 || k > n || seen[static_cast<std::size_t>(k - 1)]) {
      throw std::invalid_argument("sampling_distribution: ranks are not a permutation of 1..N");
    }
    seen[static_cast<std::size_t>(k - 1)] = 1;
  }
}

std::vector<double> distribution_impl(std::span<const std::int64_t> ranks, const SamplerConfig& config, double scale) {
  config.validate();
  check_permutation(ranks);
  const auto n = static_cast<std::int64_t>(ranks.size());
  // log weight of rank k is lambda_dist * log(k / scale); normalize with log-sum-exp.
  std::vector<double> log_w(static_cast<std::size_t>(n));
  for (std::int64_t k = 1; k <= n; ++k) {
    log_w[static_cast<std::size_t>(k - 1)] = config.lambda_dist * std::log(static_cast<double>(k) / scale);
  }
  const double max_log = *std::max_element(log_w.begin(), log_w.end());
  double sum = 0.0;
  for (double lw : log_w) sum += std::exp(lw - max_log);
  const double log_norm = max_log + std::log(sum);

  const double uniform = (1.0 - config.lambda_perc) / static_cast<double>(n);
  std::vector<double> p(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    p[i] = uniform + config.lambda_perc * std::exp(log_w[static_cast<std::size_t>(ranks[i] - 1)] - log_norm);
  }
  return p;
}

}  // namespace

std::vector<double> sampling_distribution(std::span<const std::int64_t> ranks, const SamplerConfig& config) {
  return distribution_impl(ranks, config, 1.0);
}

std::vector<double> sampling_distribution_scaled(std::span<const std::int64_t> ranks, const SamplerConfig& config,
                                                 double scale) {
  if (!(scale > 0)) throw std::invalid_argument("rank scale must be positive");
  return distribution_impl(ranks, config, scale);
}

// ---- drawing -----------------------------------------------------------------

IndexSampler::IndexSampler(std::span<const double> probabilities) : cdf_(probabilities.size()) {
  if (probabilities.empty()) throw std::invalid_argument("IndexSampler: empty distribution");
  double acc = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (!(probabilities[i] >= 0) || !std::isfinite(probabilities[i])) {
      throw std::invalid_argument("IndexSampler: probabilities must be finite and non-negative");
    }
    acc += probabilities[i];
    cdf_[i] = acc;
  }
  if (!(acc > 0)) throw std::invalid_argument("IndexSampler: distribution has zero mass");
}

std::int64_t IndexSampler::draw(Rng& rng) const {
  const double u = rng.uniform() * cdf_.back();
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) --it;
  return static_cast<std::int64_t>(it - cdf_.begin());
}

std::vector<std::int64_t> IndexSampler::draw_batch(std::int64_t batch_size, Rng& rng) const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<std::int64_t> out(static_cast<std::size_t>(batch_size));
  for (auto& i : out) i = draw(rng);
  return out;
}

std::vector<std::int64_t> draw_batch(std::span<const double> dist, std::int64_t batch_size, Rng& rng) {
  return IndexSampler(dist).draw_batch(batch_size, rng);
}

void update_scores_dynamic(ScoreTable& table, std::span<const std::int64_t> batch_indices,
                           std::span<const double> psnr_values) {
  if (batch_indices.size() != psnr_values.size()) {
    throw std::invalid_argument("update_scores_dynamic: indices and values differ in length");
  }
  for (std::size_t i = 0; i < batch_indices.size(); ++i) {
    if (!std::isfinite(psnr_values[i])) throw std::invalid_argument("update_scores_dynamic: non-finite score");
    if (batch_indices[i] < 0 || batch_indices[i] >= table.size()) {
      throw std::out_of_range("update_scores_dynamic: index " + std::to_string(batch_indices[i]) + " out of range");
    }
  }
  for (std::size_t i = 0; i < batch_indices.size(); ++i) table.set(batch_indices[i], psnr_values[i]);
}

// ---- Equalizer -----------------------------------------------------------------

namespace {
std::vector<double> uniform_probabilities(std::int64_t n) {
  if (n < 1) throw std::invalid_argument("equalizer needs at least one sample");
  return std::vector<double>(static_cast<std::size_t>(n), 1.0 / static_cast<double>(n));
}
}  // namespace

Equalizer::Equalizer(SamplerConfig config, std::int64_t n)
    : config_(config), table_(n), uniform_(uniform_probabilities(n)) {
  config_.validate();
  if (config_.mode == SamplerMode::static_ll) {
    throw ConfigError("static_ll sampling requires a complete score table");
  }
}

Equalizer::Equalizer(SamplerConfig config, ScoreTable table)
    : config_(config), table_(std::move(table)), uniform_(uniform_probabilities(table_.size())) {
  config_.validate();
  if (config_.mode == SamplerMode::static_ll && !table_.fully_initialized()) {
    throw ConfigError("static_ll sampling requires a complete score table");
  }
}

const IndexSampler& Equalizer::sampler_for(int epoch) {
  switch (config_.mode) {
    case SamplerMode::uniform:
      return uniform_;
    case SamplerMode::dynamic_psnr:
      if (epoch <= config_.warmup_epochs) return uniform_;
      table_.fill_uninitialized_with_median();
      break;
    case SamplerMode::static_ll:
      break;
  }
  if (weighted_version_ != table_.version()) {
    weighted_ = IndexSampler(sampling_distribution(rank_samples(table_), config_));
    weighted_version_ = table_.version();
  }
  return weighted_;
}

std::vector<std::int64_t> Equalizer::next_batch(int epoch, std::int64_t batch_size, Rng& rng) {
  return sampler_for(epoch).draw_batch(batch_size, rng);
}

void Equalizer::record_scores(std::span<const std::int64_t> indices, std::span<const double> scores) {
  update_scores_dynamic(table_, indices, scores);
}

}  // namespace eqgan
