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

#ifndef EQGAN_LIKELIHOOD_HPP
#define EQGAN_LIKELIHOOD_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eqgan/datasets.hpp"
#include "eqgan/equalizer.hpp"
#include "eqgan/models.hpp"

// Marginal likelihood of an image under a generator with an isotropic Gaussian
// observation model, estimated with annealed importance sampling (AIS) over
// f_t(z) ~ p(z) p(x | z)^beta_t.
namespace eqgan {

enum class TempSchedule { linear, sigmoidal };

std::string to_string(TempSchedule s);
TempSchedule temp_schedule_from_string(const std::string& s);

struct TransitionConfig {
  double step_size = 0.5;  // initial random-walk scale in latent units
  int n_steps_per_temp = 1;
  double target_accept = 0.6;
  double adapt_rate = 1.0;  // log step-size gain per unit acceptance error
};

struct AISConfig {
  double sigma = 0.05;  // observation noise in normalized pixel units
  int n_temps = 1000;   // number of beta values, endpoints included
  TempSchedule schedule = TempSchedule::linear;
  int n_chains = 16;
  TransitionConfig transition;
  std::uint64_t seed = 0;

  void validate() const;
  // beta_0 = 0 < ... < beta_{n_temps-1} = 1.
  std::vector<double> betas() const;
  nlohmann::json to_json() const;
  std::string hash() const;
};

struct LikelihoodRecord {
  std::int64_t sample_index = 0;
  double log10_marginal = 0.0;
  double std_error = 0.0;  // log10 units, delta method across chains
  std::string config_hash;
};

// Maps a (B, latent) batch to a (B, ...) batch of images in normalized units.
using BatchGenerator = std::function<Tensor(const Tensor& z)>;

// Eval-mode forward of a generator network. The network must outlive the result.
BatchGenerator network_generator(Network& generator);
// x = A z + b, reshaped to `sample_shape` per row.
BatchGenerator linear_generator(const LinearGaussianParams& params, Shape sample_shape);

// log N(x | mean, sigma^2 I) in nats.
double log_obs_density(std::span<const double> x_target, std::span<const double> mean, double sigma);
// Same, with mean = G(z) for a single latent vector.
double log_obs_density(std::span<const double> x_target, std::span<const double> z, const BatchGenerator& generator,
                       double sigma);

// Deterministic given (config.seed, sample_index).
LikelihoodRecord ais_marginal(std::span<const double> x_target, int latent_dim, const BatchGenerator& generator,
                              const AISConfig& config, std::int64_t sample_index = 0);

struct ScoringOptions {
  std::filesystem::path progress_path;  // empty: no resume file
  std::int64_t chunk_size = 64;
  std::int64_t max_chunks = -1;  // stop after this many new chunks (-1: run to completion)
};

struct ScoringResult {
  std::vector<LikelihoodRecord> records;
  bool complete = false;
  ScoreTable table;  // filled when complete
  std::string run_hash;
};

// Hash binding an AIS config to a model pair and a sample set; a progress file
// written under a different hash is rejected.
std::string scoring_hash(const AISConfig& config, const ModelTriple& triple, const SampleCollection& samples);

// Scores log10 p(G(E(x))) for every sample, resuming from options.progress_path when present.
ScoringResult score_training_set(const SampleCollection& samples, ModelTriple& triple, const AISConfig& config,
                                 const ScoringOptions& options = {});

// CSV columns: sample_index,log10_marginal,std_error[,psnr]. `psnr` is optional (empty) or one per record.
void write_likelihood_csv(const std::filesystem::path& path, std::span<const LikelihoodRecord> records,
                          std::span<const double> psnr = {});

// JSON sidecar next to a score table: AIS config, its hash and the run hash.
void write_ais_sidecar(const std::filesystem::path& path, const AISConfig& config, const std::string& run_hash);

}  // namespace eqgan

#endif  // EQGAN_LIKELIHOOD_HPP
