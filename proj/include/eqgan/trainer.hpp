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

#ifndef EQGAN_TRAINER_HPP
#define EQGAN_TRAINER_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eqgan/datasets.hpp"
#include "eqgan/equalizer.hpp"
#include "eqgan/likelihood.hpp"
#include "eqgan/losses.hpp"
#include "eqgan/metrics.hpp"
#include "eqgan/models.hpp"
#include "eqgan/norm_controller.hpp"
#include "eqgan/optimizer.hpp"

namespace eqgan {

enum class Variant { mdgan, p_mdgan, p_mdgan_mleq, ep_mdgan };
std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

enum class Architecture { automatic, conv, toy };
std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

struct LrDecay {
  double factor = 0.99;
  int start_epoch = 400;
};

struct TrainConfig {
  Variant variant = Variant::p_mdgan;
  double lambda_cyc = 7.0;
  SamplerConfig sampler;
  ControllerState controller;
  int epochs = 800;
  int batch_size = 128;
  int latent_dim = 256;
  AdamConfig optimizer;
  LrDecay lr_decay;
  int d_steps_per_ge_step = 5;
  std::uint64_t seed = 0;

  Architecture architecture = Architecture::automatic;
  int toy_width = 64;
  losses::GeneratorLoss ge_loss = losses::GeneratorLoss::non_saturating;
  int checkpoint_every = 50;      // epochs; the final epoch is always checkpointed
  std::int64_t prior_mc = 10000;  // Monte Carlo draws for the prior norm variance

  // Sets sampler.mode to the one implied by the variant.
  void apply_variant();
  // Throws ConfigError naming the offending field.
  void validate() const;
  bool controller_active() const { return variant != Variant::mdgan; }
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Learning rate for a 1-based epoch.
double learning_rate(const TrainConfig& config, int epoch);
// Global step index (0-based) -> whether it is the joint G+E update.
inline bool is_ge_step(std::int64_t step, int d_steps_per_ge_step) {
  return step % (d_steps_per_ge_step + 1) == d_steps_per_ge_step;
}

SpecSet spec_set_for(const TrainConfig& config, const Shape& image_shape);

struct RunManifest {
  std::string phase;  // "train", "score", "pipeline"
  std::string status = "running";  // running | complete | failed
  nlohmann::json config;
  std::string dataset_name;
  std::string dataset_fingerprint;
  Shape image_shape;
  int pixel_max = 255;
  std::filesystem::path run_dir;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path final_checkpoint;
  std::filesystem::path loss_csv;
  std::filesystem::path steps_csv;
  std::filesystem::path epochs_csv;
  std::filesystem::path controller_history;
  std::vector<std::filesystem::path> score_snapshots;
  std::filesystem::path input_score_table;
  std::vector<std::filesystem::path> linked_manifests;
  std::string error;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);
};

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepRecord {
  std::int64_t step = 0;
  int epoch = 0;
  bool ge = false;
  double lr = 0.0;
  losses::LossBreakdown losses;  // GE steps carry the full breakdown; D steps only l_adv_*
};

// Owns all mutable training state: networks, optimizers, RNG streams,
// controller and score table.
class Trainer {
 public:
  // `static_scores` is required for p_mdgan_mleq. `run_dir` receives logs and checkpoints;
  // an empty path keeps everything in memory.
  Trainer(TrainConfig config, const DatasetSplit& data, std::filesystem::path run_dir = {},
          std::optional<ScoreTable> static_scores = std::nullopt);
  ~Trainer();
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // One D or G+E update, followed by end-of-epoch work when the epoch completes.
  StepRecord step();
  // Runs until `config.epochs` epochs are done; returns the manifest.
  RunManifest run();

  const TrainConfig& config() const { return config_; }
  ModelTriple& models() { return models_; }
  const ControllerState& controller() const { return controller_; }
  const Equalizer& equalizer() const { return *equalizer_; }
  std::int64_t global_step() const { return step_; }
  std::int64_t steps_per_epoch() const { return steps_per_epoch_; }
  // Epoch (1-based) that the next step belongs to.
  int current_epoch() const { return static_cast<int>(step_ / steps_per_epoch_) + 1; }
  int completed_epochs() const { return static_cast<int>(step_ / steps_per_epoch_); }
  double lambda_norm() const;
  const RunManifest& manifest() const { return manifest_; }

  void save_checkpoint(const std::filesystem::path& path) const;
  void load_checkpoint(const std::filesystem::path& path);

  // Encoded norms of the training split (eval mode).
  std::vector<double> encoded_norms(const SampleCollection& samples);

 private:
  StepRecord d_update(int epoch, double lr);
  StepRecord ge_update(int epoch, double lr);
  void end_of_epoch(int epoch);
  void refresh_scores();
  void open_logs(bool append);
  void write_manifest();
  void truncate_logs();

  TrainConfig config_;
  const DatasetSplit& data_;
  std::filesystem::path run_dir_;
  ModelTriple models_;
  Adam opt_d_, opt_ge_;
  Rng batch_rng_, noise_rng_;
  ControllerState controller_;
  std::unique_ptr<Equalizer> equalizer_;
  std::int64_t step_ = 0;
  std::int64_t ge_steps_ = 0;
  std::int64_t steps_per_epoch_ = 1;
  double last_d_loss_ = 0.0;
  std::vector<StepRecord> epoch_records_;
  RunManifest manifest_;
  std::ofstream loss_log_, steps_log_, epochs_log_;
};

struct MleqOptions {
  std::optional<double> phase1_lambda_cyc;  // defaults to the base config's value
  ScoringOptions scoring;                   // progress_path is set per run
};

// Three-phase pipeline: P-MDGAN, AIS scoring of its reconstructions, and a
// from-scratch retrain with static likelihood-equalized sampling. Completed
// phases found in `run_dir` are reused.
RunManifest run_mleq_pipeline(const TrainConfig& base_config, const DatasetSplit& data, const AISConfig& ais,
                              const std::filesystem::path& run_dir, const MleqOptions& options = {});

// Rebuilds the model triple stored in a manifest's final checkpoint.
ModelTriple load_models(const RunManifest& manifest);

struct EvaluationOptions {
  std::int64_t n_gen = 5000;
  std::string split = "test";
  std::string model_tag;
  EmbeddingSource embedding = EmbeddingSource::raw_pca;
  int pca_dim = 64;
  std::filesystem::path external_model;
  int k = 3;
  PrRule pr_rule = PrRule::nearest_neighbor;
  std::uint64_t seed = 0;
  std::int64_t prior_norm_samples = 10000;
};

struct Evaluation {
  MetricsReport report;
  std::vector<double> psnr;           // per split sample, uncapped
  std::vector<double> encoded_norms;  // per split sample
  std::vector<double> prior_norms;    // ||z||, z from the prior
};

// Per-sample PSNR of G(E(x)) against x (eval mode, uncapped).
std::vector<double> reconstruction_psnr(ModelTriple& models, const SampleCollection& samples, int pixel_max);

Evaluation evaluate(ModelTriple& models, const DatasetSplit& data, const EvaluationOptions& options);
Evaluation evaluate(const RunManifest& manifest, const DatasetSplit& data, const EvaluationOptions& options);
// metrics.json, metrics.csv, psnr.csv and norms.csv under `dir`.
void write_evaluation(const Evaluation& eval, const std::filesystem::path& dir);

}  // namespace eqgan

#endif  // EQGAN_TRAINER_HPP
