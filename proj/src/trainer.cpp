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

#include "eqgan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "eqgan/hash.hpp"

namespace eqgan {

namespace fs = std::filesystem;

// ---- configuration -----------------------------------------------------------

std::string to_string(Variant v) {
  switch (v) {
    case Variant::mdgan: return "mdgan";
    case Variant::p_mdgan: return "p_mdgan";
    case Variant::p_mdgan_mleq: return "p_mdgan_mleq";
    case Variant::ep_mdgan: return "ep_mdgan";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "mdgan") return Variant::mdgan;
  if (s == "p_mdgan") return Variant::p_mdgan;
  if (s == "p_mdgan_mleq") return Variant::p_mdgan_mleq;
  if (s == "ep_mdgan") return Variant::ep_mdgan;
  throw ConfigError("unknown variant '" + s + "'");
}

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::automatic: return "auto";
    case Architecture::conv: return "conv";
    case Architecture::toy: return "toy";
  }
  return "?";
}

Architecture architecture_from_string(const std::string& s) {
  if (s == "auto") return Architecture::automatic;
  if (s == "conv") return Architecture::conv;
  if (s == "toy") return Architecture::toy;
  throw ConfigError("unknown architecture '" + s + "'");
}

void TrainConfig::apply_variant() {
  switch (variant) {
    case Variant::mdgan:
    case Variant::p_mdgan: sampler.mode = SamplerMode::uniform; break;
    case Variant::p_mdgan_mleq: sampler.mode = SamplerMode::static_ll; break;
    case Variant::ep_mdgan: sampler.mode = SamplerMode::dynamic_psnr; break;
  }
}

void TrainConfig::validate() const {
  if (!(lambda_cyc >= 0) || !std::isfinite(lambda_cyc)) throw ConfigError("lambda_cyc must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (d_steps_per_ge_step < 1) throw ConfigError("d_steps_per_ge_step must be >= 1");
  if (!(optimizer.lr > 0)) throw ConfigError("lr must be > 0");
  if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1)) throw ConfigError("beta1 must be in [0, 1)");
  if (!(optimizer.beta2 >= 0 && optimizer.beta2 < 1)) throw ConfigError("beta2 must be in [0, 1)");
  if (!(optimizer.eps > 0)) throw ConfigError("adam eps must be > 0");
  if (!(lr_decay.factor > 0 && lr_decay.factor <= 1)) throw ConfigError("lr_decay_factor must be in (0, 1]");
  if (lr_decay.start_epoch < 0) throw ConfigError("lr_decay_start must be >= 0");
  if (toy_width < 1) throw ConfigError("toy_width must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (prior_mc < 10000) throw ConfigError("prior_mc must be >= 10000");
  sampler.validate();
  if (controller_active()) controller.validate();

  const auto expect = [&](SamplerMode mode) {
    if (sampler.mode != mode) {
      throw ConfigError("variant " + to_string(variant) + " requires sampler_mode = " + to_string(mode) + " (got " +
                        to_string(sampler.mode) + ")");
    }
  };
  switch (variant) {
    case Variant::mdgan:
    case Variant::p_mdgan: expect(SamplerMode::uniform); break;
    case Variant::p_mdgan_mleq: expect(SamplerMode::static_ll); break;
    case Variant::ep_mdgan: expect(SamplerMode::dynamic_psnr); break;
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"variant", to_string(c.variant)},
      {"lambda_cyc", c.lambda_cyc},
      {"sampler",
       {{"mode", to_string(c.sampler.mode)},
        {"lambda_perc", c.sampler.lambda_perc},
        {"lambda_dist", c.sampler.lambda_dist},
        {"warmup_epochs", c.sampler.warmup_epochs},
        {"refresh_period", c.sampler.refresh_period},
        {"seed", c.sampler.seed}}},
      {"controller",
       {{"lambda_norm", c.controller.lambda_norm},
        {"warmup_epochs", c.controller.warmup_epochs},
        {"prior_norm_var", c.controller.prior_norm_var},
        {"step_rate", c.controller.step_rate},
        {"lambda_min", c.controller.lambda_min},
        {"lambda_max", c.controller.lambda_max}}},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"latent_dim", c.latent_dim},
      {"optimizer",
       {{"lr", c.optimizer.lr}, {"beta1", c.optimizer.beta1}, {"beta2", c.optimizer.beta2}, {"eps", c.optimizer.eps}}},
      {"lr_decay", {{"factor", c.lr_decay.factor}, {"start_epoch", c.lr_decay.start_epoch}}},
      {"d_steps_per_ge_step", c.d_steps_per_ge_step},
      {"seed", c.seed},
      {"architecture", to_string(c.architecture)},
      {"toy_width", c.toy_width},
      {"ge_loss", c.ge_loss == losses::GeneratorLoss::non_saturating ? "non_saturating" : "saturating"},
      {"checkpoint_every", c.checkpoint_every},
      {"prior_mc", c.prior_mc},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.lambda_cyc = j.at("lambda_cyc").get<double>();
  const auto& s = j.at("sampler");
  c.sampler.mode = sampler_mode_from_string(s.at("mode").get<std::string>());
  c.sampler.lambda_perc = s.at("lambda_perc").get<double>();
  c.sampler.lambda_dist = s.at("lambda_dist").get<double>();
  c.sampler.warmup_epochs = s.at("warmup_epochs").get<int>();
  c.sampler.refresh_period = s.at("refresh_period").get<int>();
  c.sampler.seed = s.at("seed").get<std::uint64_t>();
  const auto& k = j.at("controller");
  c.controller.lambda_norm = k.at("lambda_norm").get<double>();
  c.controller.warmup_epochs = k.at("warmup_epochs").get<int>();
  c.controller.prior_norm_var = k.at("prior_norm_var").get<double>();
  c.controller.step_rate = k.at("step_rate").get<double>();
  c.controller.lambda_min = k.at("lambda_min").get<double>();
  c.controller.lambda_max = k.at("lambda_max").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  const auto& o = j.at("optimizer");
  c.optimizer = {o.at("lr").get<double>(), o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                 o.at("eps").get<double>()};
  c.lr_decay.factor = j.at("lr_decay").at("factor").get<double>();
  c.lr_decay.start_epoch = j.at("lr_decay").at("start_epoch").get<int>();
  c.d_steps_per_ge_step = j.at("d_steps_per_ge_step").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.architecture = architecture_from_string(j.at("architecture").get<std::string>());
  c.toy_width = j.at("toy_width").get<int>();
  c.ge_loss = j.at("ge_loss").get<std::string>() == "saturating" ? losses::GeneratorLoss::saturating
                                                                  : losses::GeneratorLoss::non_saturating;
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  c.prior_mc = j.at("prior_mc").get<std::int64_t>();
  return c;
}

double learning_rate(const TrainConfig& config, int epoch) {
  if (epoch <= config.lr_decay.start_epoch) return config.optimizer.lr;
  return config.optimizer.lr * std::pow(config.lr_decay.factor, epoch - config.lr_decay.start_epoch);
}

SpecSet spec_set_for(const TrainConfig& config, const Shape& image_shape) {
  if (image_shape.size() != 3) throw ShapeError("image shape must be (C, H, W), got " + to_string(image_shape));
  const auto h = image_shape[1];
  const bool conv_size = h == image_shape[2] && (h == 28 || h == 32 || h == 64);
  Architecture arch = config.architecture;
  if (arch == Architecture::automatic) arch = conv_size ? Architecture::conv : Architecture::toy;
  if (arch == Architecture::toy) return toy_spec_set(image_shape, config.latent_dim, config.toy_width);
  if (!conv_size) throw ConfigError("conv architecture supports 28x28, 32x32 and 64x64 images, got " + to_string(image_shape));
  const Resolution res = h == 28 ? Resolution::r28 : h == 32 ? Resolution::r32 : Resolution::r64;
  return conv_spec_set(res, config.latent_dim, static_cast<int>(image_shape[0]));
}

// ---- manifest ------------------------------------------------------------------

namespace {

std::vector<std::string> path_strings(const std::vector<fs::path>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) out.push_back(p.string());
  return out;
}

std::vector<fs::path> paths_from(const nlohmann::json& j) {
  std::vector<fs::path> out;
  for (const auto& s : j) out.emplace_back(s.get<std::string>());
  return out;
}

}  // namespace

nlohmann::json RunManifest::to_json() const {
  return {{"phase", phase},
          {"status", status},
          {"config", config},
          {"dataset", {{"name", dataset_name}, {"fingerprint", dataset_fingerprint}, {"image_shape", image_shape},
                       {"pixel_max", pixel_max}}},
          {"run_dir", run_dir.string()},
          {"checkpoints", path_strings(checkpoints)},
          {"final_checkpoint", final_checkpoint.string()},
          {"loss_csv", loss_csv.string()},
          {"steps_csv", steps_csv.string()},
          {"epochs_csv", epochs_csv.string()},
          {"controller_history", controller_history.string()},
          {"score_snapshots", path_strings(score_snapshots)},
          {"input_score_table", input_score_table.string()},
          {"linked_manifests", path_strings(linked_manifests)},
          {"error", error}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  m.phase = j.at("phase").get<std::string>();
  m.status = j.at("status").get<std::string>();
  m.config = j.at("config");
  const auto& d = j.at("dataset");
  m.dataset_name = d.at("name").get<std::string>();
  m.dataset_fingerprint = d.at("fingerprint").get<std::string>();
  m.image_shape = d.at("image_shape").get<Shape>();
  m.pixel_max = d.at("pixel_max").get<int>();
  m.run_dir = j.at("run_dir").get<std::string>();
  m.checkpoints = paths_from(j.at("checkpoints"));
  m.final_checkpoint = j.at("final_checkpoint").get<std::string>();
  m.loss_csv = j.at("loss_csv").get<std::string>();
  m.steps_csv = j.at("steps_csv").get<std::string>();
  m.epochs_csv = j.at("epochs_csv").get<std::string>();
  m.controller_history = j.at("controller_history").get<std::string>();
  m.score_snapshots = paths_from(j.at("score_snapshots"));
  m.input_score_table = j.at("input_score_table").get<std::string>();
  m.linked_manifests = paths_from(j.at("linked_manifests"));
  m.error = j.value("error", "");
  return m;
}

void RunManifest::save(const fs::path& path) const {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("cannot write manifest " + path.string());
    os << to_json().dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

RunManifest RunManifest::load(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("missing manifest " + path.string());
  return from_json(nlohmann::json::parse(is));
}

// ---- checkpoint I/O --------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'E', 'Q', 'G', 'A', 'N', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("truncated checkpoint");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  if (n > (1ull << 32)) throw std::runtime_error("corrupt checkpoint string");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("truncated checkpoint");
  return s;
}

// Config fields that may change when a run is resumed.
nlohmann::json resumable_view(nlohmann::json j) {
  j.erase("epochs");
  j.erase("checkpoint_every");
  return j;
}

struct CheckpointHeader {
  nlohmann::json config;
  std::int64_t step = 0;
  std::int64_t ge_steps = 0;
  double last_d_loss = 0.0;
};

CheckpointHeader read_header(std::istream& is, const fs::path& path) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw std::runtime_error(path.string() + ": not a checkpoint");
  if (get<std::uint32_t>(is) != kCheckpointVersion) throw std::runtime_error(path.string() + ": unsupported version");
  CheckpointHeader h;
  h.config = nlohmann::json::parse(get_string(is));
  h.step = get<std::int64_t>(is);
  h.ge_steps = get<std::int64_t>(is);
  h.last_d_loss = get<double>(is);
  return h;
}

Tensor prior_batch(Rng& rng, std::int64_t batch, int latent_dim) {
  Tensor z({batch, latent_dim});
  for (auto& v : z.data()) v = rng.normal();
  return z;
}

Tensor scaled(const Tensor& t, double s) {
  Tensor out = t;
  for (auto& v : out.data()) v *= s;
  return out;
}

bool all_finite(const losses::LossBreakdown& b) {
  return std::isfinite(b.l_adv_d) && std::isfinite(b.l_adv_ge) && std::isfinite(b.l_cyc) && std::isfinite(b.l_norm) &&
         std::isfinite(b.total_ge);
}

std::string epoch_file(const std::string& stem, int epoch, const std::string& ext) {
  std::ostringstream os;
  os << stem << '_' << std::setw(4) << std::setfill('0') << epoch << ext;
  return os.str();
}

// Keeps the header plus rows whose first integer field is below `limit`.
void truncate_csv(const fs::path& path, std::int64_t limit) {
  if (!fs::exists(path)) return;
  std::ifstream is(path);
  std::string header, line, out;
  std::getline(is, header);
  out = header + "\n";
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (std::stoll(line.substr(0, line.find(','))) < limit) out += line + "\n";
  }
  is.close();
  std::ofstream os(path, std::ios::trunc);
  os << out;
}

}  // namespace

// ---- trainer ---------------------------------------------------------------------

Trainer::Trainer(TrainConfig config, const DatasetSplit& data, fs::path run_dir, std::optional<ScoreTable> static_scores)
    : config_(std::move(config)), data_(data), run_dir_(std::move(run_dir)) {
  config_.validate();
  const auto n = data_.train.size();
  if (n < 1) throw DataError("training split is empty");
  if (data_.train.sample_shape() != data_.image_shape) throw ShapeError("dataset image shape mismatch");

  models_ = build_triple(spec_set_for(config_, data_.image_shape), derive_seed(config_.seed, 1));
  opt_d_ = Adam(models_.discriminator.parameters(), config_.optimizer);
  auto ge_params = models_.generator.parameters();
  const auto& enc = models_.encoder.parameters();
  ge_params.insert(ge_params.end(), enc.begin(), enc.end());
  opt_ge_ = Adam(std::move(ge_params), config_.optimizer);
  batch_rng_ = Rng(derive_seed(config_.seed, 2));
  noise_rng_ = Rng(derive_seed(config_.seed, 3));

  controller_ = config_.controller;
  controller_.history.clear();
  if (config_.controller_active()) {
    controller_.prior_norm_var =
        prior_norm_statistics(config_.latent_dim, config_.prior_mc, derive_seed(config_.seed, 4)).variance;
  }

  if (config_.sampler.mode == SamplerMode::static_ll) {
    if (!static_scores) throw ConfigError("p_mdgan_mleq requires a static score table");
    if (static_scores->size() != n) {
      throw ConfigError("static score table has " + std::to_string(static_scores->size()) + " rows, training split has " +
                        std::to_string(n));
    }
    equalizer_ = std::make_unique<Equalizer>(config_.sampler, std::move(*static_scores));
  } else {
    equalizer_ = std::make_unique<Equalizer>(config_.sampler, n);
  }
  steps_per_epoch_ = std::max<std::int64_t>(1, n / config_.batch_size);

  manifest_.phase = "train";
  manifest_.config = to_json(config_);
  manifest_.dataset_name = data_.name;
  manifest_.dataset_fingerprint = data_.fingerprint();
  manifest_.image_shape = data_.image_shape;
  manifest_.pixel_max = data_.pixel_max;

  if (run_dir_.empty()) return;
  fs::create_directories(run_dir_ / "checkpoints");
  manifest_.run_dir = run_dir_;
  manifest_.loss_csv = run_dir_ / "losses.csv";
  manifest_.steps_csv = run_dir_ / "steps.csv";
  manifest_.epochs_csv = run_dir_ / "epochs.csv";
  manifest_.controller_history = run_dir_ / "controller_history.csv";

  const fs::path last = run_dir_ / "checkpoints" / "last.ckpt";
  const bool resume = fs::exists(last);
  if (resume) {
    if (fs::exists(run_dir_ / "manifest.json")) {
      const auto old = RunManifest::load(run_dir_ / "manifest.json");
      manifest_.checkpoints = old.checkpoints;
      manifest_.score_snapshots = old.score_snapshots;
      manifest_.final_checkpoint = old.final_checkpoint;
      manifest_.input_score_table = old.input_score_table;
    }
    load_checkpoint(last);
    truncate_logs();
  }
  open_logs(resume);
  write_manifest();
}

Trainer::~Trainer() = default;

double Trainer::lambda_norm() const { return config_.controller_active() ? controller_.lambda_norm : 0.0; }

void Trainer::open_logs(bool append) {
  const auto mode = append ? std::ios::app : std::ios::trunc;
  loss_log_.open(manifest_.loss_csv, std::ios::out | mode);
  steps_log_.open(manifest_.steps_csv, std::ios::out | mode);
  epochs_log_.open(manifest_.epochs_csv, std::ios::out | mode);
  if (!loss_log_ || !steps_log_ || !epochs_log_) throw std::runtime_error("cannot open logs in " + run_dir_.string());
  if (!append) {
    loss_log_ << losses::loss_csv_header() << '\n';
    steps_log_ << "step,epoch,kind,lr\n";
    epochs_log_ << "epoch,lr,lambda_norm,enc_norm_mean,enc_norm_var,prior_norm_var,d_steps,ge_steps\n";
  }
  loss_log_ << std::setprecision(17);
  steps_log_ << std::setprecision(17);
  epochs_log_ << std::setprecision(17);
}

void Trainer::truncate_logs() {
  truncate_csv(manifest_.loss_csv, step_);
  truncate_csv(manifest_.steps_csv, step_);
  truncate_csv(manifest_.epochs_csv, completed_epochs() + 1);
}

void Trainer::write_manifest() {
  if (!run_dir_.empty()) manifest_.save(run_dir_ / "manifest.json");
}

StepRecord Trainer::d_update(int epoch, double lr) {
  const auto idx = equalizer_->next_batch(epoch, config_.batch_size, batch_rng_);
  const Tensor x = data_.train.batch(idx);
  const Tensor z = prior_batch(noise_rng_, config_.batch_size, config_.latent_dim);

  // Generator and encoder outputs enter the discriminator as constants.
  const nn::Var xv = nn::Var::constant(x);
  const nn::Var zv = nn::Var::constant(z);
  const nn::Var z_enc = models_.encoder.forward(xv, Mode::train).detach();
  const nn::Var x_fake = models_.generator.forward(zv, Mode::train).detach();
  const nn::Var real = models_.discriminator.forward(xv, z_enc, Mode::train);
  const nn::Var fake = models_.discriminator.forward(x_fake, zv, Mode::train);
  auto terms = losses::adversarial_loss(real.value(), fake.value(), config_.ge_loss);

  StepRecord rec;
  rec.losses.l_adv_d = terms.l_d;
  rec.losses.l_adv_ge = terms.l_ge;
  rec.losses.total_d = terms.l_d;
  if (!std::isfinite(terms.l_d)) return rec;

  opt_d_.zero_grad();
  nn::backward({{real, terms.dd_real}, {fake, terms.dd_fake}});
  opt_d_.step(lr);
  last_d_loss_ = terms.l_d;
  return rec;
}

StepRecord Trainer::ge_update(int epoch, double lr) {
  const auto idx = equalizer_->next_batch(epoch, config_.batch_size, batch_rng_);
  const Tensor x = data_.train.batch(idx);
  const Tensor z = prior_batch(noise_rng_, config_.batch_size, config_.latent_dim);

  const nn::Var xv = nn::Var::constant(x);
  const nn::Var zv = nn::Var::constant(z);
  const nn::Var z_enc = models_.encoder.forward(xv, Mode::train);
  const nn::Var x_fake = models_.generator.forward(zv, Mode::train);
  const nn::Var real = models_.discriminator.forward(xv, z_enc, Mode::train);
  const nn::Var fake = models_.discriminator.forward(x_fake, zv, Mode::train);
  const nn::Var x_rec = models_.generator.forward(z_enc, Mode::train);

  const auto adv = losses::adversarial_loss(real.value(), fake.value(), config_.ge_loss);
  const auto cyc = losses::cycle_loss(x, x_rec.value());
  const auto nrm = losses::norm_loss(z_enc.value(), config_.latent_dim);
  const double lam_norm = lambda_norm();
  StepRecord rec;
  rec.losses = losses::combine({last_d_loss_, adv.l_ge, cyc.value, nrm.value}, config_.lambda_cyc, lam_norm);
  if (!all_finite(rec.losses)) return rec;

  opt_ge_.zero_grad();
  std::vector<std::pair<nn::Var, Tensor>> seeds{{real, adv.dge_real}, {fake, adv.dge_fake}};
  if (config_.lambda_cyc > 0) seeds.emplace_back(x_rec, scaled(cyc.grad, config_.lambda_cyc));
  if (lam_norm > 0) seeds.emplace_back(z_enc, scaled(nrm.grad, lam_norm));
  nn::backward(seeds);
  opt_ge_.step(lr);
  ++ge_steps_;

  if (config_.sampler.mode == SamplerMode::dynamic_psnr) {
    auto scores = batch_psnr(x, x_rec.value(), data_.pixel_max);
    for (auto& s : scores) s = cap_psnr(s);
    equalizer_->record_scores(idx, scores);
    if (config_.sampler.refresh_period > 0 && ge_steps_ % config_.sampler.refresh_period == 0) refresh_scores();
  }
  return rec;
}

void Trainer::refresh_scores() {
  const auto n = data_.train.size();
  constexpr std::int64_t kChunk = 256;
  for (std::int64_t start = 0; start < n; start += kChunk) {
    const auto end = std::min(n, start + kChunk);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(end - start));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + static_cast<std::int64_t>(i);
    const Tensor x = data_.train.batch(idx);
    const Tensor z = models_.encoder.forward(nn::Var::constant(x), Mode::eval).value();
    const Tensor rec = models_.generator.forward(nn::Var::constant(z), Mode::eval).value();
    auto scores = batch_psnr(x, rec, data_.pixel_max);
    for (auto& s : scores) s = cap_psnr(s);
    equalizer_->record_scores(idx, scores);
  }
}

std::vector<double> Trainer::encoded_norms(const SampleCollection& samples) {
  std::vector<double> norms;
  norms.reserve(static_cast<std::size_t>(samples.size()));
  constexpr std::int64_t kChunk = 256;
  for (std::int64_t start = 0; start < samples.size(); start += kChunk) {
    const auto end = std::min(samples.size(), start + kChunk);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(end - start));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + static_cast<std::int64_t>(i);
    const Tensor z = models_.encoder.forward(nn::Var::constant(samples.batch(idx)), Mode::eval).value();
    for (std::int64_t r = 0; r < z.rows(); ++r) {
      double sq = 0.0;
      for (double v : z.row(r)) sq += v * v;
      norms.push_back(std::sqrt(sq));
    }
  }
  return norms;
}

StepRecord Trainer::step() {
  const int epoch = current_epoch();
  const double lr = learning_rate(config_, epoch);
  const bool ge = is_ge_step(step_, config_.d_steps_per_ge_step);
  StepRecord rec = ge ? ge_update(epoch, lr) : d_update(epoch, lr);
  rec.step = step_;
  rec.epoch = epoch;
  rec.ge = ge;
  rec.lr = lr;

  if (!all_finite(rec.losses)) {
    manifest_.status = "failed";
    manifest_.error = "non-finite loss at step " + std::to_string(step_) + " (epoch " + std::to_string(epoch) + ")";
    write_manifest();
    const std::string last =
        manifest_.checkpoints.empty() ? std::string("none") : manifest_.checkpoints.back().string();
    throw TrainingAborted(manifest_.error + "; last good checkpoint: " + last);
  }

  if (steps_log_.is_open()) steps_log_ << step_ << ',' << epoch << ',' << (ge ? "GE" : "D") << ',' << lr << '\n';
  if (ge && loss_log_.is_open()) losses::write_loss_csv_row(loss_log_, static_cast<long>(step_), epoch, rec.losses);
  ++step_;
  if (step_ % steps_per_epoch_ == 0) end_of_epoch(epoch);
  return rec;
}

void Trainer::end_of_epoch(int epoch) {
  const auto norms = encoded_norms(data_.train);
  const auto stats = norm_statistics(norms);
  if (config_.controller_active()) controller_ = update_lambda(controller_, epoch, stats.variance);

  if (run_dir_.empty()) return;
  const std::int64_t first = (epoch - 1) * steps_per_epoch_;
  std::int64_t ge_in_epoch = 0;
  for (std::int64_t s = first; s < first + steps_per_epoch_; ++s) ge_in_epoch += is_ge_step(s, config_.d_steps_per_ge_step);
  epochs_log_ << epoch << ',' << learning_rate(config_, epoch) << ',' << lambda_norm() << ',' << stats.mean << ','
              << stats.variance << ',' << (config_.controller_active() ? controller_.prior_norm_var : 0.0) << ','
              << steps_per_epoch_ - ge_in_epoch << ',' << ge_in_epoch << '\n';
  loss_log_.flush();
  steps_log_.flush();
  epochs_log_.flush();
  {
    std::ofstream os(manifest_.controller_history);
    write_controller_history(os, controller_);
  }

  if (epoch % config_.checkpoint_every == 0 || epoch >= config_.epochs) {
    const fs::path ckpt = run_dir_ / "checkpoints" / epoch_file("epoch", epoch, ".ckpt");
    save_checkpoint(ckpt);
    fs::copy_file(ckpt, run_dir_ / "checkpoints" / "last.ckpt", fs::copy_options::overwrite_existing);
    if (std::find(manifest_.checkpoints.begin(), manifest_.checkpoints.end(), ckpt) == manifest_.checkpoints.end()) {
      manifest_.checkpoints.push_back(ckpt);
    }
    manifest_.final_checkpoint = ckpt;
    if (config_.sampler.mode == SamplerMode::dynamic_psnr) {
      fs::create_directories(run_dir_ / "scores");
      const fs::path snap = run_dir_ / "scores" / epoch_file("epoch", epoch, ".csv");
      equalizer_->table().save_csv(snap);
      if (std::find(manifest_.score_snapshots.begin(), manifest_.score_snapshots.end(), snap) ==
          manifest_.score_snapshots.end()) {
        manifest_.score_snapshots.push_back(snap);
      }
    }
    write_manifest();
  }
}

RunManifest Trainer::run() {
  while (completed_epochs() < config_.epochs) step();
  manifest_.status = "complete";
  manifest_.error.clear();
  write_manifest();
  return manifest_;
}

void Trainer::save_checkpoint(const fs::path& path) const {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
    os.write(kCheckpointMagic, 8);
    put(os, kCheckpointVersion);
    put_string(os, to_json(config_).dump());
    put(os, step_);
    put(os, ge_steps_);
    put(os, last_d_loss_);
    models_.generator.write(os);
    models_.encoder.write(os);
    models_.discriminator.write(os);
    opt_d_.write(os);
    opt_ge_.write(os);
    put_string(os, batch_rng_.serialize());
    put_string(os, noise_rng_.serialize());

    nlohmann::json ctl = {{"lambda_norm", controller_.lambda_norm}, {"prior_norm_var", controller_.prior_norm_var}};
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& h : controller_.history) hist.push_back({h.epoch, h.lambda_norm, h.empirical_var});
    ctl["history"] = hist;
    put_string(os, ctl.dump());

    const ScoreTable& table = equalizer_->table();
    put<std::int64_t>(os, table.size());
    os.write(reinterpret_cast<const char*>(table.scores().data()),
             static_cast<std::streamsize>(table.scores().size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(table.initialized().data()),
             static_cast<std::streamsize>(table.initialized().size()));
    put(os, table.version());
    if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
  }
  fs::rename(tmp, path);
}

void Trainer::load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("missing checkpoint " + path.string());
  const auto header = read_header(is, path);
  if (resumable_view(header.config) != resumable_view(to_json(config_))) {
    throw ConfigError(path.string() + ": checkpoint was written with a different configuration");
  }
  step_ = header.step;
  ge_steps_ = header.ge_steps;
  last_d_loss_ = header.last_d_loss;
  models_.generator.read(is);
  models_.encoder.read(is);
  models_.discriminator.read(is);
  opt_d_.read(is);
  opt_ge_.read(is);
  batch_rng_.deserialize(get_string(is));
  noise_rng_.deserialize(get_string(is));

  const auto ctl = nlohmann::json::parse(get_string(is));
  controller_.lambda_norm = ctl.at("lambda_norm").get<double>();
  controller_.prior_norm_var = ctl.at("prior_norm_var").get<double>();
  controller_.history.clear();
  for (const auto& h : ctl.at("history")) {
    controller_.history.push_back({h[0].get<int>(), h[1].get<double>(), h[2].get<double>()});
  }

  const auto n = get<std::int64_t>(is);
  if (n != data_.train.size()) throw ConfigError(path.string() + ": score table size does not match training split");
  std::vector<double> scores(static_cast<std::size_t>(n));
  std::vector<std::uint8_t> init(static_cast<std::size_t>(n));
  is.read(reinterpret_cast<char*>(scores.data()), static_cast<std::streamsize>(scores.size() * sizeof(double)));
  is.read(reinterpret_cast<char*>(init.data()), static_cast<std::streamsize>(init.size()));
  const auto version = get<std::uint64_t>(is);
  equalizer_ = std::make_unique<Equalizer>(config_.sampler,
                                           ScoreTable::from_state(std::move(scores), std::move(init), version));
}

ModelTriple load_models(const RunManifest& manifest) {
  if (manifest.final_checkpoint.empty()) throw std::runtime_error("manifest has no checkpoint");
  std::ifstream is(manifest.final_checkpoint, std::ios::binary);
  if (!is) throw std::runtime_error("missing checkpoint " + manifest.final_checkpoint.string());
  const auto header = read_header(is, manifest.final_checkpoint);
  const TrainConfig config = train_config_from_json(header.config);
  ModelTriple models = build_triple(spec_set_for(config, manifest.image_shape), 0);
  models.generator.read(is);
  models.encoder.read(is);
  models.discriminator.read(is);
  return models;
}

// ---- MLeq pipeline -------------------------------------------------------------------

RunManifest run_mleq_pipeline(const TrainConfig& base_config, const DatasetSplit& data, const AISConfig& ais,
                              const fs::path& run_dir, const MleqOptions& options) {
  fs::create_directories(run_dir);
  RunManifest pipeline;
  pipeline.phase = "pipeline";
  pipeline.config = to_json(base_config);
  pipeline.config["ais"] = ais.to_json();
  pipeline.dataset_name = data.name;
  pipeline.dataset_fingerprint = data.fingerprint();
  pipeline.image_shape = data.image_shape;
  pipeline.pixel_max = data.pixel_max;
  pipeline.run_dir = run_dir;
  const fs::path pipeline_path = run_dir / "manifest.json";

  try {
    TrainConfig phase1 = base_config;
    phase1.variant = Variant::p_mdgan;
    if (options.phase1_lambda_cyc) phase1.lambda_cyc = *options.phase1_lambda_cyc;
    phase1.apply_variant();
    const fs::path dir1 = run_dir / "phase1_p_mdgan";
    RunManifest m1 = Trainer(phase1, data, dir1).run();
    pipeline.linked_manifests = {dir1 / "manifest.json"};
    pipeline.save(pipeline_path);

    const fs::path dir2 = run_dir / "phase2_scores";
    fs::create_directories(dir2);
    ModelTriple scored = load_models(m1);
    ScoringOptions scoring = options.scoring;
    scoring.progress_path = dir2 / "progress.csv";
    auto result = score_training_set(data.train, scored, ais, scoring);
    if (!result.complete) {
      pipeline.error = "scoring incomplete: " + std::to_string(result.records.size()) + " of " +
                       std::to_string(data.train.size()) + " samples";
      pipeline.save(pipeline_path);
      return pipeline;
    }
    const fs::path table_path = dir2 / "scores.csv";
    result.table.save_csv(table_path);
    write_ais_sidecar(dir2 / "scores.json", ais, result.run_hash);
    write_likelihood_csv(dir2 / "likelihood.csv", result.records,
                         reconstruction_psnr(scored, data.train, data.pixel_max));
    RunManifest m2 = m1;
    m2.phase = "score";
    m2.status = "complete";
    m2.run_dir = dir2;
    m2.score_snapshots = {table_path};
    m2.linked_manifests = {dir1 / "manifest.json"};
    m2.save(dir2 / "manifest.json");
    pipeline.linked_manifests.push_back(dir2 / "manifest.json");
    pipeline.save(pipeline_path);

    TrainConfig phase3 = base_config;
    phase3.variant = Variant::p_mdgan_mleq;
    phase3.apply_variant();
    const fs::path dir3 = run_dir / "phase3_p_mdgan_mleq";
    Trainer trainer3(phase3, data, dir3, ScoreTable::load_csv(table_path));
    RunManifest m3 = trainer3.run();
    m3.input_score_table = table_path;
    m3.linked_manifests = {dir1 / "manifest.json", dir2 / "manifest.json"};
    m3.save(dir3 / "manifest.json");
    pipeline.linked_manifests.push_back(dir3 / "manifest.json");
    pipeline.final_checkpoint = m3.final_checkpoint;
    pipeline.input_score_table = table_path;
    pipeline.status = "complete";
    pipeline.save(pipeline_path);
    return pipeline;
  } catch (const std::exception& e) {
    pipeline.status = "failed";
    pipeline.error = e.what();
    pipeline.save(pipeline_path);
    throw;
  }
}

// ---- evaluation ------------------------------------------------------------------------

namespace {

template <typename Fn>
void for_chunks(std::int64_t n, std::int64_t chunk, Fn fn) {
  for (std::int64_t start = 0; start < n; start += chunk) {
    const auto end = std::min(n, start + chunk);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(end - start));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + static_cast<std::int64_t>(i);
    fn(start, idx);
  }
}

}  // namespace

std::vector<double> reconstruction_psnr(ModelTriple& models, const SampleCollection& samples, int pixel_max) {
  std::vector<double> out(static_cast<std::size_t>(samples.size()));
  for_chunks(samples.size(), 256, [&](std::int64_t start, const std::vector<std::int64_t>& idx) {
    const Tensor x = samples.batch(idx);
    const Tensor z = models.encoder.forward(nn::Var::constant(x), Mode::eval).value();
    const Tensor xr = models.generator.forward(nn::Var::constant(z), Mode::eval).value();
    const auto p = batch_psnr(x, xr, pixel_max);
    std::copy(p.begin(), p.end(), out.begin() + start);
  });
  return out;
}

Evaluation evaluate(ModelTriple& models, const DatasetSplit& data, const EvaluationOptions& options) {
  if (options.n_gen < 1) throw ConfigError("n_gen must be >= 1");
  const SampleCollection& split = data.split(options.split);
  const std::int64_t n = split.size();
  if (n < 2) throw DataError("split '" + options.split + "' has fewer than 2 samples");
  Evaluation ev;
  auto& r = ev.report;
  r.model_tag = options.model_tag;
  r.dataset = data.name;
  r.split = options.split;
  r.k = options.k;
  r.pr_rule = to_string(options.pr_rule);
  r.embedding = to_string(options.embedding);

  const std::int64_t d = shape_numel(data.image_shape);
  RowMatrix real(n, d), recon(n, d);
  ev.psnr.resize(static_cast<std::size_t>(n));
  ev.encoded_norms.resize(static_cast<std::size_t>(n));
  for_chunks(n, 256, [&](std::int64_t start, const std::vector<std::int64_t>& idx) {
    const Tensor x = split.batch(idx);
    const Tensor z = models.encoder.forward(nn::Var::constant(x), Mode::eval).value();
    const Tensor xr = models.generator.forward(nn::Var::constant(z), Mode::eval).value();
    const auto p = batch_psnr(x, xr, data.pixel_max);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto row = static_cast<std::int64_t>(start + static_cast<std::int64_t>(i));
      ev.psnr[static_cast<std::size_t>(row)] = p[i];
      double sq = 0.0;
      for (double v : z.row(static_cast<std::int64_t>(i))) sq += v * v;
      ev.encoded_norms[static_cast<std::size_t>(row)] = std::sqrt(sq);
    }
    real.middleRows(start, x.rows()) = x.matrix(x.rows(), d);
    recon.middleRows(start, x.rows()) = xr.matrix(x.rows(), d);
  });

  Rng gen_rng(derive_seed(options.seed, 7));
  RowMatrix fake(options.n_gen, d);
  for_chunks(options.n_gen, 256, [&](std::int64_t start, const std::vector<std::int64_t>& idx) {
    const Tensor z = prior_batch(gen_rng, static_cast<std::int64_t>(idx.size()), models.latent_dim());
    const Tensor g = models.generator.forward(nn::Var::constant(z), Mode::eval).value();
    fake.middleRows(start, g.rows()) = g.matrix(g.rows(), d);
  });

  EmbeddingSet real_emb, fake_emb;
  if (options.embedding == EmbeddingSource::raw_pca) {
    int dim = options.pca_dim;
    if (dim > d) throw ConfigError("pca_dim " + std::to_string(dim) + " exceeds image dimension " + std::to_string(d));
    if (n <= dim) {
      r.warnings.push_back("split has " + std::to_string(n) + " samples; embedding moments need at least " +
                           std::to_string(dim + 1) + "; using " + std::to_string(n - 1) + " components");
      dim = static_cast<int>(n - 1);
    }
    const auto pca = PcaEmbedder::fit(real, dim);
    real_emb = pca.embed(real);
    fake_emb = pca.embed(fake);
  } else {
    Network extractor = load_feature_extractor(options.external_model);
    Shape shape{n};
    shape.insert(shape.end(), data.image_shape.begin(), data.image_shape.end());
    Tensor rt(shape);
    rt.as_matrix() = real;
    shape[0] = options.n_gen;
    Tensor ft(shape);
    ft.as_matrix() = fake;
    real_emb = embed_with_network(extractor, rt);
    fake_emb = embed_with_network(extractor, ft);
  }
  if (n <= real_emb.dim() || options.n_gen <= real_emb.dim()) {
    r.warnings.push_back("fewer samples than embedding dimension + 1; FID covariance is rank deficient");
  }
  r.fid = fid(real_emb, fake_emb);
  const auto pr = precision_recall(real_emb, fake_emb, options.k, options.pr_rule);
  r.precision = pr.precision;
  r.recall = pr.recall;

  std::vector<double> capped(ev.psnr.size());
  std::transform(ev.psnr.begin(), ev.psnr.end(), capped.begin(), cap_psnr);
  double sum = 0.0;
  for (double v : capped) sum += v;
  r.psnr_mean = sum / static_cast<double>(capped.size());
  r.psnr_p10 = percentile(capped, 10);
  r.psnr_p50 = percentile(capped, 50);
  r.psnr_p90 = percentile(capped, 90);

  Rng prior_rng(derive_seed(options.seed, 8));
  ev.prior_norms.resize(static_cast<std::size_t>(options.prior_norm_samples));
  for (auto& v : ev.prior_norms) {
    double sq = 0.0;
    for (int k = 0; k < models.latent_dim(); ++k) {
      const double zk = prior_rng.normal();
      sq += zk * zk;
    }
    v = std::sqrt(sq);
  }
  return ev;
}

Evaluation evaluate(const RunManifest& manifest, const DatasetSplit& data, const EvaluationOptions& options) {
  if (manifest.image_shape != data.image_shape) {
    throw ConfigError("manifest image shape " + to_string(manifest.image_shape) + " does not match dataset " +
                      to_string(data.image_shape));
  }
  ModelTriple models = load_models(manifest);
  return evaluate(models, data, options);
}

void write_evaluation(const Evaluation& eval, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "metrics.json");
    os << eval.report.to_json().dump(2) << '\n';
  }
  {
    std::ofstream os(dir / "metrics.csv");
    os << metrics_csv_header() << '\n';
    write_metrics_csv_row(os, eval.report);
  }
  {
    std::ofstream os(dir / "psnr.csv");
    os << "sample_index,psnr\n" << std::setprecision(17);
    for (std::size_t i = 0; i < eval.psnr.size(); ++i) os << i << ',' << cap_psnr(eval.psnr[i]) << '\n';
  }
  {
    std::ofstream os(dir / "norms.csv");
    os << "source,index,norm\n" << std::setprecision(17);
    for (std::size_t i = 0; i < eval.encoded_norms.size(); ++i) os << "encoded," << i << ',' << eval.encoded_norms[i] << '\n';
    for (std::size_t i = 0; i < eval.prior_norms.size(); ++i) os << "prior," << i << ',' << eval.prior_norms[i] << '\n';
  }
}

}  // namespace eqgan
