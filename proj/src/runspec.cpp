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

#include "eqgan/runspec.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <type_traits>

#include "eqgan/errors.hpp"

namespace fs = std::filesystem;

namespace eqgan {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError(key + ": cannot parse '" + value + "' as " + expected);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = first + value.size();
  if (!value.empty() && value[0] == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last || value.empty()) {
    bad_value(key, value, std::is_floating_point_v<T> ? "a number" : "an integer");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out)) bad_value(key, value, "a finite number");
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, double>) {
    return format_double(v);
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, fs::path>) {
    return v.string();
  } else {
    return std::to_string(v);
  }
}

template <typename T>
T parse_value(const std::string& key, const std::string& value) {
  if constexpr (std::is_same_v<T, std::string>) {
    return value;
  } else if constexpr (std::is_same_v<T, fs::path>) {
    return fs::path(value);
  } else {
    return parse_number<T>(key, value);
  }
}

Shape parse_shape(const std::string& key, const std::string& value) {
  Shape out;
  std::stringstream ss(value);
  std::string part;
  while (std::getline(ss, part, 'x')) out.push_back(parse_number<std::int64_t>(key, trim(part)));
  if (out.size() != 3) bad_value(key, value, "CxHxW");
  return out;
}

std::string format_shape(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

struct Field {
  std::string name;
  std::string help;
  std::function<std::string(const RunSpec&)> get;
  std::function<void(RunSpec&, const std::string&)> set;
};

template <typename Ref>
Field scalar(std::string name, std::string help, Ref ref) {
  using T = std::remove_cvref_t<decltype(ref(std::declval<RunSpec&>()))>;
  const std::string key = name;
  return {std::move(name), std::move(help), [ref](const RunSpec& s) { return format_value(ref(s)); },
          [ref, key](RunSpec& s, const std::string& v) { ref(s) = parse_value<T>(key, v); }};
}

template <typename E>
Field enumeration(std::string name, std::string help, E& (*ref)(RunSpec&), std::string (*show)(E),
                  E (*read)(const std::string&)) {
  return {std::move(name), std::move(help), [ref, show](const RunSpec& s) { return show(ref(const_cast<RunSpec&>(s))); },
          [ref, read](RunSpec& s, const std::string& v) { ref(s) = read(v); }};
}

std::string show_loss(losses::GeneratorLoss l) {
  return l == losses::GeneratorLoss::saturating ? "saturating" : "non_saturating";
}
losses::GeneratorLoss read_loss(const std::string& s) {
  if (s == "saturating") return losses::GeneratorLoss::saturating;
  if (s == "non_saturating") return losses::GeneratorLoss::non_saturating;
  throw ConfigError("ge_loss must be saturating or non_saturating, got '" + s + "'");
}
std::string show_kind(SyntheticKind k) {
  return k == SyntheticKind::linear_gaussian ? "linear_gaussian" : "gaussian_mixture_images";
}
std::string show_variant(Variant v) { return to_string(v); }
std::string show_arch(Architecture a) { return to_string(a); }
std::string show_schedule(TempSchedule t) { return to_string(t); }
std::string show_embedding(EmbeddingSource e) { return to_string(e); }
std::string show_rule(PrRule r) { return to_string(r); }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    // data
    f.push_back(scalar("dataset", "synthetic, file, cifar10, fmnist or celeba",
                       [](auto& s) -> auto& { return s.dataset; }));
    f.push_back(scalar("data_root", "image dataset root; empty uses $EQGAN_DATA_ROOT",
                       [](auto& s) -> auto& { return s.data_root; }));
    f.push_back(scalar("dataset_file", "saved synthetic container, used when dataset = file",
                       [](auto& s) -> auto& { return s.dataset_file; }));
    f.push_back(enumeration<SyntheticKind>(
        "synthetic_kind", "gaussian_mixture_images or linear_gaussian",
        [](RunSpec& s) -> SyntheticKind& { return s.synthetic.kind; }, show_kind, synthetic_kind_from_string));
    f.push_back(scalar("synthetic_samples", "training samples",
                       [](auto& s) -> auto& { return s.synthetic.n_samples; }));
    f.push_back(scalar("synthetic_validation", "validation samples; -1 uses a quarter of the training count",
                       [](auto& s) -> auto& { return s.synthetic.n_validation; }));
    f.push_back(scalar("synthetic_test", "test samples; -1 uses a quarter of the training count",
                       [](auto& s) -> auto& { return s.synthetic.n_test; }));
    f.push_back({"synthetic_shape", "image shape as CxHxW",
                 [](const RunSpec& s) { return format_shape(s.synthetic.image_shape); },
                 [](RunSpec& s, const std::string& v) { s.synthetic.image_shape = parse_shape("synthetic_shape", v); }});
    f.push_back(scalar("synthetic_seed", "generator seed", [](auto& s) -> auto& { return s.synthetic.seed; }));
    f.push_back(scalar("synthetic_components", "mixture components",
                       [](auto& s) -> auto& { return s.synthetic.n_components; }));
    f.push_back(scalar("synthetic_hard_fraction", "share of samples from textured hard components",
                       [](auto& s) -> auto& { return s.synthetic.hard_fraction; }));
    f.push_back(scalar("synthetic_latent_dim", "latent size of the linear-Gaussian generator",
                       [](auto& s) -> auto& { return s.synthetic.latent_dim; }));
    f.push_back(scalar("synthetic_sigma", "observation noise of the linear-Gaussian generator",
                       [](auto& s) -> auto& { return s.synthetic.sigma; }));
    f.push_back(scalar("celeba_crop", "center crop side before resizing",
                       [](auto& s) -> auto& { return s.celeba.crop_size; }));
    f.push_back(scalar("celeba_size", "output image side", [](auto& s) -> auto& { return s.celeba.image_size; }));
    // training
    f.push_back(enumeration<Variant>("variant", "mdgan, p_mdgan, p_mdgan_mleq or ep_mdgan",
                                     [](RunSpec& s) -> Variant& { return s.train.variant; }, show_variant,
                                     variant_from_string));
    f.push_back(scalar("lambda_cyc", "reconstruction loss weight", [](auto& s) -> auto& { return s.train.lambda_cyc; }));
    f.push_back({"sampler_mode", "auto, uniform, static_ll or dynamic_psnr; auto follows the variant",
                 [](const RunSpec& s) { return s.sampler_mode_auto ? std::string("auto") : to_string(s.train.sampler.mode); },
                 [](RunSpec& s, const std::string& v) {
                   if (v == "auto") {
                     s.sampler_mode_auto = true;
                   } else {
                     s.train.sampler.mode = sampler_mode_from_string(v);
                     s.sampler_mode_auto = false;
                   }
                 }});
    f.push_back(scalar("lambda_perc", "share of each batch drawn by rank, in [0, 1]",
                       [](auto& s) -> auto& { return s.train.sampler.lambda_perc; }));
    f.push_back(scalar("lambda_dist", "rank exponent, >= 0", [](auto& s) -> auto& { return s.train.sampler.lambda_dist; }));
    f.push_back(scalar("sampler_warmup_epochs", "dynamic mode: uniform epochs before weighting",
                       [](auto& s) -> auto& { return s.train.sampler.warmup_epochs; }));
    f.push_back(scalar("sampler_refresh_period", "dynamic mode: full rescoring every n joint steps (0 = never)",
                       [](auto& s) -> auto& { return s.train.sampler.refresh_period; }));
    f.push_back(scalar("sampler_seed", "extra seed mixed into batch selection",
                       [](auto& s) -> auto& { return s.train.sampler.seed; }));
    f.push_back(scalar("lambda_norm", "initial prior-norm penalty weight",
                       [](auto& s) -> auto& { return s.train.controller.lambda_norm; }));
    f.push_back(scalar("controller_warmup_epochs", "epochs with lambda_norm held fixed",
                       [](auto& s) -> auto& { return s.train.controller.warmup_epochs; }));
    f.push_back(scalar("controller_step_rate", "log-gain per unit variance ratio error",
                       [](auto& s) -> auto& { return s.train.controller.step_rate; }));
    f.push_back(scalar("lambda_norm_min", "lower clip for lambda_norm",
                       [](auto& s) -> auto& { return s.train.controller.lambda_min; }));
    f.push_back(scalar("lambda_norm_max", "upper clip for lambda_norm",
                       [](auto& s) -> auto& { return s.train.controller.lambda_max; }));
    f.push_back(scalar("epochs", "training epochs", [](auto& s) -> auto& { return s.train.epochs; }));
    f.push_back(scalar("batch_size", "samples per batch", [](auto& s) -> auto& { return s.train.batch_size; }));
    f.push_back(scalar("latent_dim", "latent size", [](auto& s) -> auto& { return s.train.latent_dim; }));
    f.push_back(scalar("lr", "initial Adam learning rate", [](auto& s) -> auto& { return s.train.optimizer.lr; }));
    f.push_back(scalar("beta1", "Adam first-moment decay", [](auto& s) -> auto& { return s.train.optimizer.beta1; }));
    f.push_back(scalar("beta2", "Adam second-moment decay", [](auto& s) -> auto& { return s.train.optimizer.beta2; }));
    f.push_back(scalar("adam_eps", "Adam denominator offset", [](auto& s) -> auto& { return s.train.optimizer.eps; }));
    f.push_back(scalar("lr_decay_factor", "per-epoch learning rate factor after the decay start",
                       [](auto& s) -> auto& { return s.train.lr_decay.factor; }));
    f.push_back(scalar("lr_decay_start", "last epoch at the initial learning rate",
                       [](auto& s) -> auto& { return s.train.lr_decay.start_epoch; }));
    f.push_back(scalar("d_steps_per_ge_step", "discriminator updates per joint update",
                       [](auto& s) -> auto& { return s.train.d_steps_per_ge_step; }));
    f.push_back(scalar("seed", "training seed", [](auto& s) -> auto& { return s.train.seed; }));
    f.push_back(enumeration<Architecture>("architecture", "auto, conv or toy",
                                          [](RunSpec& s) -> Architecture& { return s.train.architecture; }, show_arch,
                                          architecture_from_string));
    f.push_back(scalar("toy_width", "hidden width of the fully connected networks",
                       [](auto& s) -> auto& { return s.train.toy_width; }));
    f.push_back(enumeration<losses::GeneratorLoss>(
        "ge_loss", "non_saturating or saturating adversarial loss for G and E",
        [](RunSpec& s) -> losses::GeneratorLoss& { return s.train.ge_loss; }, show_loss, read_loss));
    f.push_back(scalar("checkpoint_every", "epochs between checkpoints",
                       [](auto& s) -> auto& { return s.train.checkpoint_every; }));
    f.push_back(scalar("prior_mc", "Monte Carlo draws for the prior norm variance",
                       [](auto& s) -> auto& { return s.train.prior_mc; }));
    // likelihood scoring
    f.push_back(scalar("ais_sigma", "observation noise in normalized units", [](auto& s) -> auto& { return s.ais.sigma; }));
    f.push_back(scalar("ais_temps", "inverse temperatures, endpoints included",
                       [](auto& s) -> auto& { return s.ais.n_temps; }));
    f.push_back(enumeration<TempSchedule>("ais_schedule", "linear or sigmoidal",
                                          [](RunSpec& s) -> TempSchedule& { return s.ais.schedule; }, show_schedule,
                                          temp_schedule_from_string));
    f.push_back(scalar("ais_chains", "independent chains per sample", [](auto& s) -> auto& { return s.ais.n_chains; }));
    f.push_back(scalar("ais_step_size", "initial random-walk scale",
                       [](auto& s) -> auto& { return s.ais.transition.step_size; }));
    f.push_back(scalar("ais_steps_per_temp", "Metropolis steps per temperature",
                       [](auto& s) -> auto& { return s.ais.transition.n_steps_per_temp; }));
    f.push_back(scalar("ais_target_accept", "acceptance rate targeted by step-size adaptation",
                       [](auto& s) -> auto& { return s.ais.transition.target_accept; }));
    f.push_back(scalar("ais_adapt_rate", "step-size adaptation gain",
                       [](auto& s) -> auto& { return s.ais.transition.adapt_rate; }));
    f.push_back(scalar("ais_seed", "scoring seed", [](auto& s) -> auto& { return s.ais.seed; }));
    f.push_back(scalar("score_split", "split scored by the likelihood pass",
                       [](auto& s) -> auto& { return s.score_split; }));
    f.push_back(scalar("score_chunk", "samples per resumable scoring chunk",
                       [](auto& s) -> auto& { return s.score_chunk; }));
    f.push_back({"phase1_lambda_cyc", "reconstruction weight of the first pipeline phase; empty uses lambda_cyc",
                 [](const RunSpec& s) { return s.phase1_lambda_cyc ? format_double(*s.phase1_lambda_cyc) : std::string(); },
                 [](RunSpec& s, const std::string& v) {
                   if (v.empty()) {
                     s.phase1_lambda_cyc.reset();
                   } else {
                     s.phase1_lambda_cyc = parse_number<double>("phase1_lambda_cyc", v);
                   }
                 }});
    // evaluation
    f.push_back(scalar("eval_n_gen", "generated samples for FID and precision/recall",
                       [](auto& s) -> auto& { return s.eval.n_gen; }));
    f.push_back(scalar("eval_split", "reference split", [](auto& s) -> auto& { return s.eval.split; }));
    f.push_back(enumeration<EmbeddingSource>(
        "eval_embedding", "raw_pca or external_model_file",
        [](RunSpec& s) -> EmbeddingSource& { return s.eval.embedding; }, show_embedding, embedding_source_from_string));
    f.push_back(scalar("eval_pca_dim", "PCA embedding size", [](auto& s) -> auto& { return s.eval.pca_dim; }));
    f.push_back(scalar("eval_external_model", "feature extractor file for external_model_file",
                       [](auto& s) -> auto& { return s.eval.external_model; }));
    f.push_back(scalar("eval_k", "neighbourhood size for precision/recall", [](auto& s) -> auto& { return s.eval.k; }));
    f.push_back(enumeration<PrRule>("eval_pr_rule", "nearest_neighbor or union_of_balls",
                                    [](RunSpec& s) -> PrRule& { return s.eval.pr_rule; }, show_rule,
                                    pr_rule_from_string));
    f.push_back(scalar("eval_seed", "evaluation seed", [](auto& s) -> auto& { return s.eval.seed; }));
    f.push_back(scalar("eval_prior_samples", "prior draws for the norm histogram",
                       [](auto& s) -> auto& { return s.eval.prior_norm_samples; }));
    f.push_back(scalar("report_percentile", "tail share (percent) for the improvement histograms",
                       [](auto& s) -> auto& { return s.report_percentile; }));
    return f;
  }();
  return table;
}

const Field& find_field(const std::string& key) {
  static const std::map<std::string, const Field*> index = [] {
    std::map<std::string, const Field*> m;
    for (const auto& f : fields()) m[f.name] = &f;
    return m;
  }();
  const auto it = index.find(key);
  if (it == index.end()) throw ConfigError("unknown key '" + key + "'");
  return *it->second;
}

bool valid_split(const std::string& s) { return s == "train" || s == "validation" || s == "test"; }

}  // namespace

const std::vector<SpecKey>& spec_keys() {
  static const std::vector<SpecKey> keys = [] {
    std::vector<SpecKey> k;
    for (const auto& f : fields()) k.push_back({f.name, f.help});
    return k;
  }();
  return keys;
}

void set_spec_value(RunSpec& spec, const std::string& key, const std::string& value) {
  find_field(key).set(spec, value);
}

std::string get_spec_value(const RunSpec& spec, const std::string& key) { return find_field(key).get(spec); }

void apply_assignment(RunSpec& spec, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set_spec_value(spec, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

TrainConfig RunSpec::resolved_train_config() const {
  TrainConfig c = train;
  if (sampler_mode_auto) c.apply_variant();
  return c;
}

void RunSpec::validate() const {
  if (dataset == "file") {
    if (dataset_file.empty()) throw ConfigError("dataset_file is required when dataset = file");
  } else if (dataset != "synthetic") {
    expected_split_sizes(dataset);
  }
  if (synthetic.n_samples < 1) throw ConfigError("synthetic_samples must be >= 1");
  if (!(synthetic.hard_fraction >= 0 && synthetic.hard_fraction <= 1)) {
    throw ConfigError("synthetic_hard_fraction must be in [0, 1]");
  }
  for (auto d : synthetic.image_shape) {
    if (d < 1) throw ConfigError("synthetic_shape entries must be >= 1");
  }
  resolved_train_config().validate();
  ais.validate();
  if (!valid_split(score_split)) throw ConfigError("score_split must be train, validation or test");
  if (score_chunk < 1) throw ConfigError("score_chunk must be >= 1");
  if (phase1_lambda_cyc && *phase1_lambda_cyc < 0) throw ConfigError("phase1_lambda_cyc must be >= 0");
  if (eval.n_gen < 1) throw ConfigError("eval_n_gen must be >= 1");
  if (!valid_split(eval.split)) throw ConfigError("eval_split must be train, validation or test");
  if (eval.pca_dim < 1) throw ConfigError("eval_pca_dim must be >= 1");
  if (eval.k < 1) throw ConfigError("eval_k must be >= 1");
  if (eval.prior_norm_samples < 1) throw ConfigError("eval_prior_samples must be >= 1");
  if (eval.embedding == EmbeddingSource::external_model_file && eval.external_model.empty()) {
    throw ConfigError("eval_external_model is required for external_model_file embeddings");
  }
  if (!(report_percentile > 0 && report_percentile <= 50)) throw ConfigError("report_percentile must be in (0, 50]");
}

RunSpec parse_run_spec(std::istream& is, RunSpec base) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_assignment(base, line);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunSpec load_run_spec(const fs::path& path, RunSpec base) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read spec file " + path.string());
  try {
    return parse_run_spec(is, std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_run_spec(std::ostream& os, const RunSpec& spec) {
  for (const auto& f : fields()) {
    os << "# " << f.help << '\n' << f.name << " = " << f.get(spec) << '\n';
  }
}

void save_run_spec(const fs::path& path, const RunSpec& spec) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_run_spec(os, spec);
}

bool equivalent(const RunSpec& a, const RunSpec& b) {
  return std::all_of(fields().begin(), fields().end(), [&](const Field& f) { return f.get(a) == f.get(b); });
}

// ---- presets ---------------------------------------------------------------------------

namespace {

struct PresetEntry {
  std::string name;
  std::function<RunSpec()> make;
};

RunSpec image_base(const std::string& dataset, Variant v, double cyc, double perc = 0, double dist = 0) {
  RunSpec s;
  s.dataset = dataset;
  s.train.variant = v;
  s.train.lambda_cyc = cyc;
  s.train.sampler.lambda_perc = perc;
  s.train.sampler.lambda_dist = dist;
  return s;
}

RunSpec toy_base(Variant v, double perc = 0, double dist = 0) {
  RunSpec s;
  s.dataset = "synthetic";
  s.synthetic.n_samples = 2048;
  s.synthetic.n_test = 2048;
  s.synthetic.hard_fraction = 0.25;
  s.synthetic.seed = 1;
  s.train.variant = v;
  s.train.sampler.lambda_perc = perc;
  s.train.sampler.lambda_dist = dist;
  s.train.architecture = Architecture::toy;
  s.train.latent_dim = 16;
  s.train.batch_size = 64;
  s.train.epochs = 300;
  s.train.ge_loss = losses::GeneratorLoss::saturating;
  s.train.controller.lambda_norm = 1.0;
  s.train.controller.warmup_epochs = 50;
  s.train.controller.step_rate = 0.05;
  s.ais.sigma = 0.2;
  s.ais.n_chains = 8;
  s.ais.transition.n_steps_per_temp = 3;
  s.eval.n_gen = 2048;
  return s;
}

const std::vector<PresetEntry>& presets() {
  static const std::vector<PresetEntry> table = {
      {"cifar10-mdgan", [] { return image_base("cifar10", Variant::mdgan, 8); }},
      {"cifar10-p-mdgan", [] { return image_base("cifar10", Variant::p_mdgan, 7); }},
      {"cifar10-p-mdgan-mleq", [] { return image_base("cifar10", Variant::p_mdgan_mleq, 5, 0.5, 8); }},
      {"cifar10-ep-mdgan", [] { return image_base("cifar10", Variant::ep_mdgan, 3, 0.5, 12); }},
      {"fmnist-mdgan", [] { return image_base("fmnist", Variant::mdgan, 9); }},
      {"fmnist-p-mdgan", [] { return image_base("fmnist", Variant::p_mdgan, 9); }},
      {"fmnist-p-mdgan-mleq", [] { return image_base("fmnist", Variant::p_mdgan_mleq, 5, 0.8, 8); }},
      {"fmnist-ep-mdgan", [] { return image_base("fmnist", Variant::ep_mdgan, 3, 0.8, 4); }},
      {"celeba-mdgan", [] { return image_base("celeba", Variant::mdgan, 8); }},
      {"celeba-p-mdgan", [] { return image_base("celeba", Variant::p_mdgan, 7); }},
      {"celeba-ep-mdgan", [] { return image_base("celeba", Variant::ep_mdgan, 3, 0.5, 12); }},
      {"toy", [] { return toy_base(Variant::p_mdgan); }},
      {"toy-mdgan", [] { return toy_base(Variant::mdgan); }},
      {"toy-p-mdgan", [] { return toy_base(Variant::p_mdgan); }},
      {"toy-p-mdgan-mleq", [] { return toy_base(Variant::p_mdgan_mleq, 0.5, 8); }},
      {"toy-ep-mdgan", [] { return toy_base(Variant::ep_mdgan, 0.5, 8); }},
  };
  return table;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& p : presets()) out.push_back(p.name);
  return out;
}

RunSpec preset(const std::string& name) {
  for (const auto& p : presets()) {
    if (p.name == name) return p.make();
  }
  std::string known;
  for (const auto& p : presets()) known += (known.empty() ? "" : ", ") + p.name;
  throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
}

DatasetSplit load_data(const RunSpec& spec) {
  if (spec.dataset == "synthetic") return make_synthetic(spec.synthetic);
  if (spec.dataset == "file") return load_synthetic(spec.dataset_file);
  fs::path root = spec.data_root;
  if (root.empty()) {
    const char* env = std::getenv("EQGAN_DATA_ROOT");
    if (env == nullptr || *env == '\0') throw ConfigError("data_root is empty and EQGAN_DATA_ROOT is not set");
    root = env;
  }
  return load_dataset(spec.dataset, root, spec.celeba);
}

// ---- sweep grids -----------------------------------------------------------------------

std::vector<GridJob> parse_grid(std::istream& is) {
  std::vector<GridJob> jobs;
  std::string base;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.rfind("@preset", 0) == 0) {
      base = trim(line.substr(7));
      if (base.empty()) throw ConfigError("grid line " + std::to_string(lineno) + ": @preset needs a name");
      continue;
    }
    GridJob job{base, {}};
    std::stringstream ss(line);
    std::string token;
    while (ss >> token) {
      if (token.find('=') == std::string::npos) {
        throw ConfigError("grid line " + std::to_string(lineno) + ": expected key=value, got '" + token + "'");
      }
      job.assignments.push_back(token);
    }
    jobs.push_back(std::move(job));
  }
  return jobs;
}

std::vector<GridJob> load_grid(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read grid file " + path.string());
  return parse_grid(is);
}

}  // namespace eqgan
