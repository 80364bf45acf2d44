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

#include "eqgan/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "eqgan/hash.hpp"

namespace eqgan {

std::string to_string(TempSchedule s) { return s == TempSchedule::linear ? "linear" : "sigmoidal"; }

TempSchedule temp_schedule_from_string(const std::string& s) {
  if (s == "linear") return TempSchedule::linear;
  if (s == "sigmoidal") return TempSchedule::sigmoidal;
  throw ConfigError("unknown temperature schedule '" + s + "'");
}

void AISConfig::validate() const {
  if (!(sigma > 0) || !std::isfinite(sigma)) throw ConfigError("ais sigma must be > 0");
  if (n_temps < 2) throw ConfigError("ais n_temps must be >= 2");
  if (n_chains < 1) throw ConfigError("ais n_chains must be >= 1");
  if (!(transition.step_size > 0)) throw ConfigError("ais step_size must be > 0");
  if (transition.n_steps_per_temp < 1) throw ConfigError("ais n_steps_per_temp must be >= 1");
  if (!(transition.target_accept > 0 && transition.target_accept < 1)) {
    throw ConfigError("ais target_accept must be in (0, 1)");
  }
  if (!(transition.adapt_rate >= 0)) throw ConfigError("ais adapt_rate must be >= 0");
}

std::vector<double> AISConfig::betas() const {
  validate();
  const int last = n_temps - 1;
  std::vector<double> b(static_cast<std::size_t>(n_temps));
  if (schedule == TempSchedule::linear) {
    for (int t = 0; t <= last; ++t) b[static_cast<std::size_t>(t)] = static_cast<double>(t) / last;
  } else {
    constexpr double kSharpness = 4.0;
    auto s = [&](int t) { return 1.0 / (1.0 + std::exp(-kSharpness * (2.0 * t / last - 1.0))); };
    const double lo = s(0), hi = s(last);
    for (int t = 0; t <= last; ++t) b[static_cast<std::size_t>(t)] = (s(t) - lo) / (hi - lo);
  }
  b.front() = 0.0;
  b.back() = 1.0;
  return b;
}

nlohmann::json AISConfig::to_json() const {
  return {{"sigma", sigma},
          {"n_temps", n_temps},
          {"schedule", to_string(schedule)},
          {"n_chains", n_chains},
          {"step_size", transition.step_size},
          {"n_steps_per_temp", transition.n_steps_per_temp},
          {"target_accept", transition.target_accept},
          {"adapt_rate", transition.adapt_rate},
          {"seed", seed}};
}

std::string AISConfig::hash() const {
  Fnv1a h;
  h.mix(to_json().dump());
  return h.hex();
}

BatchGenerator network_generator(Network& generator) {
  return [&generator](const Tensor& z) { return generator.forward(nn::Var::constant(z), Mode::eval).value(); };
}

BatchGenerator linear_generator(const LinearGaussianParams& params, Shape sample_shape) {
  if (shape_numel(sample_shape) != params.a.rows()) {
    throw ShapeError("linear_generator: sample shape " + to_string(sample_shape) + " does not match A");
  }
  return [params, sample_shape](const Tensor& z) {
    const std::int64_t batch = z.rows();
    if (z.row_size() != params.a.cols()) throw ShapeError("linear_generator: latent size mismatch");
    Shape out_shape{batch};
    out_shape.insert(out_shape.end(), sample_shape.begin(), sample_shape.end());
    Tensor x(out_shape);
    auto xm = x.matrix(batch, params.a.rows());
    xm.noalias() = z.matrix(batch, params.a.cols()) * params.a.transpose();
    xm.rowwise() += params.b.transpose();
    return x;
  };
}

double log_obs_density(std::span<const double> x_target, std::span<const double> mean, double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("log_obs_density: sigma must be > 0");
  if (x_target.size() != mean.size()) throw ShapeError("log_obs_density: target and mean differ in size");
  double sse = 0.0;
  for (std::size_t i = 0; i < x_target.size(); ++i) {
    const double r = x_target[i] - mean[i];
    sse += r * r;
  }
  const double d = static_cast<double>(x_target.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma) - sse / (2.0 * sigma * sigma);
}

double log_obs_density(std::span<const double> x_target, std::span<const double> z, const BatchGenerator& generator,
                       double sigma) {
  Tensor zt({1, static_cast<std::int64_t>(z.size())}, std::vector<double>(z.begin(), z.end()));
  const Tensor mean = generator(zt);
  return log_obs_density(x_target, mean.data(), sigma);
}

namespace {

// Per-chain log p(x | z) for a (chains, latent) batch.
std::vector<double> chain_log_likelihood(std::span<const double> x_target, const Tensor& z,
                                         const BatchGenerator& generator, double sigma) {
  const Tensor mean = generator(z);
  if (mean.rows() != z.rows() || mean.row_size() != static_cast<std::int64_t>(x_target.size())) {
    throw ShapeError("ais: generator output " + to_string(mean.shape()) + " does not match target of size " +
                     std::to_string(x_target.size()));
  }
  std::vector<double> ll(static_cast<std::size_t>(z.rows()));
  for (std::int64_t c = 0; c < z.rows(); ++c) ll[static_cast<std::size_t>(c)] = log_obs_density(x_target, mean.row(c), sigma);
  return ll;
}

double log_prior(std::span<const double> z) {
  double sq = 0.0;
  for (double v : z) sq += v * v;
  return -0.5 * sq;  // constant cancels in Metropolis ratios
}

}  // namespace

LikelihoodRecord ais_marginal(std::span<const double> x_target, int latent_dim, const BatchGenerator& generator,
                              const AISConfig& config, std::int64_t sample_index) {
  config.validate();
  if (latent_dim < 1) throw std::invalid_argument("ais: latent_dim must be >= 1");
  const auto betas = config.betas();
  const int chains = config.n_chains;
  Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(sample_index)));

  Tensor z({chains, latent_dim});
  for (auto& v : z.data()) v = rng.normal();
  std::vector<double> ll = chain_log_likelihood(x_target, z, generator, config.sigma);
  std::vector<double> log_w(static_cast<std::size_t>(chains), 0.0);
  double step = config.transition.step_size;
  Tensor proposal({chains, latent_dim});

  for (std::size_t t = 1; t < betas.size(); ++t) {
    const double db = betas[t] - betas[t - 1];
    for (int c = 0; c < chains; ++c) {
      log_w[static_cast<std::size_t>(c)] += db * ll[static_cast<std::size_t>(c)];
      if (!std::isfinite(log_w[static_cast<std::size_t>(c)])) {
        throw std::runtime_error("ais: non-finite log-weight at temperature index " + std::to_string(t) +
                                 " (sample " + std::to_string(sample_index) + ")");
      }
    }
    if (t + 1 == betas.size()) break;

    const double beta = betas[t];
    std::int64_t accepted = 0;
    for (int s = 0; s < config.transition.n_steps_per_temp; ++s) {
      for (std::int64_t i = 0; i < proposal.numel(); ++i) proposal[i] = z[i] + step * rng.normal();
      const auto ll_prop = chain_log_likelihood(x_target, proposal, generator, config.sigma);
      for (int c = 0; c < chains; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        const double log_ratio = log_prior(proposal.row(c)) + beta * ll_prop[ci] - log_prior(z.row(c)) - beta * ll[ci];
        const double u = rng.uniform();
        if (std::log(u) < log_ratio) {
          std::copy(proposal.row(c).begin(), proposal.row(c).end(), z.row(c).begin());
          ll[ci] = ll_prop[ci];
          ++accepted;
        }
      }
    }
    const double rate = static_cast<double>(accepted) / (chains * config.transition.n_steps_per_temp);
    step *= std::exp(config.transition.adapt_rate * (rate - config.transition.target_accept));
  }

  // log-mean-exp across chains and its delta-method standard error.
  const double max_w = *std::max_element(log_w.begin(), log_w.end());
  double mean = 0.0;
  std::vector<double> w(log_w.size());
  for (std::size_t c = 0; c < w.size(); ++c) {
    w[c] = std::exp(log_w[c] - max_w);
    mean += w[c];
  }
  mean /= static_cast<double>(chains);
  double var = 0.0;
  for (double v : w) var += (v - mean) * (v - mean);
  var = chains > 1 ? var / (chains - 1) : 0.0;

  LikelihoodRecord rec;
  rec.sample_index = sample_index;
  rec.log10_marginal = (max_w + std::log(mean)) / std::numbers::ln10;
  rec.std_error = std::sqrt(var / chains) / mean / std::numbers::ln10;
  rec.config_hash = config.hash();
  return rec;
}

// ---- training-set scoring ---------------------------------------------------

std::string scoring_hash(const AISConfig& config, const ModelTriple& triple, const SampleCollection& samples) {
  Fnv1a h;
  h.mix(config.hash());
  std::ostringstream models;
  triple.generator.write(models);
  triple.encoder.write(models);
  h.mix(models.str());
  const auto n = samples.size();
  h.mix(&n, sizeof n);
  h.mix(samples.bytes().data(), samples.bytes().size());
  h.mix(samples.floats().data(), samples.floats().size() * sizeof(float));
  return h.hex();
}

namespace {

constexpr const char* kProgressMagic = "# eqgan-ais-progress hash=";
constexpr const char* kProgressColumns = "sample_index,log10_marginal,std_error";

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<LikelihoodRecord> read_progress(const std::filesystem::path& path, const std::string& run_hash,
                                            const std::string& config_hash) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read scoring progress " + path.string());
  std::string line;
  std::getline(is, line);
  if (line.rfind(kProgressMagic, 0) != 0) throw std::runtime_error(path.string() + ": not a scoring progress file");
  const std::string found = line.substr(std::string(kProgressMagic).size());
  if (found != run_hash) {
    throw std::runtime_error(path.string() + ": progress written for a different config/checkpoint (hash " + found +
                             ", expected " + run_hash + ")");
  }
  std::getline(is, line);
  if (line != kProgressColumns) throw std::runtime_error(path.string() + ": unexpected progress columns");
  std::vector<LikelihoodRecord> records;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    LikelihoodRecord r;
    char* end = nullptr;
    r.sample_index = std::strtoll(line.c_str(), &end, 10);
    if (*end != ',') throw std::runtime_error(path.string() + ": malformed progress row");
    r.log10_marginal = std::strtod(end + 1, &end);
    if (*end != ',') throw std::runtime_error(path.string() + ": malformed progress row");
    r.std_error = std::strtod(end + 1, &end);
    r.config_hash = config_hash;
    if (r.sample_index != static_cast<std::int64_t>(records.size())) {
      throw std::runtime_error(path.string() + ": progress rows out of order");
    }
    records.push_back(r);
  }
  return records;
}

}  // namespace

ScoringResult score_training_set(const SampleCollection& samples, ModelTriple& triple, const AISConfig& config,
                                 const ScoringOptions& options) {
  config.validate();
  if (options.chunk_size < 1) throw ConfigError("scoring chunk_size must be >= 1");
  if (samples.sample_shape() != triple.image_shape()) {
    throw ShapeError("score_training_set: samples " + to_string(samples.sample_shape()) + " vs model " +
                     to_string(triple.image_shape()));
  }
  ScoringResult result;
  result.run_hash = scoring_hash(config, triple, samples);
  const std::string config_hash = config.hash();

  std::ofstream progress;
  if (!options.progress_path.empty()) {
    if (std::filesystem::exists(options.progress_path)) {
      result.records = read_progress(options.progress_path, result.run_hash, config_hash);
      progress.open(options.progress_path, std::ios::app);
    } else {
      progress.open(options.progress_path);
      progress << kProgressMagic << result.run_hash << '\n' << kProgressColumns << '\n';
    }
    if (!progress) throw std::runtime_error("cannot write scoring progress " + options.progress_path.string());
  }

  const auto generator = network_generator(triple.generator);
  const std::int64_t n = samples.size();
  std::int64_t chunks = 0;
  for (std::int64_t start = static_cast<std::int64_t>(result.records.size()); start < n; start += options.chunk_size) {
    if (options.max_chunks >= 0 && chunks >= options.max_chunks) break;
    const std::int64_t end = std::min(n, start + options.chunk_size);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(end - start));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + static_cast<std::int64_t>(i);
    const Tensor x = samples.batch(idx);
    const Tensor z = triple.encoder.forward(nn::Var::constant(x), Mode::eval).value();
    const Tensor recon = triple.generator.forward(nn::Var::constant(z), Mode::eval).value();
    for (std::int64_t i = 0; i < end - start; ++i) {
      auto rec = ais_marginal(recon.row(i), triple.latent_dim(), generator, config, start + i);
      if (progress.is_open()) {
        progress << rec.sample_index << ',' << format_double(rec.log10_marginal) << ','
                 << format_double(rec.std_error) << '\n';
      }
      result.records.push_back(std::move(rec));
    }
    if (progress.is_open()) progress.flush();
    ++chunks;
  }

  result.complete = static_cast<std::int64_t>(result.records.size()) == n;
  if (result.complete) {
    std::vector<double> scores;
    scores.reserve(result.records.size());
    for (const auto& r : result.records) scores.push_back(r.log10_marginal);
    result.table = ScoreTable::from_scores(std::move(scores));
  }
  return result;
}

void write_likelihood_csv(const std::filesystem::path& path, std::span<const LikelihoodRecord> records,
                          std::span<const double> psnr) {
  if (!psnr.empty() && psnr.size() != records.size()) {
    throw std::invalid_argument("psnr column must have one value per record");
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "sample_index,log10_marginal,std_error" << (psnr.empty() ? "" : ",psnr") << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    os << r.sample_index << ',' << r.log10_marginal << ',' << r.std_error;
    if (!psnr.empty()) os << ',' << psnr[i];
    os << '\n';
  }
}

void write_ais_sidecar(const std::filesystem::path& path, const AISConfig& config, const std::string& run_hash) {
  nlohmann::json j;
  j["ais_config"] = config.to_json();
  j["config_hash"] = config.hash();
  j["run_hash"] = run_hash;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

}  // namespace eqgan
