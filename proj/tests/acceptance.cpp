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
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "eqgan/runspec.hpp"
#include "eqgan/trainer.hpp"
#include "oracles.hpp"

using namespace eqgan;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

std::vector<std::int64_t> shuffled_ranks(std::int64_t n, Rng& rng) {
  std::vector<std::int64_t> r(static_cast<std::size_t>(n));
  std::iota(r.begin(), r.end(), 1);
  std::shuffle(r.begin(), r.end(), rng.engine());
  return r;
}

SamplerConfig weighted(double perc, double dist) {
  SamplerConfig c;
  c.mode = SamplerMode::dynamic_psnr;
  c.lambda_perc = perc;
  c.lambda_dist = dist;
  return c;
}

fs::path work_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "eqgan_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---- 1 ----------------------------------------------------------------------

// Rank weights k^dist in 50-digit arithmetic, shared across lambda_perc values.
std::vector<oracle::Big> big_weights(std::int64_t n, double dist, oracle::Big& total) {
  std::vector<oracle::Big> w(static_cast<std::size_t>(n));
  total = 0;
  const auto exponent = static_cast<long>(dist);
  for (std::int64_t k = 1; k <= n; ++k) {
    w[static_cast<std::size_t>(k - 1)] = exponent == dist ? boost::multiprecision::pow(oracle::Big(k), exponent)
                                                          : boost::multiprecision::pow(oracle::Big(k), oracle::Big(dist));
    total += w[static_cast<std::size_t>(k - 1)];
  }
  return w;
}

Outcome sampler_exactness() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst_rel = 0.0, worst_tv = 0.0;
  const std::vector<double> percs{0.0, 0.5, 0.8, 1.0}, dists{0, 1, 4, 8, 12, 16};
  for (std::int64_t n : {4, 1000, 180540}) {
    const auto ranks = shuffled_ranks(n, rng);
    for (double dist : dists) {
      oracle::Big total;
      const auto w = big_weights(n, dist, total);
      for (double perc : percs) {
        const auto p = sampling_distribution(ranks, weighted(perc, dist));
        const oracle::Big flat = (oracle::Big(1) - oracle::Big(perc)) / oracle::Big(n);
        for (std::size_t i = 0; i < p.size(); ++i) {
          const auto expected =
              static_cast<double>(flat + oracle::Big(perc) * w[static_cast<std::size_t>(ranks[i] - 1)] / total);
          if (expected > 0) worst_rel = std::max(worst_rel, std::abs(p[i] - expected) / expected);
          else worst_rel = std::max(worst_rel, p[i] == 0.0 ? 0.0 : 1.0);
        }
        if (n > 1000) continue;
        // 1e5 batches of 128 draws.
        const IndexSampler sampler(p);
        std::vector<std::int64_t> counts(static_cast<std::size_t>(n), 0);
        const int batches = 100000, batch = 128;
        for (int b = 0; b < batches; ++b) {
          for (auto i : sampler.draw_batch(batch, rng)) ++counts[static_cast<std::size_t>(i)];
        }
        double tv = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
          tv += std::abs(static_cast<double>(counts[i]) / (static_cast<double>(batches) * batch) - p[i]);
        }
        worst_tv = std::max(worst_tv, 0.5 * tv);
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst_rel <= 1e-9 && worst_tv <= 0.01 && secs < 60.0,
          "max rel err " + fmt(worst_rel) + " (<= 1e-9), max TV " + fmt(worst_tv) + " (<= 0.01), " + fmt(secs, 3) +
              " s (< 60)"};
}

// ---- 2 ----------------------------------------------------------------------

Outcome rank_scaling_cancels() {
  Rng rng(102);
  double worst = 0.0;
  for (std::int64_t n : {4, 1000, 180540}) {
    const auto ranks = shuffled_ranks(n, rng);
    for (double dist : {0.0, 1.0, 4.0, 8.0, 12.0, 16.0}) {
      for (double perc : {0.0, 0.5, 0.8, 1.0}) {
        const auto plain = sampling_distribution(ranks, weighted(perc, dist));
        const auto scaled = sampling_distribution_scaled(ranks, weighted(perc, dist), 100.0);
        for (std::size_t i = 0; i < plain.size(); ++i) {
          const double scale = std::max(std::abs(plain[i]), std::abs(scaled[i]));
          if (scale > 0) worst = std::max(worst, std::abs(plain[i] - scaled[i]) / scale);
        }
      }
    }
  }
  return {worst <= 1e-12, "max rel diff " + fmt(worst) + " (<= 1e-12)"};
}

// ---- 3 ----------------------------------------------------------------------

bool same_at_4dp(double got, double expected) { return std::abs(got - expected) < 5e-5; }

Outcome psnr_examples() {
  const auto t0 = Clock::now();
  const std::vector<double> black(12, 0.0), white(12, 255.0);
  const double saturated = psnr(black, white, 255);
  const std::vector<double> x{10, 20, 30, 40}, y{11, 19, 31, 39};
  const double unit = psnr(x, y, 255);
  const double same = psnr(x, x, 255);
  const bool ok = same_at_4dp(saturated, 0.0) && same_at_4dp(unit, 48.1308) && std::isinf(same) && same > 0 &&
                  cap_psnr(same) == kPsnrCap && same_at_4dp(cap_psnr(same), 100.0);
  const double secs = seconds_since(t0);
  return {ok && secs < 10.0, "saturated " + fmt(saturated, 8) + " dB, unit MSE " + fmt(unit, 8) + " dB, identical " +
                                 fmt(same) + " (capped " + fmt(cap_psnr(same)) + ")"};
}

// ---- 4 ----------------------------------------------------------------------

Outcome ais_oracle() {
  const auto t0 = Clock::now();
  const int instances = 100;
  std::vector<double> mean_abs_err;
  int covered = 0;
  for (int temps : {10, 100, 1000}) {
    double total_err = 0.0;
    for (int inst = 0; inst < instances; ++inst) {
      Rng rng(derive_seed(104, static_cast<std::uint64_t>(inst)));
      const int latent = 1 + inst % 8;
      const int dim = std::min(16, latent + inst % 9);
      LinearGaussianParams p;
      p.a = RowMatrix(dim, latent);
      p.b = Eigen::VectorXd(dim);
      for (int i = 0; i < dim; ++i) {
        p.b(i) = rng.normal();
        for (int j = 0; j < latent; ++j) p.a(i, j) = rng.normal();
      }
      p.sigma = 0.5;
      Eigen::VectorXd z(latent);
      for (auto& v : z) v = rng.normal();
      Eigen::VectorXd x = p.a * z + p.b;
      for (auto& v : x) v += p.sigma * rng.normal();
      AISConfig c;
      c.sigma = p.sigma;
      c.n_temps = temps;
      c.seed = static_cast<std::uint64_t>(inst);
      c.transition.n_steps_per_temp = 5;
      const auto rec = ais_marginal(std::span<const double>(x.data(), static_cast<std::size_t>(dim)), latent,
                                    linear_generator(p, {dim}), c);
      const double truth = oracle::linear_gaussian_log_density(x, p.a, p.b, p.sigma) / std::numbers::ln10;
      const double err = rec.log10_marginal - truth;
      total_err += std::abs(err);
      if (temps == 1000 && std::abs(err) <= 3.0 * rec.std_error) ++covered;
    }
    mean_abs_err.push_back(total_err / instances);
  }
  const bool monotone = mean_abs_err[0] > mean_abs_err[1] && mean_abs_err[1] > mean_abs_err[2];
  const double secs = seconds_since(t0);
  return {covered >= 95 && monotone && secs < 600.0,
          "within 3 SE " + std::to_string(covered) + "/100 (>= 95), mean |err| " + fmt(mean_abs_err[0]) + " > " +
              fmt(mean_abs_err[1]) + " > " + fmt(mean_abs_err[2]) + ", " + fmt(secs, 3) + " s (< 600)"};
}

// ---- 5 and 6 ------------------------------------------------------------------

struct TrainedToy {
  DatasetSplit data;
  std::unique_ptr<Trainer> trainer;
};

TrainedToy train_toy(const std::string& preset_name, std::uint64_t seed, double hard_fraction,
                     const std::function<void(RunSpec&)>& adjust = {}) {
  RunSpec spec = preset(preset_name);
  spec.synthetic.hard_fraction = hard_fraction;
  spec.train.seed = seed;
  if (adjust) adjust(spec);
  spec.validate();
  TrainedToy t;
  t.data = load_data(spec);
  t.trainer = std::make_unique<Trainer>(spec.resolved_train_config(), t.data);
  t.trainer->run();
  return t;
}

std::vector<double> prior_norms(int latent_dim, std::int64_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (auto& v : out) {
    double s = 0.0;
    for (int j = 0; j < latent_dim; ++j) {
      const double z = rng.normal();
      s += z * z;
    }
    v = std::sqrt(s);
  }
  return out;
}

Outcome norm_regularizer_effect() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto p = train_toy("toy-p-mdgan", seed, 0.0);
    auto m = train_toy("toy-mdgan", seed, 0.0);
    const int latent = p.trainer->config().latent_dim;
    const auto prior = prior_norms(latent, 10000, derive_seed(seed, 5));
    const auto norms_p = p.trainer->encoded_norms(p.data.train);
    const auto norms_m = m.trainer->encoded_norms(m.data.train);
    const double mean_p = std::accumulate(norms_p.begin(), norms_p.end(), 0.0) / static_cast<double>(norms_p.size());
    const double ks_p = oracle::ks_statistic(norms_p, prior), ks_m = oracle::ks_statistic(norms_m, prior);
    const bool seed_ok = p.data.train.size() >= 2000 && latent == 16 && std::abs(mean_p - std::sqrt(16.0)) <= 0.2 &&
                         ks_p <= 0.5 * ks_m;
    ok = ok && seed_ok;
    detail += "seed " + std::to_string(seed) + ": mean " + fmt(mean_p) + " KS " + fmt(ks_p) + " vs " + fmt(ks_m) +
              (seed_ok ? "; " : " (fail); ");
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 1800.0, detail + fmt(secs, 4) + " s (< 1800)"};
}

// Standard deviation of AIS log10-likelihoods of reconstructions of 128 evenly spaced training samples.
double likelihood_spread(TrainedToy& t, const AISConfig& ais) {
  const auto& train = t.data.train;
  const std::int64_t n = 128;
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i * (train.size() / n);
  auto& models = t.trainer->models();
  const Tensor x = train.batch(idx);
  const Tensor z = models.encoder.forward(nn::Var::constant(x), Mode::eval).value();
  const Tensor r = models.generator.forward(nn::Var::constant(z), Mode::eval).value();
  const auto gen = network_generator(models.generator);
  std::vector<double> ll;
  for (std::int64_t i = 0; i < n; ++i) ll.push_back(ais_marginal(r.row(i), models.latent_dim(), gen, ais, i).log10_marginal);
  const double mean = std::accumulate(ll.begin(), ll.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double v : ll) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(n - 1));
}

Outcome equalization_effect() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto p = train_toy("toy-p-mdgan", seed, 0.25);
    auto e = train_toy("toy-ep-mdgan", seed, 0.25);
    const RunSpec spec = preset("toy-ep-mdgan");
    EvaluationOptions eo = spec.eval;
    eo.split = "test";
    const auto ev_p = evaluate(p.trainer->models(), p.data, eo);
    const auto ev_e = evaluate(e.trainer->models(), e.data, eo);
    const double sd_p = likelihood_spread(p, spec.ais), sd_e = likelihood_spread(e, spec.ais);
    const bool a = ev_e.report.psnr_p10 > ev_p.report.psnr_p10;
    const bool b = sd_e < sd_p;
    const bool c = ev_e.report.fid <= 1.1 * ev_p.report.fid;
    ok = ok && a && b && c;
    detail += "seed " + std::to_string(seed) + ": p10 " + fmt(ev_e.report.psnr_p10) + " vs " +
              fmt(ev_p.report.psnr_p10) + (a ? "" : " (fail)") + ", ll std " + fmt(sd_e) + " vs " + fmt(sd_p) +
              (b ? "" : " (fail)") + ", FID " + fmt(ev_e.report.fid) + " vs " + fmt(ev_p.report.fid) +
              (c ? "" : " (fail)") + "; ";
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 3600.0, detail + fmt(secs, 4) + " s (< 3600)"};
}

// ---- 7 ----------------------------------------------------------------------

Outcome variant_reduction() {
  RunSpec ep = preset("toy-ep-mdgan"), pm = preset("toy-p-mdgan");
  for (RunSpec* s : {&ep, &pm}) {
    s->train.epochs = 2;
    s->train.seed = 17;
  }
  ep.train.sampler.lambda_perc = 0.0;
  const auto data = load_data(pm);
  const auto dir_ep = work_dir("reduction_ep"), dir_p = work_dir("reduction_p");
  Trainer(ep.resolved_train_config(), data, dir_ep).run();
  Trainer(pm.resolved_train_config(), data, dir_p).run();
  const std::string losses_ep = read_file(dir_ep / "losses.csv"), losses_p = read_file(dir_p / "losses.csv");
  const auto rows = std::count(losses_p.begin(), losses_p.end(), '\n') - 1;
  const bool ok = rows > 0 && losses_ep == losses_p;
  fs::remove_all(dir_ep);
  fs::remove_all(dir_p);
  return {ok, std::to_string(rows) + " joint-step loss rows, " + (losses_ep == losses_p ? "identical" : "different")};
}

// ---- 8 ----------------------------------------------------------------------

Tensor random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
  return t;
}

struct GradientCheck {
  double worst = 0.0;
  int probes = 0;
};

// Compares analytic parameter gradients of objective() against central differences.
// `backprop` must leave d objective / d parameter in every parameter's grad.
GradientCheck check_gradients(std::vector<Network*> nets, const std::function<double()>& objective,
                              const std::function<void()>& backprop, int probes, std::uint64_t seed) {
  for (auto* n : nets) n->zero_grad();
  backprop();
  Rng rng(seed);
  GradientCheck out;
  for (int p = 0; p < probes; ++p) {
    Network& net = *nets[rng.next_u64() % nets.size()];
    auto& param = net.parameters()[rng.next_u64() % net.parameters().size()];
    const auto i = static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(param.value().numel()));
    const double analytic = param.grad().empty() ? 0.0 : param.grad()[i];
    const double numeric = oracle::central_difference(objective, param.mutable_value()[i], 1e-5);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    out.worst = std::max(out.worst, std::abs(analytic - numeric) / scale);
    ++out.probes;
  }
  return out;
}

Outcome gradient_checks() {
  const Shape image{1, 4, 4};
  ModelTriple m = build_triple(toy_spec_set(image, 4, 16), 108);
  Rng rng(108);
  // Zero biases and near-zero encoder outputs put every ReLU input at its kink; random biases avoid that.
  for (Network* net : {&m.generator, &m.encoder, &m.discriminator}) {
    for (auto& p : net->parameters()) {
      if (p.value().rank() != 1) continue;
      for (std::int64_t i = 0; i < p.value().numel(); ++i) p.mutable_value()[i] = 0.5 * rng.normal();
    }
  }
  const Tensor x = random_tensor({8, 1, 4, 4}, rng, 0.5);
  const Tensor z = random_tensor({8, 4}, rng);
  const auto cx = nn::Var::constant(x), cz = nn::Var::constant(z);

  auto adv = [&] {
    const auto logits = forward_joint(m, cx, cz, Mode::eval);
    const auto t = losses::adversarial_loss(logits.real.value(), logits.fake.value());
    return std::pair{logits, t};
  };
  std::vector<std::pair<std::string, GradientCheck>> checks;
  checks.emplace_back("l_adv (D)", check_gradients(
                                       {&m.discriminator}, [&] { return adv().second.l_d; },
                                       [&] {
                                         const auto [logits, t] = adv();
                                         nn::backward({{logits.real, t.dd_real}, {logits.fake, t.dd_fake}});
                                       },
                                       20, 1));
  checks.emplace_back("l_adv (G, E)", check_gradients(
                                          {&m.generator, &m.encoder}, [&] { return adv().second.l_ge; },
                                          [&] {
                                            const auto [logits, t] = adv();
                                            nn::backward({{logits.real, t.dge_real}, {logits.fake, t.dge_fake}});
                                          },
                                          20, 2));
  auto reconstruction = [&] { return m.generator.forward(m.encoder.forward(cx, Mode::eval), Mode::eval); };
  checks.emplace_back("l_cyc", check_gradients(
                                   {&m.generator, &m.encoder}, [&] { return losses::cycle_loss(x, reconstruction().value()).value; },
                                   [&] {
                                     const auto rec = reconstruction();
                                     nn::backward(rec, losses::cycle_loss(x, rec.value()).grad);
                                   },
                                   20, 3));
  checks.emplace_back("l_norm", check_gradients(
                                    {&m.encoder}, [&] { return losses::norm_loss(m.encoder.forward(cx, Mode::eval).value(), 4).value; },
                                    [&] {
                                      const auto enc = m.encoder.forward(cx, Mode::eval);
                                      nn::backward(enc, losses::norm_loss(enc.value(), 4).grad);
                                    },
                                    20, 4));
  bool ok = true;
  std::string detail;
  for (const auto& [name, c] : checks) {
    ok = ok && c.worst <= 1e-4 && c.probes == 20;
    detail += name + " max rel err " + fmt(c.worst) + "; ";
  }
  return {ok, detail + "20 probes each (<= 1e-4)"};
}

// ---- 9 ----------------------------------------------------------------------

Outcome schedule_conformance() {
  TrainConfig c;
  bool lr_ok = true;
  for (int e = 1; e <= 800; ++e) {
    const double expected = e <= 400 ? 2e-4 : 2e-4 * std::pow(0.99, e - 400);
    lr_ok = lr_ok && learning_rate(c, e) == expected;
  }

  // One step per epoch over 800 epochs, so the log covers the decay.
  SyntheticSpec s;
  s.n_samples = 8;
  s.image_shape = {1, 2, 2};
  s.seed = 9;
  const auto data = make_synthetic(s);
  c.variant = Variant::p_mdgan;
  c.architecture = Architecture::toy;
  c.toy_width = 4;
  c.latent_dim = 2;
  c.batch_size = 8;
  c.epochs = 800;
  c.seed = 9;
  c.controller.warmup_epochs = 1;
  c.checkpoint_every = 800;
  c.prior_mc = 10000;
  c.apply_variant();
  const auto dir = work_dir("schedule");
  Trainer(c, data, dir).run();
  std::ifstream in(dir / "steps.csv");
  std::string line;
  std::getline(in, line);
  std::vector<char> kinds;
  std::int64_t rows = 0;
  bool logged_ok = true;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string step, epoch, kind, lr;
    std::getline(row, step, ',');
    std::getline(row, epoch, ',');
    std::getline(row, kind, ',');
    std::getline(row, lr, ',');
    const int e = std::stoi(epoch);
    const double expected = e <= 400 ? 2e-4 : 2e-4 * std::pow(0.99, e - 400);
    logged_ok = logged_ok && std::stod(lr) == expected && std::stoll(step) == rows;
    kinds.push_back(kind.empty() ? '?' : kind[0]);
    ++rows;
  }
  fs::remove_all(dir);
  bool pattern_ok = rows == 800;
  for (std::size_t start = 0; start + 60 <= kinds.size(); ++start) {
    const auto d = std::count(kinds.begin() + static_cast<std::ptrdiff_t>(start),
                              kinds.begin() + static_cast<std::ptrdiff_t>(start + 60), 'D');
    pattern_ok = pattern_ok && d == 50;
  }
  for (std::size_t i = 0; i < kinds.size(); ++i) pattern_ok = pattern_ok && ((i % 6 == 5) == (kinds[i] == 'G'));
  return {lr_ok && logged_ok && pattern_ok, std::string("schedule ") + (lr_ok ? "exact" : "off") + ", logged lr over " +
                                                std::to_string(rows) + " steps " + (logged_ok ? "exact" : "off") +
                                                ", 50 D + 10 GE in every 60-step window " + (pattern_ok ? "yes" : "no")};
}

// ---- 10 ---------------------------------------------------------------------

Outcome precision_recall_oracle() {
  Rng rng(110);
  int matched = 0;
  const int instances = 1000;
  for (int trial = 0; trial < instances; ++trial) {
    const auto n_real = static_cast<Eigen::Index>(4 + rng.next_u64() % 27);
    const auto n_fake = static_cast<Eigen::Index>(4 + rng.next_u64() % 27);
    const auto dim = static_cast<Eigen::Index>(1 + rng.next_u64() % 4);
    const int k = 1 + static_cast<int>(rng.next_u64() % 3);
    RowMatrix real(n_real, dim), fake(n_fake, dim);
    for (Eigen::Index i = 0; i < real.size(); ++i) real.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < fake.size(); ++i) fake.data()[i] = 0.5 + rng.normal();
    if (trial % 2 == 1) {
      real = real.array().round();
      fake = fake.array().round();
    }
    bool same = true;
    for (auto rule : {PrRule::nearest_neighbor, PrRule::union_of_balls}) {
      const bool nearest = rule == PrRule::nearest_neighbor;
      const auto pr = precision_recall(real, fake, k, rule);
      same = same && pr.precision == oracle::coverage(real, fake, k, nearest) &&
             pr.recall == oracle::coverage(fake, real, k, nearest);
    }
    matched += same ? 1 : 0;
  }
  return {matched == instances, std::to_string(matched) + "/" + std::to_string(instances) + " instances exact"};
}

// ---- 11 ---------------------------------------------------------------------

Outcome persistence() {
  RunSpec spec = preset("toy-ep-mdgan");
  spec.synthetic.n_samples = 64;
  spec.synthetic.n_test = 16;
  spec.train.batch_size = 16;
  spec.train.epochs = 2;
  spec.train.seed = 11;
  const auto data = load_data(spec);
  const auto config = spec.resolved_train_config();
  const auto dir = work_dir("persistence");

  Trainer a(config, data);
  for (int s = 0; s < 9; ++s) a.step();
  a.save_checkpoint(dir / "a.ckpt");
  Trainer b(config, data);
  b.load_checkpoint(dir / "a.ckpt");
  b.save_checkpoint(dir / "b.ckpt");
  bool ckpt_ok = read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt");
  for (int s = 0; s < 6; ++s) {
    const auto ra = a.step(), rb = b.step();
    ckpt_ok = ckpt_ok && ra.losses.total_ge == rb.losses.total_ge && ra.losses.total_d == rb.losses.total_d;
  }

  Rng rng(111);
  std::vector<double> scores(1000);
  for (auto& v : scores) v = 40.0 * rng.normal();
  scores[3] = 1e-300;
  scores[4] = -0.1;
  const auto table = ScoreTable::from_scores(scores);
  table.save_csv(dir / "scores.csv");
  const auto loaded = ScoreTable::load_csv(dir / "scores.csv");
  loaded.save_csv(dir / "scores2.csv");
  const bool table_ok = loaded == table && read_file(dir / "scores.csv") == read_file(dir / "scores2.csv");

  AISConfig ais = spec.ais;
  ais.n_temps = 20;
  ais.n_chains = 4;
  const auto full = score_training_set(data.train, a.models(), ais, {.progress_path = {}, .chunk_size = 16});
  const auto progress = dir / "progress.csv";
  const auto part = score_training_set(data.train, a.models(), ais, {progress, 16, 2});
  const auto resumed = score_training_set(data.train, a.models(), ais, {progress, 16, -1});
  bool ais_ok = !part.complete && resumed.complete && resumed.table == full.table &&
                resumed.records.size() == full.records.size();
  for (std::size_t i = 0; ais_ok && i < full.records.size(); ++i) {
    ais_ok = resumed.records[i].log10_marginal == full.records[i].log10_marginal &&
             resumed.records[i].std_error == full.records[i].std_error;
  }
  fs::remove_all(dir);
  return {ckpt_ok && table_ok && ais_ok, std::string("checkpoint ") + (ckpt_ok ? "bit-exact" : "differs") +
                                             ", score table " + (table_ok ? "bit-exact" : "differs") +
                                             ", resumed scoring " + (ais_ok ? "identical" : "differs")};
}

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

}  // namespace

// Usage: acceptance [criterion ...]; runs all criteria when none are given.
int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "sampler exactness", sampler_exactness},
      {2, "rank scaling cancellation", rank_scaling_cancels},
      {3, "PSNR examples", psnr_examples},
      {4, "AIS against closed form", ais_oracle},
      {5, "norm regularizer effect", norm_regularizer_effect},
      {6, "equalization effect", equalization_effect},
      {7, "variant reduction", variant_reduction},
      {8, "gradient checks", gradient_checks},
      {9, "schedule conformance", schedule_conformance},
      {10, "precision/recall oracle", precision_recall_oracle},
      {11, "determinism and persistence", persistence},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.contains(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
