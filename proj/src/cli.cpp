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

#include "eqgan/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "eqgan/report.hpp"
#include "eqgan/runspec.hpp"
#include "eqgan/trainer.hpp"

namespace fs = std::filesystem;

namespace eqgan {

namespace {

struct SpecArgs {
  std::string preset;
  std::string spec_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::string out;
};

void add_spec_options(CLI::App* cmd, SpecArgs& a) {
  cmd->add_option("--preset", a.preset, "named configuration");
  cmd->add_option("--spec", a.spec_file, "key = value spec file");
  cmd->add_option("--set", a.sets, "key=value override (repeatable)");
  cmd->add_option("--seed", a.seed, "training seed");
  cmd->add_option("--epochs", a.epochs, "training epochs");
  cmd->add_option("--out", a.out, "output directory");
}

RunSpec build_spec(const SpecArgs& a, RunSpec base = {}) {
  RunSpec spec = a.preset.empty() ? std::move(base) : preset(a.preset);
  if (!a.spec_file.empty()) spec = load_run_spec(a.spec_file, std::move(spec));
  for (const auto& s : a.sets) apply_assignment(spec, s);
  if (a.seed) spec.train.seed = *a.seed;
  if (a.epochs) spec.train.epochs = *a.epochs;
  spec.validate();
  return spec;
}

struct RunRef {
  fs::path dir;
  fs::path manifest;
};

RunRef resolve_run(const std::string& arg) {
  const fs::path p(arg);
  RunRef r;
  if (fs::is_directory(p)) {
    r.dir = p;
    r.manifest = p / "manifest.json";
  } else {
    r.dir = p.parent_path();
    r.manifest = p;
  }
  if (!fs::exists(r.manifest)) throw std::runtime_error("missing manifest " + r.manifest.string());
  return r;
}

// Spec stored with a run, overridden by command-line options.
RunSpec spec_for_run(const RunRef& run, const SpecArgs& a) {
  RunSpec base;
  const fs::path stored = run.dir / "spec.txt";
  if (fs::exists(stored)) base = load_run_spec(stored);
  return build_spec(a, std::move(base));
}

RunManifest train_run(const RunSpec& spec, const fs::path& out) {
  save_run_spec(out / "spec.txt", spec);
  const DatasetSplit data = load_data(spec);
  const TrainConfig config = spec.resolved_train_config();
  if (config.variant == Variant::p_mdgan_mleq) {
    MleqOptions opts;
    opts.phase1_lambda_cyc = spec.phase1_lambda_cyc;
    opts.scoring.chunk_size = spec.score_chunk;
    return run_mleq_pipeline(config, data, spec.ais, out, opts);
  }
  Trainer trainer(config, data, out);
  return trainer.run();
}

Evaluation evaluate_run(const RunRef& run, const RunSpec& spec) {
  const RunManifest manifest = RunManifest::load(run.manifest);
  const DatasetSplit data = load_data(spec);
  EvaluationOptions opts = spec.eval;
  opts.model_tag = manifest.config.value("variant", std::string());
  return evaluate(manifest, data, opts);
}

int cmd_train(const SpecArgs& a, std::ostream& out) {
  const RunSpec spec = build_spec(a);
  const fs::path dir = a.out.empty() ? fs::path("runs") / (a.preset.empty() ? "run" : a.preset) : fs::path(a.out);
  const RunManifest m = train_run(spec, dir);
  out << (dir / "manifest.json").string() << '\n';
  if (m.status != "complete") {
    out << "status: " << m.status << (m.error.empty() ? "" : " (" + m.error + ")") << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_score(const std::string& run_arg, const SpecArgs& a, std::int64_t max_chunks, std::ostream& out) {
  const RunRef run = resolve_run(run_arg);
  const RunSpec spec = spec_for_run(run, a);
  const fs::path dir = a.out.empty() ? run.dir / "score" : fs::path(a.out);
  fs::create_directories(dir);
  const RunManifest manifest = RunManifest::load(run.manifest);
  const DatasetSplit data = load_data(spec);
  if (manifest.image_shape != data.image_shape) throw ConfigError("dataset shape does not match the run");
  const SampleCollection& samples = data.split(spec.score_split);
  ModelTriple models = load_models(manifest);
  ScoringOptions opts;
  opts.progress_path = dir / "progress.csv";
  opts.chunk_size = spec.score_chunk;
  opts.max_chunks = max_chunks;
  const ScoringResult result = score_training_set(samples, models, spec.ais, opts);
  if (!result.complete) {
    out << "scored " << result.records.size() << " of " << samples.size() << " samples; rerun to resume\n";
    return kExitOk;
  }
  result.table.save_csv(dir / "scores.csv");
  write_ais_sidecar(dir / "scores.json", spec.ais, result.run_hash);
  write_likelihood_csv(dir / "likelihood.csv", result.records,
                       reconstruction_psnr(models, samples, data.pixel_max));
  out << (dir / "scores.csv").string() << '\n';
  return kExitOk;
}

int cmd_evaluate(const std::string& run_arg, const SpecArgs& a, std::ostream& out) {
  const RunRef run = resolve_run(run_arg);
  const RunSpec spec = spec_for_run(run, a);
  const fs::path dir = a.out.empty() ? run.dir / "eval" : fs::path(a.out);
  const Evaluation ev = evaluate_run(run, spec);
  write_evaluation(ev, dir);
  out << ev.report.to_json().dump(2) << '\n';
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out_dir, std::optional<double> percentile,
               std::ostream& out, std::ostream& err) {
  ReportOptions opts;
  for (const auto& r : runs) opts.runs.emplace_back(r);
  opts.out_dir = out_dir.empty() ? fs::path("report") : fs::path(out_dir);
  if (percentile) {
    opts.percentile = *percentile;
  } else if (!opts.runs.empty()) {
    const fs::path stored = (fs::is_directory(opts.runs[0]) ? opts.runs[0] : opts.runs[0].parent_path()) / "spec.txt";
    if (fs::exists(stored)) opts.percentile = load_run_spec(stored).report_percentile;
  }
  const ReportResult result = generate_report(opts);
  for (const auto& w : result.warnings) err << "warning: " << w << '\n';
  for (const auto& f : result.written) out << f.string() << '\n';
  return result.succeeded > 0 ? kExitOk : kExitRuntime;
}

int cmd_sweep(const std::string& grid_path, const SpecArgs& a, std::optional<int> only_job, bool dry_run,
              bool skip_eval, std::ostream& out) {
  const auto jobs = load_grid(grid_path);
  if (jobs.empty()) throw ConfigError("grid " + grid_path + " has no jobs");
  const fs::path root = a.out.empty() ? fs::path("sweeps") / fs::path(grid_path).stem() : fs::path(a.out);
  fs::create_directories(root);

  // Resolve every job first so a bad cell fails before any training.
  std::vector<RunSpec> specs;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    SpecArgs job_args = a;
    job_args.preset = jobs[j].preset.empty() ? a.preset : jobs[j].preset;
    job_args.sets = jobs[j].assignments;
    job_args.sets.insert(job_args.sets.end(), a.sets.begin(), a.sets.end());
    try {
      specs.push_back(build_spec(job_args));
    } catch (const ConfigError& e) {
      throw ConfigError("job " + std::to_string(j) + ": " + e.what());
    }
  }
  if (only_job && (*only_job < 0 || *only_job >= static_cast<int>(jobs.size()))) {
    throw ConfigError("--job must be in [0, " + std::to_string(jobs.size()) + ")");
  }

  int failures = 0;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    if (only_job && static_cast<int>(j) != *only_job) continue;
    std::ostringstream name;
    name << "job_" << std::setw(3) << std::setfill('0') << j;
    const fs::path dir = root / name.str();
    if (dry_run) {
      save_run_spec(dir / "spec.txt", specs[j]);
      out << dir.string() << '\n';
      continue;
    }
    try {
      const fs::path manifest_path = dir / "manifest.json";
      bool done = false;
      if (fs::exists(manifest_path)) done = RunManifest::load(manifest_path).status == "complete";
      if (!done && train_run(specs[j], dir).status != "complete") throw std::runtime_error("training did not complete");
      if (!skip_eval) {
        const RunRef run{dir, manifest_path};
        write_evaluation(evaluate_run(run, specs[j]), dir / "eval");
      }
      out << dir.string() << '\n';
    } catch (const std::exception& e) {
      ++failures;
      out << dir.string() << " failed: " << e.what() << '\n';
    }
  }
  if (!dry_run && !skip_eval) {
    std::ofstream csv(root / "sweep.csv");
    csv << "job,overrides," << metrics_csv_header() << '\n';
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      std::ostringstream name;
      name << "job_" << std::setw(3) << std::setfill('0') << j;
      const fs::path metrics = root / name.str() / "eval" / "metrics.json";
      if (!fs::exists(metrics)) continue;
      std::ifstream is(metrics);
      std::string overrides;
      for (const auto& s : jobs[j].assignments) overrides += (overrides.empty() ? "" : " ") + s;
      std::ostringstream row;
      write_metrics_csv_row(row, MetricsReport::from_json(nlohmann::json::parse(is)));
      csv << name.str() << ",\"" << overrides << "\"," << row.str();
    }
  }
  return failures == 0 ? kExitOk : kExitRuntime;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bidirectional GAN training with likelihood equalization", "eqgan"};
  app.require_subcommand(1);

  SpecArgs train_args, score_args, eval_args, sweep_args;
  auto* train = app.add_subcommand("train", "train a model or the three-phase pipeline");
  add_spec_options(train, train_args);

  std::string score_run;
  std::int64_t max_chunks = -1;
  auto* score = app.add_subcommand("score", "likelihood-score a trained run");
  score->add_option("--run", score_run, "run directory or manifest")->required();
  score->add_option("--max-chunks", max_chunks, "stop after this many chunks (resume later)");
  add_spec_options(score, score_args);

  std::string eval_run;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "FID, precision/recall and PSNR of a trained run");
  evaluate_cmd->add_option("--run", eval_run, "run directory or manifest")->required();
  add_spec_options(evaluate_cmd, eval_args);

  std::vector<std::string> report_runs;
  std::string report_out;
  std::optional<double> percentile;
  auto* report = app.add_subcommand("report", "figures and tables from run directories");
  report->add_option("--run", report_runs, "run directory or manifest (repeatable)")->required();
  report->add_option("--out", report_out, "output directory");
  report->add_option("--percentile", percentile, "tail share for the improvement histograms");

  std::string grid;
  std::optional<int> only_job;
  bool dry_run = false, skip_eval = false;
  auto* sweep = app.add_subcommand("sweep", "train every cell of a grid file");
  sweep->add_option("--grid", grid, "grid file")->required();
  sweep->add_option("--job", only_job, "run a single job by index");
  sweep->add_flag("--dry-run", dry_run, "write job specs without training");
  sweep->add_flag("--no-eval", skip_eval, "skip evaluation after training");
  add_spec_options(sweep, sweep_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_args, out);
    if (*score) return cmd_score(score_run, score_args, max_chunks, out);
    if (*evaluate_cmd) return cmd_evaluate(eval_run, eval_args, out);
    if (*report) return cmd_report(report_runs, report_out, percentile, out, err);
    if (*sweep) return cmd_sweep(grid, sweep_args, only_job, dry_run, skip_eval, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace eqgan
