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

#ifndef EQGAN_RUNSPEC_HPP
#define EQGAN_RUNSPEC_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "eqgan/datasets.hpp"
#include "eqgan/likelihood.hpp"
#include "eqgan/trainer.hpp"

// Human-editable run description. Files hold one `key = value` pair per line;
// `#` starts a comment. Every key has a default, so an empty file is valid.
namespace eqgan {

struct RunSpec {
  // Data: "synthetic", "file" (a saved synthetic container) or an image dataset name.
  std::string dataset = "synthetic";
  std::filesystem::path data_root;  // empty: $EQGAN_DATA_ROOT
  std::filesystem::path dataset_file;
  SyntheticSpec synthetic;
  CelebaOptions celeba;

  TrainConfig train;
  bool sampler_mode_auto = true;  // derive sampler.mode from the variant

  AISConfig ais;
  std::string score_split = "train";
  std::int64_t score_chunk = 64;
  std::optional<double> phase1_lambda_cyc;

  EvaluationOptions eval;
  double report_percentile = 10.0;  // share of samples in each tail of the improvement plot

  // Train config with the variant's sampler mode applied.
  TrainConfig resolved_train_config() const;
  // Throws ConfigError naming the offending key.
  void validate() const;
};

struct SpecKey {
  std::string name;
  std::string help;
};

// All recognized keys in file order.
const std::vector<SpecKey>& spec_keys();

// Sets one key from its textual value. Throws ConfigError for unknown keys or bad values.
void set_spec_value(RunSpec& spec, const std::string& key, const std::string& value);
std::string get_spec_value(const RunSpec& spec, const std::string& key);
// Applies "key=value".
void apply_assignment(RunSpec& spec, const std::string& assignment);

RunSpec parse_run_spec(std::istream& is, RunSpec base = {});
RunSpec load_run_spec(const std::filesystem::path& path, RunSpec base = {});
// Writes every key with its help text; parsing the output yields an equal spec.
void write_run_spec(std::ostream& os, const RunSpec& spec);
void save_run_spec(const std::filesystem::path& path, const RunSpec& spec);
bool equivalent(const RunSpec& a, const RunSpec& b);

std::vector<std::string> preset_names();
RunSpec preset(const std::string& name);

// Resolves the data root and loads or generates the dataset.
DatasetSplit load_data(const RunSpec& spec);

// Sweep grid: "@preset <name>" lines set the base spec for the jobs that
// follow; every other non-comment line is one job of space-separated key=value
// overrides.
struct GridJob {
  std::string preset;
  std::vector<std::string> assignments;
};
std::vector<GridJob> parse_grid(std::istream& is);
std::vector<GridJob> load_grid(const std::filesystem::path& path);

}  // namespace eqgan

#endif  // EQGAN_RUNSPEC_HPP
