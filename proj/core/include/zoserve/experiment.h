// Copyright 2026 The zoserve Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Experiment configuration (TOML) and orchestration of full runs.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zoserve/model.h"
#include "zoserve/run.h"
#include "zoserve/task.h"
#include "zoserve/trajectory.h"
#include "zoserve/verify.h"
#include "zoserve/zo_engine.h"

namespace zoserve {

inline constexpr int kConfigSchema = 1;

enum class PathChoice { kBaseline, kServing, kBoth };
const char* to_string(PathChoice p);

struct ExperimentConfig {
  int schema = kConfigSchema;
  TransformerConfig model;
  std::uint64_t init_seed = 1;
  std::uint64_t task_seed = 7;
  TaskSizes task_sizes;
  ZoConfig zo;
  PathChoice path = PathChoice::kBoth;
  std::size_t steps = 300;
  std::size_t eval_every = 50;
  Precision precision = Precision::kReal64;
  bool recompute_products = false;
  bool fold_on_eval = false;
  std::size_t slot_cap = 4;
  std::string output_dir = "out";

  void validate() const;  // throws ConfigError naming the field
  RunOptions run_options() const;
  // Digest of the canonical TOML form without output_dir.
  Digest digest() const;
};

// `overrides` are "dotted.key=value" strings applied on top of the file.
ExperimentConfig parse_config(std::string_view toml_text,
                              std::span<const std::string> overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path,
                             std::span<const std::string> overrides = {});
std::string to_toml(const ExperimentConfig& config);

// Model, task and objectives an experiment config describes.
struct ExperimentSetup {
  ModelParams model;
  TaskSplits task;
  Digest model_digest;
  Digest task_digest;
};
ExperimentSetup make_setup(const ExperimentConfig& config);

struct ExperimentResult {
  ExperimentConfig config;
  Digest config_digest;
  std::optional<PathRun> baseline;
  std::optional<PathRun> serving;
  std::optional<Trajectory> baseline_trajectory;
  std::optional<Trajectory> serving_trajectory;
  std::optional<StrictCompareReport> compare;
  TrajectorySummary summary;
  std::vector<std::filesystem::path> files;
};

// Runs the configured path(s). With write_files, artifacts go to
// config.output_dir: <path>.trajectory.jsonl, <path>.eval.csv, summary.json,
// config.toml and, for path=both, compare.json / compare.txt.
ExperimentResult run_experiment(const ExperimentConfig& config, bool write_files = true);

}  // namespace zoserve
