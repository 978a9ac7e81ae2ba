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

// JSON-lines trajectory files: one header line, one line per step, then the
// evaluation samples. Wall time is kept out so reruns are byte-identical.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "zoserve/digest.h"
#include "zoserve/zo_engine.h"

namespace zoserve {

inline constexpr int kTrajectorySchema = 1;

struct TrajectoryHeader {
  std::string path;  // "baseline" or "serving"
  Digest config_digest;
  Digest model_digest;
  Digest task_digest;
  std::string estimator;
  std::string precision;
  std::uint64_t steps = 0;

  bool operator==(const TrajectoryHeader&) const = default;
};

struct EvalRecord {
  std::uint64_t step = 0;
  double loss = 0.0;
  double accuracy = 0.0;

  bool operator==(const EvalRecord&) const = default;
};

struct Trajectory {
  TrajectoryHeader header;
  std::vector<ZoStepRecord> steps;
  std::vector<EvalRecord> evals;

  bool operator==(const Trajectory&) const = default;
};

std::string to_jsonl(const Trajectory& trajectory);
Trajectory parse_jsonl(std::string_view text);  // throws InputError

void save_trajectory(const Trajectory& trajectory, const std::filesystem::path& path);
Trajectory load_trajectory(const std::filesystem::path& path);

// FNV-1a over the serialized bytes; equal digests <=> identical files.
Digest trajectory_digest(const Trajectory& trajectory);
Digest file_digest(const std::filesystem::path& path);

}  // namespace zoserve
