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

// Types shared by the baseline loop and the serving path.

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "zoserve/adapter.h"
#include "zoserve/objective.h"
#include "zoserve/parameters.h"
#include "zoserve/zo_engine.h"

namespace zoserve {

enum class ExecutionPath { kBaseline, kServing };
const char* to_string(ExecutionPath p);

struct RunOptions {
  std::size_t steps = 0;
  std::size_t eval_every = 50;  // 0 disables periodic evaluation
  bool recompute_products = false;  // baseline only
  bool fold_on_eval = false;        // serving only
  std::size_t slot_cap = 4;         // serving only

  void validate() const;  // throws ConfigError
};

struct EvalPoint {
  std::uint64_t step = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double wall_ms = 0.0;  // training time elapsed, evaluation excluded
};

enum class CostBucket : std::size_t { kScoring = 0, kPerturb, kUpdate, kFold };
inline constexpr std::size_t kCostBuckets = 4;
const char* to_string(CostBucket b);

// Units: scoring in multiply-accumulates, the other buckets in weight writes.
struct CostMeter {
  std::uint64_t weight_writes = 0;
  std::uint64_t scoring_calls = 0;
  std::uint64_t scoring_cost_units = 0;
  std::array<std::uint64_t, kCostBuckets> bucket_units{};
  std::array<double, kCostBuckets> bucket_seconds{};

  void charge_writes(CostBucket b, std::uint64_t writes, double seconds);
  void charge_scoring(std::uint64_t units, double seconds);
};

// Times an interval and charges the weight writes made inside it.
class MeteredSection {
 public:
  MeteredSection(CostMeter& meter, CostBucket bucket);
  ~MeteredSection();
  MeteredSection(const MeteredSection&) = delete;
  MeteredSection& operator=(const MeteredSection&) = delete;

 private:
  CostMeter& meter_;
  CostBucket bucket_;
  WriteScope writes_;
  std::chrono::steady_clock::time_point start_;
};

// Forwards to an objective and charges every call to the scoring bucket.
class MeteredObjective final : public Objective {
 public:
  MeteredObjective(const Objective& inner, CostMeter& meter) : inner_(inner), meter_(meter) {}
  double loss(const ParameterSet& params, const AdapterState* adapter,
              std::span<const std::size_t> batch) const override;
  std::size_t pool_size() const override { return inner_.pool_size(); }
  std::uint64_t cost_units(std::span<const std::size_t> batch) const override {
    return inner_.cost_units(batch);
  }

 private:
  const Objective& inner_;
  CostMeter& meter_;
};

struct PathRun {
  ExecutionPath path = ExecutionPath::kBaseline;
  ZoConfig config;
  std::vector<ZoStepRecord> trajectory;
  std::vector<EvalPoint> evals;
  CostMeter meter;
  ParameterSet params;  // final dense weights (serving: after the closing fold)
  AdapterState adapter;  // serving only
  double wall_seconds = 0.0;  // training time, evaluation excluded

  std::uint64_t weight_write_count() const { return meter.weight_writes; }
};

}  // namespace zoserve
