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

// Serving-style execution: probes are scored against composed views of an
// untouched base, updates accumulate on the U factors, and the dense weights
// are written only when a lazy window closes.

#include <cstdint>
#include <string>
#include <vector>

#include "zoserve/adapter.h"
#include "zoserve/objective.h"
#include "zoserve/random.h"
#include "zoserve/run.h"
#include "zoserve/zo_engine.h"

namespace zoserve {

enum class ProbeStatus { kQueued, kScored, kApplied };
const char* to_string(ProbeStatus s);

struct ProbePair {
  std::uint64_t step = 0;
  std::vector<StreamKey> directions;  // per perturbed tensor, in block order
  Digest minibatch_id;
  ProbeStatus status = ProbeStatus::kQueued;
};

ProbePair make_probe_pair(const ParameterSet& params, const ZoConfig& config, std::uint64_t step,
                          std::span<const std::size_t> batch);

class ServingSession {
 public:
  // Low-rank estimators only; DenseMezo has no adapter form.
  ServingSession(const ZoConfig& config, ParameterSet initial, const Objective& objective,
                 const RunOptions& options);

  // One ZO step. On failure the session is left exactly as before the call.
  ZoStepRecord step();

  // Folds every slot touched since the last fold. Called at window ends and
  // by finish().
  void fold_dirty();
  void finish() { fold_dirty(); }

  std::uint64_t next_step() const { return next_step_; }
  const ParameterSet& params() const { return params_; }
  const AdapterState& adapter() const { return adapter_; }
  const CostMeter& meter() const { return meter_; }
  const std::vector<ProbePair>& probes() const { return probes_; }
  Digest state_digest() const;

  ParameterSet take_params() { return std::move(params_); }
  AdapterState take_adapter() { return std::move(adapter_); }

 private:
  ZoConfig config_;
  RunOptions options_;
  ParameterSet params_;
  AdapterState adapter_;
  CostMeter meter_;
  MeteredObjective objective_;
  std::vector<bool> dirty_;
  std::vector<ProbePair> probes_;
  std::uint64_t next_step_ = 0;
};

PathRun run_serving_path(const ZoConfig& config, ParameterSet initial, const Objective& objective,
                         const Evaluator* evaluator, const RunOptions& options);

// Closed-form serving write count for LozoLazy: per matrix and window of w
// steps, w*m*r accumulator writes plus one m*n fold; dense 1-D updates under
// Full scope add n per step.
std::uint64_t serving_write_law(const ParameterSet& params, const ZoConfig& config,
                                std::uint64_t steps);

struct CostShare {
  std::string component;
  std::uint64_t units = 0;
  double unit_share = 0.0;  // percent
  double seconds = 0.0;
  double time_share = 0.0;  // percent
};

struct CostReport {
  std::vector<CostShare> rows;
  std::uint64_t total_units = 0;
  double total_seconds = 0.0;
  std::uint64_t weight_writes = 0;
  std::uint64_t scoring_calls = 0;
};

CostReport cost_report(const CostMeter& meter);
std::string format_cost_table(const CostReport& report, const std::string& title);

}  // namespace zoserve
