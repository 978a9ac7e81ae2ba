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

// The conventional loop: perturb the dense weights in place, score, restore,
// update. Reference for correctness and for cost.

#include "zoserve/objective.h"
#include "zoserve/parameters.h"
#include "zoserve/run.h"
#include "zoserve/trajectory.h"
#include "zoserve/zo_engine.h"

namespace zoserve {

using BaselineRun = PathRun;

// Per step and perturbed matrix: W += eps P, score, W -= 2 eps P, score,
// W += eps P, W += beta P. Four m*n write passes. P = U V^T is cached for
// the step unless options.recompute_products is set.
BaselineRun run_baseline(const ZoConfig& config, ParameterSet initial, const Objective& objective,
                         const Evaluator* evaluator, const RunOptions& options);

// Steps and evaluations of any run as a trajectory with the given header.
Trajectory compare_ready_export(const PathRun& run, TrajectoryHeader header);

// Analytic write count of run_baseline for `steps` steps.
std::uint64_t baseline_write_law(const ParameterSet& params, const ZoConfig& config,
                                 std::uint64_t steps);

}  // namespace zoserve
