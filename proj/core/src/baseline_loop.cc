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

#include "zoserve/baseline_loop.h"

#include <chrono>
#include <optional>

#include "zoserve/errors.h"

namespace zoserve {
namespace {

using Clock = std::chrono::steady_clock;

// The dense direction of one block: either the materialized product or the
// factors when products are recomputed at every write.
struct BlockDirection {
  std::optional<Matrix> product;
  const LoraSlot* factors = nullptr;
  double scale = 1.0;
};

class BaselineStepper {
 public:
  BaselineStepper(const ZoConfig& config, ParameterSet& params, const Objective& objective,
                  bool recompute)
      : config_(config), params_(params), objective_(objective), recompute_(recompute) {}

  ZoStepRecord step(std::uint64_t t, CostMeter& meter) {
    StepDirections dirs = draw_directions(params_, config_, t);
    const auto batch = minibatch_indices(config_, t, objective_.pool_size());

    std::vector<BlockDirection> blocks(params_.blocks().size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      if (dirs.dense_blocks[b]) {
        blocks[b].product = std::move(*dirs.dense_blocks[b]);
      } else if (dirs.blocks[b]) {
        const LoraSlot& s = *dirs.blocks[b];
        blocks[b].scale = s.scale;
        if (recompute_) {
          blocks[b].factors = &s;
        } else {
          blocks[b].product = outer_product(s.a, s.b);
        }
      }
    }

    const double eps = config_.epsilon;
    CoefficientEstimate est;
    {
      MeteredSection section(meter, CostBucket::kPerturb);
      apply(blocks, dirs, eps, eps);
    }
    est.loss_plus = objective_.loss(params_, nullptr, batch);
    {
      MeteredSection section(meter, CostBucket::kPerturb);
      apply(blocks, dirs, -2.0 * eps, -2.0 * eps);
    }
    est.loss_minus = objective_.loss(params_, nullptr, batch);
    {
      MeteredSection section(meter, CostBucket::kPerturb);
      apply(blocks, dirs, eps, eps);
    }
    est.coefficient = (est.loss_plus - est.loss_minus) / (2.0 * eps);

    const double block_rate =
        config_.estimator == Estimator::kLozoLazy ? effective_rate(config_) : config_.learning_rate;
    const double beta = -(block_rate * est.coefficient);
    {
      MeteredSection section(meter, CostBucket::kUpdate);
      apply(blocks, dirs, beta, -(config_.learning_rate * est.coefficient));
    }

    ZoStepRecord rec;
    rec.step = t;
    rec.loss_plus = est.loss_plus;
    rec.loss_minus = est.loss_minus;
    rec.coefficient = est.coefficient;
    rec.beta = beta;
    rec.seed = config_.seed;
    rec.u_digest = dirs.u_digest;
    rec.v_digest = dirs.v_digest;
    rec.minibatch_id = minibatch_id(batch);
    return rec;
  }

 private:
  void apply(const std::vector<BlockDirection>& blocks, const StepDirections& dirs,
             double block_alpha, double vector_alpha) {
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const BlockDirection& d = blocks[b];
      if (d.product) {
        axpy(params_.block_ref(b), block_alpha * d.scale, *d.product);
      } else if (d.factors) {
        axpy_outer_prescaled(params_.block_ref(b), block_alpha * d.scale, d.factors->a,
                             d.factors->b);
      }
    }
    for (std::size_t v = 0; v < dirs.vectors.size(); ++v) {
      if (!dirs.vectors[v]) continue;
      auto p = params_.vector_values(v);
      axpy(MatrixRef(p.data(), 1, p.size(), p.size()), vector_alpha,
           ConstMatrixRef(dirs.vectors[v]->data(), 1, p.size(), p.size()));
    }
  }

  const ZoConfig& config_;
  ParameterSet& params_;
  const Objective& objective_;
  bool recompute_;
};

}  // namespace

BaselineRun run_baseline(const ZoConfig& config, ParameterSet initial, const Objective& objective,
                         const Evaluator* evaluator, const RunOptions& options) {
  config.validate();
  options.validate();
  BaselineRun run;
  run.path = ExecutionPath::kBaseline;
  run.config = config;
  run.params = std::move(initial);

  MeteredObjective metered(objective, run.meter);
  BaselineStepper stepper(config, run.params, metered, options.recompute_products);
  double train_seconds = 0.0;
  auto evaluate = [&](std::uint64_t step) {
    if (!evaluator) return;
    const EvalMetrics m = (*evaluator)(run.params, nullptr);
    run.evals.push_back(EvalPoint{step, m.loss, m.accuracy, train_seconds * 1e3});
  };

  evaluate(0);
  for (std::uint64_t t = 0; t < options.steps; ++t) {
    const auto start = Clock::now();
    run.trajectory.push_back(stepper.step(t, run.meter));
    train_seconds += std::chrono::duration<double>(Clock::now() - start).count();
    const std::uint64_t done = t + 1;
    if (done == options.steps || (options.eval_every > 0 && done % options.eval_every == 0)) {
      evaluate(done);
    }
  }
  run.wall_seconds = train_seconds;
  return run;
}

Trajectory compare_ready_export(const PathRun& run, TrajectoryHeader header) {
  Trajectory t;
  header.steps = run.trajectory.size();
  if (header.path.empty()) header.path = to_string(run.path);
  if (header.estimator.empty()) header.estimator = to_string(run.config.estimator);
  t.header = std::move(header);
  t.steps = run.trajectory;
  for (const auto& e : run.evals) t.evals.push_back(EvalRecord{e.step, e.loss, e.accuracy});
  return t;
}

std::uint64_t baseline_write_law(const ParameterSet& params, const ZoConfig& config,
                                 std::uint64_t steps) {
  std::uint64_t per_step = 0;
  for (const auto& b : params.blocks()) per_step += 4 * b.rows * b.cols;
  if (config.scope == Scope::kFull) {
    for (std::size_t v = 0; v < params.vectors().size(); ++v) {
      per_step += 4 * params.vector_values(v).size();
    }
  }
  return per_step * steps;
}

}  // namespace zoserve
