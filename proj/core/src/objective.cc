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

#include "zoserve/objective.h"

#include "zoserve/errors.h"

namespace zoserve {

TaskObjective::TaskObjective(TransformerConfig config, std::vector<Example> pool,
                             Precision precision)
    : config_(config), pool_(std::move(pool)), precision_(precision) {
  config_.validate();
  if (pool_.empty()) throw ConfigError("TaskObjective: empty training pool");
  validate_examples(pool_, config_.vocab);
}

double TaskObjective::loss(const ParameterSet& params, const AdapterState* adapter,
                           std::span<const std::size_t> batch) const {
  return forward_score(config_, params, adapter, gather(pool_, batch), precision_);
}

std::uint64_t TaskObjective::cost_units(std::span<const std::size_t> batch) const {
  return scoring_cost_units(config_, gather(pool_, batch));
}

QuadraticObjective::QuadraticObjective(ParameterSet target, std::size_t pool)
    : target_(std::move(target)), pool_(pool) {}

double QuadraticObjective::loss(const ParameterSet& params, const AdapterState* adapter,
                                std::span<const std::size_t>) const {
  if (params.tensors().size() != target_.tensors().size()) {
    throw DimensionError("QuadraticObjective: tensor count");
  }
  Matrix scratch;
  double s = 0.0;
  for (std::size_t t = 0; t < params.tensors().size(); ++t) {
    const Matrix& w = compose_tensor(params, adapter, t, scratch);
    const auto x = w.data();
    const auto y = target_.tensor(t).value.data();
    for (std::size_t i = 0; i < x.size(); ++i) s += 0.5 * (x[i] - y[i]) * (x[i] - y[i]);
  }
  return s;
}

std::uint64_t QuadraticObjective::cost_units(std::span<const std::size_t>) const {
  return target_.parameter_count();
}

double LinearObjective::loss(const ParameterSet& params, const AdapterState* adapter,
                             std::span<const std::size_t>) const {
  Matrix scratch;
  double s = 0.0;
  for (std::size_t t = 0; t < params.tensors().size(); ++t) {
    for (double x : compose_tensor(params, adapter, t, scratch).data()) s += x;
  }
  return s;
}

double ConstantCostObjective::loss(const ParameterSet&, const AdapterState*,
                                   std::span<const std::size_t>) const {
  volatile double sink = 0.0;
  double acc = 1.0;
  for (std::uint64_t i = 0; i < spin_; ++i) acc = acc * 0.999999 + 1e-9;
  sink = acc;
  (void)sink;
  return value_;
}

Evaluator make_task_evaluator(TransformerConfig config, std::vector<Example> pool,
                              Precision precision) {
  if (pool.empty()) throw ConfigError("evaluator: empty pool");
  return [config, pool = std::move(pool), precision](const ParameterSet& params,
                                                      const AdapterState* adapter) {
    EvalMetrics m;
    Minibatch all{pool};
    m.loss = forward_score(config, params, adapter, all, precision);
    m.accuracy = eval_accuracy(config, params, adapter, pool, precision);
    return m;
  };
}

}  // namespace zoserve
