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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "zoserve/adapter.h"
#include "zoserve/model.h"
#include "zoserve/parameters.h"
#include "zoserve/task.h"

namespace zoserve {

/// The scored objective L(theta; batch). Implementations must be pure with
/// respect to params and adapter.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual double loss(const ParameterSet& params, const AdapterState* adapter,
                      std::span<const std::size_t> batch) const = 0;
  /// Number of training examples minibatches are drawn from.
  virtual std::size_t pool_size() const = 0;
  /// Instrumented cost of one loss() call, in multiply-accumulates.
  virtual std::uint64_t cost_units(std::span<const std::size_t> batch) const = 0;
};

/// Gold-option NLL of the transformer over a training pool.
class TaskObjective final : public Objective {
 public:
  TaskObjective(TransformerConfig config, std::vector<Example> pool,
                Precision precision = Precision::kReal64);

  double loss(const ParameterSet& params, const AdapterState* adapter,
              std::span<const std::size_t> batch) const override;
  std::size_t pool_size() const override { return pool_.size(); }
  std::uint64_t cost_units(std::span<const std::size_t> batch) const override;

  Precision precision() const { return precision_; }

 private:
  TransformerConfig config_;
  std::vector<Example> pool_;
  Precision precision_;
};

/// 0.5 * ||theta_eff - target||^2 over every tensor. Ignores the batch.
class QuadraticObjective final : public Objective {
 public:
  explicit QuadraticObjective(ParameterSet target, std::size_t pool = 1);

  double loss(const ParameterSet& params, const AdapterState* adapter,
              std::span<const std::size_t> batch) const override;
  std::size_t pool_size() const override { return pool_; }
  std::uint64_t cost_units(std::span<const std::size_t>) const override;

 private:
  ParameterSet target_;
  std::size_t pool_;
};

/// Sum of all effective parameter entries. Ignores the batch.
class LinearObjective final : public Objective {
 public:
  explicit LinearObjective(std::size_t pool = 1) : pool_(pool) {}

  double loss(const ParameterSet& params, const AdapterState* adapter,
              std::span<const std::size_t> batch) const override;
  std::size_t pool_size() const override { return pool_; }
  std::uint64_t cost_units(std::span<const std::size_t>) const override { return 0; }

 private:
  std::size_t pool_;
};

/// Stub scorer with a fixed cost that never looks at the weights: returns a
/// constant after `spin_iterations` of opaque arithmetic.
class ConstantCostObjective final : public Objective {
 public:
  ConstantCostObjective(double value, std::uint64_t spin_iterations, std::size_t pool = 1)
      : value_(value), spin_(spin_iterations), pool_(pool) {}

  double loss(const ParameterSet& params, const AdapterState* adapter,
              std::span<const std::size_t> batch) const override;
  std::size_t pool_size() const override { return pool_; }
  std::uint64_t cost_units(std::span<const std::size_t>) const override { return spin_; }

 private:
  double value_;
  std::uint64_t spin_;
  std::size_t pool_;
};

struct EvalMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Periodic evaluation hook used by both execution paths.
using Evaluator = std::function<EvalMetrics(const ParameterSet&, const AdapterState*)>;

/// Mean gold NLL and option-argmax accuracy over `pool`.
Evaluator make_task_evaluator(TransformerConfig config, std::vector<Example> pool,
                              Precision precision = Precision::kReal64);

}  // namespace zoserve
