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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zoserve/adapter.h"
#include "zoserve/digest.h"
#include "zoserve/objective.h"
#include "zoserve/parameters.h"
#include "zoserve/random.h"

namespace zoserve {

enum class Estimator { kDenseMezo, kLozoLazy, kFactorizedSqrtR };
enum class Scope { kFull, kLoraOnly };

const char* to_string(Estimator e);
const char* to_string(Scope s);
std::optional<Estimator> parse_estimator(std::string_view text);
std::optional<Scope> parse_scope(std::string_view text);

struct ZoConfig {
  double epsilon = 1e-3;
  double learning_rate = 1e-3;
  std::size_t rank = 2;
  std::size_t nu = 50;
  /// Divide low-rank updates by r (the estimator's textbook form). Off by
  /// default: the reference LoZO update does not divide.
  bool divide_by_r = false;
  Scope scope = Scope::kLoraOnly;
  Estimator estimator = Estimator::kLozoLazy;
  std::uint64_t seed = 42;
  std::size_t batch_size = 16;

  void validate() const;  // throws ConfigError
};

/// Per-step audit record shared by every execution path.
struct ZoStepRecord {
  std::uint64_t step = 0;
  double loss_plus = 0.0;
  double loss_minus = 0.0;
  double coefficient = 0.0;  // (loss_plus - loss_minus) / (2 epsilon)
  double beta = 0.0;         // effective slot weight: -eta * c (/ r when dividing)
  std::uint64_t seed = 0;
  Digest u_digest;
  Digest v_digest;
  Digest minibatch_id;

  bool operator==(const ZoStepRecord&) const = default;
};

/// Minibatch indices for `step`, drawn from the Minibatch stream.
std::vector<std::size_t> minibatch_indices(const ZoConfig& config, std::uint64_t step,
                                           std::size_t pool);
Digest minibatch_id(std::span<const std::size_t> indices);

struct CoefficientEstimate {
  double coefficient = 0.0;
  double loss_plus = 0.0;
  double loss_minus = 0.0;
};

/// Scores the installed probe at +epsilon and -epsilon and returns
/// c = (L+ - L-) / (2 epsilon). Exactly two objective calls and no weight
/// writes; perturb_sign is back at 0 on return, including on throw.
CoefficientEstimate estimate_coefficient(const Objective& objective, const ParameterSet& params,
                                         AdapterState& adapter, double epsilon,
                                         std::span<const std::size_t> batch);

struct LowRankDirection {
  Matrix u;  // m x r, fresh every step
  Matrix v;  // n x r, shared by the lazy window
};

/// U keyed by (seed, t, layer, U); V keyed by (seed, floor(t / nu) * nu,
/// layer, V). Requires 1 <= r <= min(m, n).
LowRankDirection lozo_direction(std::uint64_t seed, std::uint32_t layer_id, std::uint64_t step,
                                std::size_t nu, std::size_t r, std::size_t m, std::size_t n);

/// z = U V^T / sqrt(r) as a slot (A = U, B = V, scale = 1/sqrt(r)); both
/// factors fresh at `step`.
LoraSlot factorized_direction(std::uint64_t seed, std::uint32_t layer_id, std::uint64_t step,
                              std::size_t r, std::size_t m, std::size_t n);

/// Dense N(0, 1) direction from the DenseZ stream.
Matrix dense_direction(std::uint64_t seed, std::uint32_t layer_id, std::uint64_t step,
                       std::size_t m, std::size_t n);

/// All directions one step consumes, plus their digests.
struct StepDirections {
  std::vector<std::optional<LoraSlot>> blocks;            // low-rank estimators
  std::vector<std::optional<Matrix>> dense_blocks;        // DenseMezo
  std::vector<std::optional<std::vector<double>>> vectors;  // Full scope / DenseMezo
  Digest u_digest;
  Digest v_digest;
};

StepDirections draw_directions(const ParameterSet& params, const ZoConfig& config,
                               std::uint64_t step);

enum class UpdateMode {
  kAccumulateOnU,  // updates live in adapter slots until folded
  kMaterialize,    // updates are written into the dense weights at once
};

struct ZoTarget {
  ParameterSet& params;
  AdapterState& adapter;
  UpdateMode mode = UpdateMode::kAccumulateOnU;
  std::size_t slot_cap = 4;
};

/// One lazy low-rank step: probes through the adapter's perturbation slots,
/// one shared coefficient for every perturbed parameter, then the U-factor
/// (or dense) update. If scoring throws, target is left exactly as it was.
ZoStepRecord lozo_step(ZoTarget& target, const Objective& objective, const ZoConfig& config,
                       std::uint64_t step, std::span<const std::size_t> batch);

/// High-rank factorized step: probes with U V^T / sqrt(r) and records the
/// update as a fresh slot (or dense write in kMaterialize mode).
ZoStepRecord factorized_step(ZoTarget& target, const Objective& objective,
                             const ZoConfig& config, std::uint64_t step,
                             std::span<const std::size_t> batch);

/// Dense two-point step with in-place perturbation and restore:
/// theta += eps z, score, theta -= 2 eps z, score, theta += eps z,
/// theta -= eta c z.
ZoStepRecord dense_mezo_step(ParameterSet& params, const Objective& objective,
                             const ZoConfig& config, std::uint64_t step,
                             std::span<const std::size_t> batch);

/// Dispatches on config.estimator (DenseMezo ignores the adapter).
ZoStepRecord zo_step(ZoTarget& target, const Objective& objective, const ZoConfig& config,
                     std::uint64_t step, std::span<const std::size_t> batch);

/// Learning rate applied to low-rank factors (eta, or eta / r).
double effective_rate(const ZoConfig& config);

}  // namespace zoserve
