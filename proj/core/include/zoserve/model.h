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

#include <cstdint>
#include <span>
#include <vector>

#include "zoserve/adapter.h"
#include "zoserve/parameters.h"
#include "zoserve/task.h"

namespace zoserve {

enum class Precision { kReal64, kReal32 };

const char* to_string(Precision p);

/// Decoder-only transformer: pre-norm blocks with packed QKV, GELU MLP,
/// fixed sinusoidal positions and an output head tied to the embedding.
struct TransformerConfig {
  int vocab = 64;
  int dim = 32;
  int layers = 2;
  int heads = 2;
  int max_prompt = 16;
  int ffn_mult = 4;

  void validate() const;  // throws ConfigError
};

/// Tensor order: embedding, then per layer {ln1.scale, ln1.shift, qkv (blocks
/// q, k, v), out, ln2.scale, ln2.shift, up, down}, then final_norm.{scale,
/// shift}.
struct ModelParams {
  TransformerConfig config;
  ParameterSet params;
};

ModelParams init_model(const TransformerConfig& config, std::uint64_t init_seed);

/// Mean over examples of the gold option's negative log-likelihood under
/// teacher forcing. With an adapter, every tensor is scored in its composed
/// form; nothing in params or adapter is written.
double forward_score(const TransformerConfig& config, const ParameterSet& params,
                     const AdapterState* adapter, const Minibatch& batch,
                     Precision precision = Precision::kReal64);
double forward_score(const ModelParams& model, const AdapterState* adapter,
                     const Minibatch& batch, Precision precision = Precision::kReal64);

/// Per-example, per-candidate option log-probabilities (sum over option
/// tokens).
std::vector<std::vector<double>> option_logprobs(const TransformerConfig& config,
                                                 const ParameterSet& params,
                                                 const AdapterState* adapter,
                                                 std::span<const Example> examples,
                                                 Precision precision = Precision::kReal64);

/// Fraction of examples whose gold option has the highest log-probability;
/// ties resolve to the lowest option index.
double eval_accuracy(const TransformerConfig& config, const ParameterSet& params,
                     const AdapterState* adapter, std::span<const Example> pool,
                     Precision precision = Precision::kReal64);

/// Central-difference gradient of forward_score (real64), one entry per
/// parameter, returned in the shape of model.params.
ParameterSet full_gradient_fd(const ModelParams& model, const Minibatch& batch, double h);

/// Multiply-accumulate count of one forward_score call.
std::uint64_t scoring_cost_units(const TransformerConfig& config, const Minibatch& batch);

/// <a, b> summed over every tensor. Shapes must agree.
double inner_product(const ParameterSet& a, const ParameterSet& b);

}  // namespace zoserve
