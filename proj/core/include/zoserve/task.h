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
#include <filesystem>
#include <span>
#include <vector>

#include "zoserve/digest.h"

namespace zoserve {

/// One classification example scored by option-token likelihood.
struct Example {
  std::vector<int> prompt;
  std::vector<std::vector<int>> candidates;
  int gold = 0;

  bool operator==(const Example&) const = default;
};

struct Minibatch {
  std::vector<Example> examples;
};

/// Marker-presence rule: label 1 iff the marker token occurs in the prompt.
/// Token 0 opens every prompt, the marker is token 1, the last two vocabulary
/// entries are the "no" / "yes" options and everything between is filler.
struct PlantedRule {
  int bos_token = 0;
  int marker_token = 1;
};

struct TaskSizes {
  std::size_t train = 256;
  std::size_t dev = 64;
  std::size_t validation = 128;
};

struct TaskSplits {
  std::uint64_t seed = 0;
  int vocab = 0;
  PlantedRule rule;
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> validation;

  Digest digest() const;
};

/// Deterministic, pairwise-disjoint splits. Each split holds floor(n/2)
/// positive examples. Prompt lengths are uniform in
/// [max(2, max_prompt / 2), max_prompt].
TaskSplits generate_task(std::uint64_t task_seed, const TaskSizes& sizes, int vocab,
                         const PlantedRule& rule = {}, int max_prompt = 16);

/// Label predicted by applying the planted rule directly.
int rule_label(const Example& example, const PlantedRule& rule);

/// Throws InputError when a token id is outside [0, vocab) or a gold index
/// is out of range.
void validate_examples(std::span<const Example> examples, int vocab);

Minibatch gather(std::span<const Example> pool, std::span<const std::size_t> indices);

void save_task(const TaskSplits& task, const std::filesystem::path& path);
TaskSplits load_task(const std::filesystem::path& path);

}  // namespace zoserve
