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

#include "zoserve/task.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "zoserve/errors.h"
#include "zoserve/random.h"

namespace zoserve {
namespace {

Example make_example(std::uint64_t seed, std::uint32_t split, std::uint64_t index,
                     std::uint32_t attempt, int label, int vocab, const PlantedRule& rule,
                     int max_prompt) {
  CounterStream stream(StreamKey{seed, index, (split << 16) | attempt, StreamRole::kTask});
  const int min_len = std::max(2, max_prompt / 2);
  const int len = min_len + static_cast<int>(stream.below(max_prompt - min_len + 1));
  const int filler_lo = std::max(rule.bos_token, rule.marker_token) + 1;
  const int filler_hi = vocab - 2;  // exclusive; options live above
  Example ex;
  ex.prompt.reserve(len);
  ex.prompt.push_back(rule.bos_token);
  for (int p = 1; p < len; ++p) {
    ex.prompt.push_back(filler_lo + static_cast<int>(stream.below(filler_hi - filler_lo)));
  }
  if (label == 1) ex.prompt[1 + stream.below(len - 1)] = rule.marker_token;
  ex.candidates = {{vocab - 2}, {vocab - 1}};
  ex.gold = label;
  return ex;
}

std::vector<int> balanced_labels(std::uint64_t seed, std::uint32_t split, std::size_t n) {
  std::vector<int> labels(n, 0);
  std::fill(labels.begin(), labels.begin() + n / 2, 1);
  CounterStream stream(StreamKey{seed, 0xFFFFFFFFull, split, StreamRole::kTask});
  for (std::size_t i = n; i > 1; --i) std::swap(labels[i - 1], labels[stream.below(i)]);
  return labels;
}

nlohmann::json examples_to_json(const std::vector<Example>& pool) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& ex : pool) {
    arr.push_back({{"prompt", ex.prompt}, {"candidates", ex.candidates}, {"gold", ex.gold}});
  }
  return arr;
}

std::vector<Example> examples_from_json(const nlohmann::json& arr) {
  std::vector<Example> pool;
  for (const auto& j : arr) {
    Example ex;
    ex.prompt = j.at("prompt").get<std::vector<int>>();
    ex.candidates = j.at("candidates").get<std::vector<std::vector<int>>>();
    ex.gold = j.at("gold").get<int>();
    pool.push_back(std::move(ex));
  }
  return pool;
}

}  // namespace

Digest TaskSplits::digest() const {
  Fnv1a h;
  h.update_u64(seed);
  h.update_u64(static_cast<std::uint64_t>(vocab));
  for (const auto* pool : {&train, &dev, &validation}) {
    h.update_u64(pool->size());
    for (const auto& ex : *pool) {
      for (int t : ex.prompt) h.update_u64(static_cast<std::uint64_t>(t));
      h.update_u64(~0ull);
      for (const auto& c : ex.candidates) {
        for (int t : c) h.update_u64(static_cast<std::uint64_t>(t));
        h.update_u64(~1ull);
      }
      h.update_u64(static_cast<std::uint64_t>(ex.gold));
    }
  }
  return h.digest();
}

TaskSplits generate_task(std::uint64_t task_seed, const TaskSizes& sizes, int vocab,
                         const PlantedRule& rule, int max_prompt) {
  if (sizes.train == 0 || sizes.dev == 0 || sizes.validation == 0) {
    throw ConfigError("generate_task: every split needs at least one example");
  }
  const int filler_lo = std::max(rule.bos_token, rule.marker_token) + 1;
  if (vocab - 2 <= filler_lo) throw ConfigError("generate_task: vocabulary too small");
  if (max_prompt < 2) throw ConfigError("generate_task: max_prompt must be >= 2");

  TaskSplits task;
  task.seed = task_seed;
  task.vocab = vocab;
  task.rule = rule;
  std::set<std::vector<int>> seen;
  const std::size_t counts[3] = {sizes.train, sizes.dev, sizes.validation};
  std::vector<Example>* pools[3] = {&task.train, &task.dev, &task.validation};
  for (std::uint32_t split = 0; split < 3; ++split) {
    const auto labels = balanced_labels(task_seed, split, counts[split]);
    for (std::size_t i = 0; i < counts[split]; ++i) {
      for (std::uint32_t attempt = 0;; ++attempt) {
        if (attempt > 0xFFFF) throw ConfigError("generate_task: prompt space exhausted");
        Example ex =
            make_example(task_seed, split, i, attempt, labels[i], vocab, rule, max_prompt);
        if (seen.insert(ex.prompt).second) {
          pools[split]->push_back(std::move(ex));
          break;
        }
      }
    }
  }
  return task;
}

int rule_label(const Example& example, const PlantedRule& rule) {
  return std::find(example.prompt.begin(), example.prompt.end(), rule.marker_token) !=
                 example.prompt.end()
             ? 1
             : 0;
}

void validate_examples(std::span<const Example> examples, int vocab) {
  auto check = [vocab](int t) {
    if (t < 0 || t >= vocab) {
      throw InputError("token id " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
  };
  for (const auto& ex : examples) {
    if (ex.prompt.empty()) throw InputError("empty prompt");
    for (int t : ex.prompt) check(t);
    if (ex.candidates.empty()) throw InputError("example without candidates");
    for (const auto& c : ex.candidates) {
      if (c.empty()) throw InputError("empty candidate");
      for (int t : c) check(t);
    }
    if (ex.gold < 0 || static_cast<std::size_t>(ex.gold) >= ex.candidates.size()) {
      throw InputError("gold index " + std::to_string(ex.gold) + " out of range");
    }
  }
}

Minibatch gather(std::span<const Example> pool, std::span<const std::size_t> indices) {
  Minibatch batch;
  batch.examples.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= pool.size()) throw InputError("gather: index out of range");
    batch.examples.push_back(pool[i]);
  }
  return batch;
}

void save_task(const TaskSplits& task, const std::filesystem::path& path) {
  nlohmann::json j;
  j["schema"] = 1;
  j["seed"] = task.seed;
  j["vocab"] = task.vocab;
  j["rule"] = {{"bos_token", task.rule.bos_token}, {"marker_token", task.rule.marker_token}};
  j["digest"] = task.digest().hex();
  j["train"] = examples_to_json(task.train);
  j["dev"] = examples_to_json(task.dev);
  j["validation"] = examples_to_json(task.validation);
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump() << '\n';
}

TaskSplits load_task(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    TaskSplits task;
    task.seed = j.at("seed").get<std::uint64_t>();
    task.vocab = j.at("vocab").get<int>();
    task.rule.bos_token = j.at("rule").at("bos_token").get<int>();
    task.rule.marker_token = j.at("rule").at("marker_token").get<int>();
    task.train = examples_from_json(j.at("train"));
    task.dev = examples_from_json(j.at("dev"));
    task.validation = examples_from_json(j.at("validation"));
    for (const auto* pool : {&task.train, &task.dev, &task.validation}) {
      validate_examples(*pool, task.vocab);
    }
    if (j.contains("digest") && j["digest"].get<std::string>() != task.digest().hex()) {
      throw InputError("task file digest mismatch: " + path.string());
    }
    return task;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed task file " + path.string() + ": " + e.what());
  }
}

}  // namespace zoserve
