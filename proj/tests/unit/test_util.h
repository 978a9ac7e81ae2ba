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

// Small builders shared by the unit tests.

#include <cstdint>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "zoserve/matrix.h"
#include "zoserve/objective.h"
#include "zoserve/model.h"
#include "zoserve/parameters.h"
#include "zoserve/random.h"
#include "zoserve/task.h"

namespace zoserve::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                            std::uint32_t id = 0) {
  return sample_gaussian(StreamKey{seed, 0, id, StreamRole::kInit}, rows, cols);
}

// One plain 2-D parameter.
inline ParameterSet single_matrix(const Matrix& w) {
  ParameterSet ps;
  ps.add_matrix("w", w);
  return ps;
}

inline TransformerConfig tiny_config() {
  TransformerConfig c;
  c.vocab = 16;
  c.dim = 8;
  c.layers = 1;
  c.heads = 2;
  c.max_prompt = 8;
  c.ffn_mult = 2;
  return c;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("zoserve_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Cosine similarity of two flat vectors.
inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

inline std::vector<double> flatten(const ParameterSet& ps) {
  std::vector<double> out;
  for (const auto& t : ps.tensors()) out.insert(out.end(), t.value.data().begin(), t.value.data().end());
  return out;
}

// Forwards to `inner` but throws on the fail_on-th call (1-based).
class FailingObjective final : public Objective {
 public:
  FailingObjective(const Objective& inner, int fail_on) : inner_(inner), fail_on_(fail_on) {}
  double loss(const ParameterSet& p, const AdapterState* a,
              std::span<const std::size_t> b) const override {
    if (++calls_ == fail_on_) throw std::runtime_error("injected scoring failure");
    return inner_.loss(p, a, b);
  }
  std::size_t pool_size() const override { return inner_.pool_size(); }
  std::uint64_t cost_units(std::span<const std::size_t> b) const override {
    return inner_.cost_units(b);
  }

 private:
  const Objective& inner_;
  int fail_on_;
  mutable int calls_ = 0;
};

// Tiny transformer plus task objective for path tests.
struct TinySetup {
  ModelParams model;
  TaskSplits task;
  TaskObjective objective;
  Evaluator evaluator;

  explicit TinySetup(std::uint64_t seed = 1)
      : model(init_model(tiny_config(), seed)),
        task(generate_task(seed + 6, TaskSizes{32, 16, 16}, model.config.vocab, {},
                           model.config.max_prompt)),
        objective(model.config, task.train),
        evaluator(make_task_evaluator(model.config, task.dev)) {}
};

}  // namespace zoserve::testing
