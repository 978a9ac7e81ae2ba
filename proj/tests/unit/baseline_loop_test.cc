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

#include <cfloat>

#include <gtest/gtest.h>

#include "test_util.h"
#include "zoserve/baseline_loop.h"
#include "zoserve/errors.h"
#include "zoserve/trajectory.h"

namespace zoserve {
namespace {

using testing::random_matrix;
using testing::single_matrix;

RunOptions steps_only(std::size_t steps, std::size_t eval_every = 0) {
  RunOptions o;
  o.steps = steps;
  o.eval_every = eval_every;
  return o;
}

ZoConfig toy_config(std::size_t rank = 1) {
  ZoConfig c;
  c.rank = rank;
  c.nu = 5;
  c.learning_rate = 0.01;
  c.batch_size = 1;
  return c;
}

TEST(RunBaseline, OneStepOneMatrixIsSixtyFourWrites) {
  LinearObjective lin;
  const BaselineRun run = run_baseline(toy_config(), single_matrix(random_matrix(4, 4, 1)), lin,
                                       nullptr, steps_only(1));
  EXPECT_EQ(run.weight_write_count(), 64u);
  EXPECT_EQ(run.trajectory.size(), 1u);
  EXPECT_EQ(run.path, ExecutionPath::kBaseline);
}

TEST(RunBaseline, WriteLawIncludesVectorsUnderFullScope) {
  ParameterSet ps;
  ps.add_matrix("a", random_matrix(6, 5, 2));
  const std::vector<std::string> parts{"q", "k", "v"};
  ps.add_packed("qkv", random_matrix(6, 9, 3), parts);
  ps.add_vector("g", std::vector<double>(7, 1.0));
  LinearObjective lin;
  for (auto scope : {Scope::kLoraOnly, Scope::kFull}) {
    ZoConfig c = toy_config(2);
    c.scope = scope;
    const BaselineRun run = run_baseline(c, ps, lin, nullptr, steps_only(7));
    const std::uint64_t per_step = 4 * (6 * 5 + 3 * 6 * 3) + (scope == Scope::kFull ? 4 * 7 : 0);
    EXPECT_EQ(run.weight_write_count(), 7 * per_step);
    EXPECT_EQ(baseline_write_law(ps, c, 7), 7 * per_step);
  }
}

TEST(RunBaseline, RestoreIsExactUpToRounding) {
  // With eta = 0 the update adds zero, so the final weights are the restored ones.
  const Matrix w0 = random_matrix(8, 8, 4);
  ZoConfig c = toy_config(2);
  c.learning_rate = 0.0;
  QuadraticObjective quad(single_matrix(Matrix(8, 8)));
  double mx = 0;
  for (double x : w0.data()) mx = std::max(mx, std::abs(x));
  for (bool recompute : {false, true}) {
    RunOptions o = steps_only(20);
    o.recompute_products = recompute;
    const BaselineRun run = run_baseline(c, single_matrix(w0), quad, nullptr, o);
    EXPECT_LE(max_abs_diff(run.params.tensor(0).value, w0), 16 * DBL_EPSILON * mx);
  }
}

TEST(RunBaseline, RecomputeMatchesCachedClosely) {
  const testing::TinySetup s;
  ZoConfig c = toy_config(2);
  c.batch_size = 4;
  c.learning_rate = 1e-3;
  RunOptions o = steps_only(10);
  const BaselineRun cached = run_baseline(c, s.model.params, s.objective, nullptr, o);
  o.recompute_products = true;
  const BaselineRun recomputed = run_baseline(c, s.model.params, s.objective, nullptr, o);
  EXPECT_LE(relative_distance(recomputed.params, cached.params), 1e-10);
  for (std::size_t t = 0; t < 10; ++t)
    EXPECT_EQ(cached.trajectory[t].u_digest, recomputed.trajectory[t].u_digest);
}

TEST(RunBaseline, Deterministic) {
  const testing::TinySetup s;
  ZoConfig c = toy_config(2);
  c.batch_size = 4;
  const BaselineRun a = run_baseline(c, s.model.params, s.objective, nullptr, steps_only(6));
  const BaselineRun b = run_baseline(c, s.model.params, s.objective, nullptr, steps_only(6));
  EXPECT_EQ(a.trajectory, b.trajectory);
  EXPECT_EQ(a.params.digest(), b.params.digest());
}

TEST(RunBaseline, EvaluationCadence) {
  const testing::TinySetup s;
  ZoConfig c = toy_config(2);
  c.batch_size = 4;
  const BaselineRun run = run_baseline(c, s.model.params, s.objective, &s.evaluator, steps_only(12, 5));
  std::vector<std::uint64_t> at;
  for (const auto& e : run.evals) at.push_back(e.step);
  EXPECT_EQ(at, (std::vector<std::uint64_t>{0, 5, 10, 12}));
  for (std::size_t i = 1; i < run.evals.size(); ++i) EXPECT_GE(run.evals[i].wall_ms, run.evals[i - 1].wall_ms);
}

TEST(RunBaseline, LossFallsOnQuadratic) {
  ZoConfig c = toy_config(2);
  c.learning_rate = 0.02;
  QuadraticObjective quad(single_matrix(Matrix(6, 6)));
  const BaselineRun run = run_baseline(c, single_matrix(random_matrix(6, 6, 5)), quad, nullptr,
                                       steps_only(200));
  EXPECT_LT(run.trajectory.back().loss_plus, 0.5 * run.trajectory.front().loss_plus);
}

TEST(RunBaseline, RejectsZeroSteps) {
  LinearObjective lin;
  EXPECT_THROW(run_baseline(toy_config(), single_matrix(Matrix(2, 2)), lin, nullptr, steps_only(0)),
               ConfigError);
}

TEST(CompareReadyExport, RoundTrip) {
  const testing::TinySetup s;
  ZoConfig c = toy_config(2);
  c.batch_size = 4;
  const BaselineRun run = run_baseline(c, s.model.params, s.objective, &s.evaluator, steps_only(9, 4));
  TrajectoryHeader h;
  h.path = "baseline";
  h.model_digest = s.model.params.digest();
  h.task_digest = s.task.digest();
  h.estimator = to_string(c.estimator);
  h.precision = "real64";
  const Trajectory t = compare_ready_export(run, h);
  EXPECT_EQ(t.header.steps, 9u);
  ASSERT_EQ(t.steps.size(), 9u);
  EXPECT_EQ(t.evals.size(), run.evals.size());
  for (const auto& r : t.steps) {
    EXPECT_NE(r.u_digest.value, 0u);
    EXPECT_NE(r.v_digest.value, 0u);
    EXPECT_NE(r.minibatch_id.value, 0u);
  }
  const std::string text = to_jsonl(t);
  EXPECT_EQ(parse_jsonl(text), t);
  const auto dir = testing::temp_dir("export");
  save_trajectory(t, dir / "b.jsonl");
  EXPECT_EQ(load_trajectory(dir / "b.jsonl"), t);
  EXPECT_EQ(file_digest(dir / "b.jsonl"), trajectory_digest(t));
}

TEST(Trajectory, ParseRejectsMalformed) {
  EXPECT_THROW(parse_jsonl(""), InputError);
  EXPECT_THROW(parse_jsonl("{not json}\n"), InputError);
  Trajectory t;
  t.header.steps = 2;  // but no step lines
  t.header.path = "baseline";
  EXPECT_THROW(parse_jsonl(to_jsonl(t)), InputError);
}

}  // namespace
}  // namespace zoserve
