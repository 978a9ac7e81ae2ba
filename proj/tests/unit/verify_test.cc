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

#include <cmath>
#include <fstream>
#include <limits>

#include <Eigen/Dense>
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "test_util.h"
#include "zoserve/baseline_loop.h"
#include "zoserve/errors.h"
#include "zoserve/runtime.h"
#include "zoserve/verify.h"

namespace zoserve {
namespace {

using testing::random_matrix;

Trajectory synthetic_trajectory(std::size_t n, std::uint64_t seed) {
  Trajectory t;
  t.header.path = "serving";
  t.header.model_digest = Digest{11};
  t.header.task_digest = Digest{12};
  t.header.steps = n;
  CounterStream rng(StreamKey{seed, 0, 0, StreamRole::kTask});
  for (std::size_t i = 0; i < n; ++i) {
    ZoStepRecord r;
    r.step = i;
    r.loss_plus = 1.0 + rng.normal();
    r.loss_minus = 1.0 + rng.normal();
    r.coefficient = (r.loss_plus - r.loss_minus) / 2e-3;
    r.seed = 42;
    r.u_digest = Digest{rng.next_u64()};
    r.v_digest = Digest{rng.next_u64()};
    t.steps.push_back(r);
  }
  t.evals = {{0, 2.0, 0.5}, {n, 1.5, 0.6}};
  return t;
}

TEST(SignMatch, SelfComparisonIsPerfect) {
  const std::vector<double> d{0.1, -0.002, 0.0, 3e-4, -0.7};
  const auto r = sign_match(d, d);
  EXPECT_EQ(r.total, 5u);
  EXPECT_EQ(r.overall, 1.0);
  EXPECT_EQ(r.high_signal, 1.0);
  EXPECT_EQ(r.high_signal_pairs, 2u);
}

TEST(SignMatch, NegationMatchesNothing) {
  const std::vector<double> a{0.1, -0.002, 3e-4, -0.7};
  std::vector<double> b;
  for (double x : a) b.push_back(-x);
  const auto r = sign_match(a, b);
  EXPECT_EQ(r.matches, 0u);
  EXPECT_EQ(r.overall, 0.0);
  EXPECT_EQ(r.high_signal, 0.0);
}

TEST(SignMatch, ZeroIsItsOwnSign) {
  const std::vector<double> a{0.0, 0.0, 1.0};
  const std::vector<double> b{0.0, 1e-9, 1.0};
  const auto r = sign_match(a, b);
  EXPECT_EQ(r.matches, 2u);
}

TEST(SignMatch, BinsPartitionThePairs) {
  const std::vector<double> a{1e-7, -4e-5, 2e-4, 0.004, 0.006, -1.0};
  const std::vector<double> b{-1e-7, -4e-5, 2e-4, -0.004, 0.006, -1.0};
  const auto r = sign_match(a, b, 0.005);
  ASSERT_EQ(r.bins.size(), 4u);
  std::size_t pairs = 0, matches = 0;
  for (const auto& bin : r.bins) {
    pairs += bin.pairs;
    matches += bin.matches;
  }
  EXPECT_EQ(pairs, 6u);
  EXPECT_EQ(matches, r.matches);
  EXPECT_EQ(r.bins.back().pairs, 2u);
  EXPECT_EQ(r.bins.back().matches, 2u);
  EXPECT_TRUE(std::isinf(r.bins.back().upper));
  EXPECT_EQ(r.high_signal, 1.0);
  EXPECT_NEAR(r.overall, 4.0 / 6.0, 1e-15);
}

TEST(SignMatch, LengthMismatchIsInputError) {
  const std::vector<double> a{1, 2}, b{1};
  EXPECT_THROW(sign_match(a, b), InputError);
}

TEST(StrictCompare, SelfComparison) {
  const Trajectory t = synthetic_trajectory(20, 1);
  const auto r = strict_compare(t, t);
  EXPECT_EQ(r.steps, 20u);
  EXPECT_EQ(r.accepted, 20u);
  EXPECT_TRUE(r.all_accepted());
  EXPECT_EQ(r.max_abs_dloss_plus, 0.0);
  EXPECT_EQ(r.max_abs_dloss_minus, 0.0);
  EXPECT_EQ(r.final_loss_difference, 0.0);
  EXPECT_EQ(sign_match(t, t).overall, 1.0);
}

TEST(StrictCompare, CorruptedDigestFlaggedAtItsStep) {
  const Trajectory a = synthetic_trajectory(20, 2);
  Trajectory b = a;
  b.steps[13].v_digest.value ^= 1;
  const auto r = strict_compare(a, b);
  EXPECT_EQ(r.digest_mismatches, 1u);
  EXPECT_EQ(r.accepted, 19u);
  EXPECT_EQ(r.rejected_steps, std::vector<std::uint64_t>{13});
  EXPECT_EQ(r.seed_mismatches, 0u);
}

TEST(StrictCompare, LossAndSeedChecks) {
  const Trajectory a = synthetic_trajectory(10, 3);
  Trajectory b = a;
  b.steps[2].loss_plus += 1e-9;
  b.steps[5].loss_minus -= 0.25;
  b.steps[7].seed = 7;
  b.evals.back().loss += 0.125;
  const auto r = strict_compare(a, b, 1e-12);
  EXPECT_EQ(r.loss_rejections, 2u);
  EXPECT_EQ(r.seed_mismatches, 1u);
  EXPECT_EQ(r.accepted, 7u);
  EXPECT_NEAR(r.max_abs_dloss_plus, 1e-9, 1e-12);
  EXPECT_NEAR(r.max_abs_dloss_minus, 0.25, 1e-12);
  EXPECT_EQ(*r.final_loss_difference, 0.125);
  // A looser tolerance admits the small drift only.
  EXPECT_EQ(strict_compare(a, b, 1e-6).loss_rejections, 1u);
  // Symmetric counts and maxima.
  const auto s = strict_compare(b, a, 1e-12);
  EXPECT_EQ(s.accepted, r.accepted);
  EXPECT_EQ(s.digest_mismatches, r.digest_mismatches);
  EXPECT_EQ(s.seed_mismatches, r.seed_mismatches);
  EXPECT_EQ(s.max_abs_dloss_plus, r.max_abs_dloss_plus);
  EXPECT_EQ(s.rejected_steps, r.rejected_steps);
}

TEST(StrictCompare, RefusesDifferentModelsUnlessForced) {
  const Trajectory a = synthetic_trajectory(5, 4);
  Trajectory b = a;
  b.header.task_digest = Digest{99};
  EXPECT_THROW(strict_compare(a, b), InputError);
  EXPECT_EQ(strict_compare(a, b, kSamePathLossTol, true).accepted, 5u);
  Trajectory short_b = synthetic_trajectory(4, 4);
  EXPECT_THROW(strict_compare(a, short_b), InputError);
}

TEST(StrictCompare, BaselineAgainstServingOnTinyModel) {
  const testing::TinySetup s;
  ZoConfig c;
  c.batch_size = 8;
  c.nu = 5;
  RunOptions o;
  o.steps = 20;
  o.eval_every = 10;
  const PathRun base = run_baseline(c, s.model.params, s.objective, &s.evaluator, o);
  const PathRun serv = run_serving_path(c, s.model.params, s.objective, &s.evaluator, o);
  TrajectoryHeader h;
  h.model_digest = s.model.params.digest();
  h.task_digest = s.task.digest();
  h.path = "baseline";
  const Trajectory ta = compare_ready_export(base, h);
  h.path = "serving";
  const Trajectory tb = compare_ready_export(serv, h);
  const auto r = strict_compare(ta, tb);
  EXPECT_EQ(r.accepted, 20u);
  EXPECT_EQ(r.digest_mismatches, 0u);
  EXPECT_EQ(r.seed_mismatches, 0u);
  EXPECT_LE(r.max_abs_dloss_plus, 1e-12);
  EXPECT_LE(r.max_abs_dloss_minus, 1e-12);
  EXPECT_LE(*r.final_loss_difference, 1e-9);
  const auto sm = sign_match(ta, tb);
  EXPECT_EQ(sm.overall, 1.0);
  const nlohmann::json j = nlohmann::json::parse(strict_compare_json(r));
  EXPECT_EQ(j["accepted"], 20);
  EXPECT_NE(format_strict_compare(r).find("20/20"), std::string::npos);
}

Eigen::VectorXd eigen_singular_values(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return Eigen::JacobiSVD<Eigen::MatrixXd>(e).singularValues();
}

TEST(RankCheck, ExactLowRank) {
  for (std::size_t r : {1, 2, 3}) {
    const Matrix d = outer_product(random_matrix(9, r, 1), random_matrix(7, r, 2));
    EXPECT_LE(rank_check(d, r), 1e-12) << r;
    EXPECT_GT(rank_check(d, r - 1), 1e-3) << r;
  }
}

TEST(RankCheck, IdentityHasFlatSpectrum) {
  Matrix id(4, 4);
  for (std::size_t i = 0; i < 4; ++i) id(i, i) = 1.0;
  EXPECT_NEAR(rank_check(id, 2), 1.0, 1e-15);
}

TEST(RankCheck, ZeroMatrixAndLargeRank) {
  EXPECT_EQ(rank_check(Matrix(3, 3), 1), 0.0);
  EXPECT_EQ(rank_check(random_matrix(3, 5, 3), 3), 0.0);
}

TEST(RankCheck, SingularValuesMatchEigen) {
  for (auto [m, n] : {std::pair{6, 6}, std::pair{9, 4}, std::pair{4, 9}, std::pair{12, 10}}) {
    const Matrix a = random_matrix(m, n, 40 + m * n);
    const auto ours = singular_values(a);
    const Eigen::VectorXd ref = eigen_singular_values(a);
    ASSERT_EQ(ours.size(), static_cast<std::size_t>(ref.size()));
    for (std::size_t i = 0; i < ours.size(); ++i) EXPECT_NEAR(ours[i], ref(i), 1e-12 * ref(0));
  }
}

TEST(RankCheck, LazyWindowFromServingRun) {
  ZoConfig c;
  c.rank = 2;
  c.nu = 8;
  c.learning_rate = 0.01;
  const Matrix w0 = random_matrix(10, 8, 50);
  QuadraticObjective quad(testing::single_matrix(Matrix(10, 8)));
  RunOptions o;
  o.steps = 8;
  o.eval_every = 0;
  const PathRun run = run_serving_path(c, testing::single_matrix(w0), quad, nullptr, o);
  Matrix dw = run.params.tensor(0).value;
  axpy(dw, -1.0, w0);
  EXPECT_LE(rank_check(dw, 2), 1e-10);
}

TEST(TrajectoryReport, SingleRunHasNoSpeedup) {
  const ReportRun a{"serving", {{0, 2.0, 0.5, 0.0}, {10, 1.0, 0.7, 12.0}}, 0.5};
  const auto s = trajectory_report(std::span(&a, 1));
  EXPECT_FALSE(s.speedup.has_value());
  ASSERT_EQ(s.runs.size(), 1u);
  EXPECT_EQ(s.runs[0].final_loss, 1.0);
  EXPECT_EQ(s.runs[0].final_accuracy, 0.7);
}

TEST(TrajectoryReport, SpeedupIsRatioOfTotals) {
  const std::vector<ReportRun> runs{{"baseline", {{0, 2.0, 0.5, 0.0}, {10, 1.25, 0.6, 30.0}}, 3.0},
                                    {"serving", {{0, 2.0, 0.5, 0.0}, {10, 1.0, 0.7, 7.5}}, 0.75}};
  const auto s = trajectory_report(runs);
  ASSERT_TRUE(s.speedup.has_value());
  EXPECT_DOUBLE_EQ(*s.speedup, 4.0);
  EXPECT_DOUBLE_EQ(*s.final_loss_difference, 0.25);
  const auto dir = testing::temp_dir("report");
  write_trajectory_report(runs, s, dir, Digest{0xabc});
  std::ifstream js(dir / "report.json");
  const auto j = nlohmann::json::parse(js);
  EXPECT_DOUBLE_EQ(j["speedup"].get<double>(), 4.0);
  std::ifstream csv(dir / "serving.eval.csv");
  std::string first, header, row;
  std::getline(csv, first);
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_NE(first.find(Digest{0xabc}.hex()), std::string::npos);
  EXPECT_EQ(header, "step,wall_ms,eval_loss,eval_acc");
  EXPECT_EQ(row.substr(0, 2), "0,");
}

}  // namespace
}  // namespace zoserve
