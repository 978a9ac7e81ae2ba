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

// Correctness protocol over completed runs: sign agreement of loss
// differences, strict per-step comparison, rank checks and curve reports.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zoserve/matrix.h"
#include "zoserve/run.h"
#include "zoserve/trajectory.h"

namespace zoserve {

inline constexpr double kDefaultTau = 0.005;
inline constexpr double kSamePathLossTol = 1e-12;
inline constexpr double kCrossPrecisionLossTol = 0.05;

struct SignMatchBin {
  double lower = 0.0;  // |delta_A| >= lower
  double upper = 0.0;  // |delta_A| < upper (infinity for the last bin)
  std::size_t pairs = 0;
  std::size_t matches = 0;
};

struct SignMatchReport {
  std::size_t total = 0;
  std::size_t matches = 0;
  double overall = 1.0;
  double tau = kDefaultTau;
  std::size_t high_signal_pairs = 0;
  std::size_t high_signal_matches = 0;
  double high_signal = 1.0;  // 1 when there are no high-signal pairs
  std::vector<SignMatchBin> bins;
};

// Deltas are L+ - L-. Zero is its own sign class.
SignMatchReport sign_match(std::span<const double> delta_a, std::span<const double> delta_b,
                           double tau = kDefaultTau);
SignMatchReport sign_match(const Trajectory& a, const Trajectory& b, double tau = kDefaultTau);

struct StrictCompareReport {
  std::size_t steps = 0;
  std::size_t accepted = 0;
  std::size_t seed_mismatches = 0;
  std::size_t digest_mismatches = 0;
  std::size_t loss_rejections = 0;
  double max_abs_dloss_plus = 0.0;
  double max_abs_dloss_minus = 0.0;
  std::optional<double> final_loss_difference;
  std::vector<std::uint64_t> rejected_steps;
  double loss_tol = kSamePathLossTol;

  bool all_accepted() const { return accepted == steps; }
};

// Throws InputError when step counts or step indices differ, or when the
// model/task digests differ and `force` is not set.
StrictCompareReport strict_compare(const Trajectory& a, const Trajectory& b,
                                   double loss_tol = kSamePathLossTol, bool force = false);

// Singular values in descending order (one-sided Jacobi).
std::vector<double> singular_values(ConstMatrixRef m);

// sigma_{r+1} / sigma_1; 0 for a zero matrix or r >= min(rows, cols).
double rank_check(ConstMatrixRef delta_w, std::size_t r);

struct ReportRun {
  std::string name;
  std::vector<EvalPoint> evals;
  double wall_seconds = 0.0;
};

struct RunSummary {
  std::string name;
  double final_loss = 0.0;
  double final_accuracy = 0.0;
  double wall_seconds = 0.0;
};

struct TrajectorySummary {
  std::vector<RunSummary> runs;
  // With two runs: wall(first) / wall(second), i.e. baseline over serving.
  std::optional<double> speedup;
  std::optional<double> final_loss_difference;
};

TrajectorySummary trajectory_report(std::span<const ReportRun> runs);

// <dir>/<name>.eval.csv per run and <dir>/report.json. A config digest, when
// given, is embedded in every file.
void write_trajectory_report(std::span<const ReportRun> runs, const TrajectorySummary& summary,
                             const std::filesystem::path& dir,
                             std::optional<Digest> config_digest = std::nullopt);

std::string sign_match_json(const SignMatchReport& r);
std::string strict_compare_json(const StrictCompareReport& r);
std::string format_strict_compare(const StrictCompareReport& r);
std::string format_sign_match(const SignMatchReport& r);

}  // namespace zoserve
