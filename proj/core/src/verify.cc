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

#include "zoserve/verify.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "zoserve/errors.h"

namespace zoserve {
namespace {

int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

// Bin edges below tau, one decade apart.
std::vector<SignMatchBin> make_bins(double tau) {
  std::vector<SignMatchBin> bins;
  const double inf = std::numeric_limits<double>::infinity();
  bins.push_back({0.0, tau / 100.0, 0, 0});
  bins.push_back({tau / 100.0, tau / 10.0, 0, 0});
  bins.push_back({tau / 10.0, tau, 0, 0});
  bins.push_back({tau, inf, 0, 0});
  return bins;
}

}  // namespace

SignMatchReport sign_match(std::span<const double> delta_a, std::span<const double> delta_b,
                           double tau) {
  if (delta_a.size() != delta_b.size()) {
    throw InputError("sign_match: length mismatch " + std::to_string(delta_a.size()) + " vs " +
                     std::to_string(delta_b.size()));
  }
  SignMatchReport r;
  r.tau = tau;
  r.total = delta_a.size();
  r.bins = make_bins(tau);
  for (std::size_t i = 0; i < delta_a.size(); ++i) {
    const bool match = sign_of(delta_a[i]) == sign_of(delta_b[i]);
    const double mag = std::abs(delta_a[i]);
    r.matches += match;
    if (mag >= tau) {
      ++r.high_signal_pairs;
      r.high_signal_matches += match;
    }
    for (auto& bin : r.bins) {
      if (mag >= bin.lower && mag < bin.upper) {
        ++bin.pairs;
        bin.matches += match;
        break;
      }
    }
  }
  r.overall = r.total ? static_cast<double>(r.matches) / static_cast<double>(r.total) : 1.0;
  r.high_signal = r.high_signal_pairs ? static_cast<double>(r.high_signal_matches) /
                                            static_cast<double>(r.high_signal_pairs)
                                      : 1.0;
  return r;
}

SignMatchReport sign_match(const Trajectory& a, const Trajectory& b, double tau) {
  if (a.steps.size() != b.steps.size()) throw InputError("sign_match: step counts differ");
  std::vector<double> da;
  std::vector<double> db;
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    if (a.steps[i].step != b.steps[i].step) throw InputError("sign_match: steps not aligned");
    da.push_back(a.steps[i].loss_plus - a.steps[i].loss_minus);
    db.push_back(b.steps[i].loss_plus - b.steps[i].loss_minus);
  }
  return sign_match(da, db, tau);
}

StrictCompareReport strict_compare(const Trajectory& a, const Trajectory& b, double loss_tol,
                                   bool force) {
  if (a.steps.size() != b.steps.size()) {
    throw InputError("strict_compare: step counts differ (" + std::to_string(a.steps.size()) +
                     " vs " + std::to_string(b.steps.size()) + ")");
  }
  if (!force) {
    if (a.header.model_digest != b.header.model_digest) {
      throw InputError("strict_compare: model digests differ (" + a.header.model_digest.hex() +
                       " vs " + b.header.model_digest.hex() + "); pass force to compare anyway");
    }
    if (a.header.task_digest != b.header.task_digest) {
      throw InputError("strict_compare: task digests differ (" + a.header.task_digest.hex() +
                       " vs " + b.header.task_digest.hex() + "); pass force to compare anyway");
    }
  }
  StrictCompareReport r;
  r.steps = a.steps.size();
  r.loss_tol = loss_tol;
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    const ZoStepRecord& x = a.steps[i];
    const ZoStepRecord& y = b.steps[i];
    if (x.step != y.step) {
      throw InputError("strict_compare: step index mismatch at record " + std::to_string(i));
    }
    const bool seed_ok = x.seed == y.seed;
    const bool digest_ok = x.u_digest == y.u_digest && x.v_digest == y.v_digest;
    const double dp = std::abs(x.loss_plus - y.loss_plus);
    const double dm = std::abs(x.loss_minus - y.loss_minus);
    const bool loss_ok = dp <= loss_tol && dm <= loss_tol;
    r.seed_mismatches += !seed_ok;
    r.digest_mismatches += !digest_ok;
    r.loss_rejections += !loss_ok;
    r.max_abs_dloss_plus = std::max(r.max_abs_dloss_plus, dp);
    r.max_abs_dloss_minus = std::max(r.max_abs_dloss_minus, dm);
    if (seed_ok && digest_ok && loss_ok) {
      ++r.accepted;
    } else {
      r.rejected_steps.push_back(x.step);
    }
  }
  if (!a.evals.empty() && !b.evals.empty()) {
    r.final_loss_difference = std::abs(a.evals.back().loss - b.evals.back().loss);
  }
  return r;
}

std::vector<double> singular_values(ConstMatrixRef m) {
  // Work on the orientation with fewer columns.
  const bool flip = m.cols > m.rows;
  const std::size_t rows = flip ? m.cols : m.rows;
  const std::size_t cols = flip ? m.rows : m.cols;
  Matrix a(rows, cols);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) (flip ? a(j, i) : a(i, j)) = m(i, j);

  const double tol = 1e-15;
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < cols; ++p) {
      for (std::size_t q = p + 1; q < cols; ++q) {
        double alpha = 0.0;
        double beta = 0.0;
        double gamma = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
          alpha += a(i, p) * a(i, p);
          beta += a(i, q) * a(i, q);
          gamma += a(i, p) * a(i, q);
        }
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < rows; ++i) {
          const double ap = a(i, p);
          const double aq = a(i, q);
          a(i, p) = c * ap - s * aq;
          a(i, q) = s * ap + c * aq;
        }
      }
    }
    if (!rotated) break;
  }
  std::vector<double> sv(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    double n = 0.0;
    for (std::size_t i = 0; i < rows; ++i) n += a(i, j) * a(i, j);
    sv[j] = std::sqrt(n);
  }
  std::sort(sv.begin(), sv.end(), std::greater<>());
  return sv;
}

double rank_check(ConstMatrixRef delta_w, std::size_t r) {
  const auto sv = singular_values(delta_w);
  if (sv.empty() || sv[0] == 0.0 || r >= sv.size()) return 0.0;
  return sv[r] / sv[0];
}

TrajectorySummary trajectory_report(std::span<const ReportRun> runs) {
  TrajectorySummary s;
  for (const auto& run : runs) {
    RunSummary e;
    e.name = run.name;
    e.wall_seconds = run.wall_seconds;
    if (!run.evals.empty()) {
      e.final_loss = run.evals.back().loss;
      e.final_accuracy = run.evals.back().accuracy;
    }
    s.runs.push_back(std::move(e));
  }
  if (runs.size() == 2) {
    if (runs[1].wall_seconds > 0.0) s.speedup = runs[0].wall_seconds / runs[1].wall_seconds;
    if (!runs[0].evals.empty() && !runs[1].evals.empty()) {
      s.final_loss_difference = std::abs(runs[0].evals.back().loss - runs[1].evals.back().loss);
    }
  }
  return s;
}

void write_trajectory_report(std::span<const ReportRun> runs, const TrajectorySummary& summary,
                             const std::filesystem::path& dir,
                             std::optional<Digest> config_digest) {
  std::filesystem::create_directories(dir);
  for (const auto& run : runs) {
    const auto path = dir / (run.name + ".eval.csv");
    std::ofstream out(path);
    if (!out) throw InputError("cannot open " + path.string() + " for writing");
    if (config_digest) out << "# config_digest " << config_digest->hex() << '\n';
    out << "step,wall_ms,eval_loss,eval_acc\n";
    char line[128];
    for (const auto& e : run.evals) {
      std::snprintf(line, sizeof line, "%llu,%.3f,%.17g,%.17g\n",
                    static_cast<unsigned long long>(e.step), e.wall_ms, e.loss, e.accuracy);
      out << line;
    }
  }
  nlohmann::json j;
  if (config_digest) j["config_digest"] = config_digest->hex();
  j["runs"] = nlohmann::json::array();
  for (const auto& r : summary.runs) {
    j["runs"].push_back({{"name", r.name},
                         {"final_loss", r.final_loss},
                         {"final_accuracy", r.final_accuracy},
                         {"wall_seconds", r.wall_seconds}});
  }
  if (summary.speedup) j["speedup"] = *summary.speedup;
  if (summary.final_loss_difference) j["final_loss_difference"] = *summary.final_loss_difference;
  std::ofstream out(dir / "report.json");
  if (!out) throw InputError("cannot write report.json in " + dir.string());
  out << j.dump(2) << '\n';
}

std::string sign_match_json(const SignMatchReport& r) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : r.bins) {
    bins.push_back({{"lower", b.lower},
                    {"upper", std::isinf(b.upper) ? nlohmann::json("inf") : nlohmann::json(b.upper)},
                    {"pairs", b.pairs},
                    {"matches", b.matches}});
  }
  const nlohmann::json j{{"population", "all steps of the compared runs"},
                         {"total", r.total},
                         {"matches", r.matches},
                         {"overall", r.overall},
                         {"tau", r.tau},
                         {"high_signal_pairs", r.high_signal_pairs},
                         {"high_signal_matches", r.high_signal_matches},
                         {"high_signal", r.high_signal},
                         {"bins", bins}};
  return j.dump(2);
}

std::string strict_compare_json(const StrictCompareReport& r) {
  nlohmann::json j{{"steps", r.steps},
                   {"accepted", r.accepted},
                   {"seed_mismatches", r.seed_mismatches},
                   {"digest_mismatches", r.digest_mismatches},
                   {"loss_rejections", r.loss_rejections},
                   {"max_abs_dloss_plus", r.max_abs_dloss_plus},
                   {"max_abs_dloss_minus", r.max_abs_dloss_minus},
                   {"loss_tol", r.loss_tol},
                   {"rejected_steps", r.rejected_steps},
                   {"all_accepted", r.all_accepted()}};
  if (r.final_loss_difference) j["final_loss_difference"] = *r.final_loss_difference;
  return j.dump(2);
}

std::string format_strict_compare(const StrictCompareReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "steps compared      %zu\n"
                "accepted            %zu/%zu\n"
                "seed mismatches     %zu/%zu\n"
                "digest mismatches   %zu/%zu\n"
                "loss rejections     %zu/%zu (tol %.3g)\n"
                "max |dL+|           %.6g\n"
                "max |dL-|           %.6g\n",
                r.steps, r.accepted, r.steps, r.seed_mismatches, r.steps, r.digest_mismatches,
                r.steps, r.loss_rejections, r.steps, r.loss_tol, r.max_abs_dloss_plus,
                r.max_abs_dloss_minus);
  std::string out = buf;
  if (r.final_loss_difference) {
    std::snprintf(buf, sizeof buf, "final loss diff     %.6g\n", *r.final_loss_difference);
    out += buf;
  }
  return out;
}

std::string format_sign_match(const SignMatchReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "pairs               %zu (all steps of the compared runs)\n"
                "overall match       %.4f (%zu/%zu)\n"
                "high-signal match   %.4f (%zu/%zu, |d| >= %g)\n",
                r.total, r.overall, r.matches, r.total, r.high_signal, r.high_signal_matches,
                r.high_signal_pairs, r.tau);
  std::string out = buf;
  for (const auto& b : r.bins) {
    std::snprintf(buf, sizeof buf, "  [%-8.3g, %-8.3g)  %zu/%zu\n", b.lower, b.upper, b.matches,
                  b.pairs);
    out += buf;
  }
  return out;
}

}  // namespace zoserve
