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

// zoserve command-line entry point: train, verify, bench, sim.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "zoserve/baseline_loop.h"
#include "zoserve/errors.h"
#include "zoserve/experiment.h"
#include "zoserve/runtime.h"
#include "zoserve/scheduler.h"
#include "zoserve/trajectory.h"
#include "zoserve/verify.h"

namespace fs = std::filesystem;
using namespace zoserve;

namespace {

constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInput = 3;

ExperimentConfig resolve_config(const std::string& path, const std::vector<std::string>& sets) {
  if (path.empty()) return parse_config("", sets);
  return load_config(path, sets);
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& out_dir) {
  ExperimentConfig cfg = resolve_config(config_path, sets);
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  std::printf("config %s  path=%s steps=%zu estimator=%s precision=%s\n",
              cfg.digest().hex().c_str(), to_string(cfg.path), cfg.steps,
              to_string(cfg.zo.estimator), to_string(cfg.precision));
  const ExperimentResult res = run_experiment(cfg);
  for (const auto& r : res.summary.runs) {
    std::printf("%-8s final eval loss %.6f  acc %.4f  train %.2fs\n", r.name.c_str(),
                r.final_loss, r.final_accuracy, r.wall_seconds);
  }
  if (res.summary.speedup) std::printf("speedup (baseline/serving) %.2fx\n", *res.summary.speedup);
  if (res.compare) std::printf("\n%s", format_strict_compare(*res.compare).c_str());
  std::printf("\nwrote %zu files to %s\n", res.files.size(), cfg.output_dir.c_str());
  return 0;
}

int cmd_verify(const std::string& a_path, const std::string& b_path, double loss_tol, double tau,
               bool force, const std::string& report_path) {
  const Trajectory a = load_trajectory(a_path);
  const Trajectory b = load_trajectory(b_path);
  const StrictCompareReport strict = strict_compare(a, b, loss_tol, force);
  const SignMatchReport signs = sign_match(a, b, tau);
  std::printf("A %s (%s)\nB %s (%s)\n\n", a_path.c_str(), a.header.path.c_str(), b_path.c_str(),
              b.header.path.c_str());
  std::printf("%s\n%s", format_strict_compare(strict).c_str(), format_sign_match(signs).c_str());
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw InputError("cannot open " + report_path + " for writing");
    out << "{\n\"strict_compare\": " << strict_compare_json(strict)
        << ",\n\"sign_match\": " << sign_match_json(signs) << "\n}\n";
  }
  const bool ok = strict.all_accepted();
  std::printf("\n%s\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : kExitFailed;
}

int cmd_bench(const std::string& config_path, const std::vector<std::string>& sets,
              std::size_t steps) {
  ExperimentConfig cfg = resolve_config(config_path, sets);
  if (steps > 0) cfg.steps = steps;
  cfg.eval_every = 0;
  const ExperimentSetup setup = make_setup(cfg);
  const TaskObjective objective(cfg.model, setup.task.train, cfg.precision);
  const RunOptions options = cfg.run_options();

  const PathRun base = run_baseline(cfg.zo, setup.model.params, objective, nullptr, options);
  const PathRun serve = run_serving_path(cfg.zo, setup.model.params, objective, nullptr, options);
  std::printf("%s\n", format_cost_table(cost_report(base.meter), "baseline").c_str());
  std::printf("%s\n", format_cost_table(cost_report(serve.meter), "serving").c_str());
  const double n = static_cast<double>(cfg.steps);
  std::printf("per-step wall: baseline %.3f ms, serving %.3f ms\n", 1e3 * base.wall_seconds / n,
              1e3 * serve.wall_seconds / n);
  std::printf("weight writes: baseline %llu, serving %llu (%.1fx fewer)\n",
              static_cast<unsigned long long>(base.weight_write_count()),
              static_cast<unsigned long long>(serve.weight_write_count()),
              static_cast<double>(base.weight_write_count()) /
                  static_cast<double>(std::max<std::uint64_t>(1, serve.weight_write_count())));
  return 0;
}

struct SimArgs {
  std::string trace_path;
  std::string probes_path;
  std::size_t synthetic = 0;
  std::uint64_t seed = 1;
  double occupancy = 0.4;
  std::uint64_t max_cost = 8;
  std::uint64_t capacity = 16;
  std::uint64_t matched_probe_cost = 0;
  std::string policy = "slack";
  std::string out_prefix;
};

void print_stats(const char* label, const LatencyStats& s) {
  std::printf("%-6s n=%-7zu mean %.3f  p50 %llu  p90 %llu  p99 %llu  max %llu\n", label, s.count,
              s.mean, static_cast<unsigned long long>(s.p50), static_cast<unsigned long long>(s.p90),
              static_cast<unsigned long long>(s.p99), static_cast<unsigned long long>(s.max));
}

int cmd_sim(const SimArgs& a) {
  const auto policy = parse_policy(a.policy);
  if (!policy) throw ConfigError("--policy: expected slack or fifo");
  InferenceTrace trace;
  if (a.synthetic > 0) {
    trace = synthetic_trace(a.seed, a.synthetic, a.capacity, a.occupancy, a.max_cost);
  } else if (!a.trace_path.empty()) {
    trace.capacity = a.capacity;
    trace.requests = read_trace_csv(a.trace_path);
  } else {
    trace.capacity = a.capacity;
  }
  std::vector<ProbeJob> probes;
  if (!a.probes_path.empty()) probes = read_probes_csv(a.probes_path);
  if (a.matched_probe_cost > 0) probes = matched_probes(trace, a.matched_probe_cost);

  const ScheduleResult alone = slack_schedule(trace, {}, *policy);
  const ScheduleResult res = slack_schedule(trace, probes, *policy);
  std::printf("policy %s, capacity %llu, %zu requests, %zu probes, %zu ticks\n",
              to_string(*policy), static_cast<unsigned long long>(trace.capacity),
              trace.requests.size(), probes.size(), res.ticks.size());
  print_stats("high", res.high);
  print_stats("alone", alone.high);
  print_stats("probe", res.probe);
  std::printf("utilization %.4f  probe throughput %.4f of residual capacity\n", res.utilization,
              res.probe_throughput);
  std::printf("p99 high latency increase vs probe-free: %lld ticks\n",
              static_cast<long long>(res.high.p99) - static_cast<long long>(alone.high.p99));
  if (!a.out_prefix.empty()) {
    write_schedule_csv(res, a.out_prefix + ".schedule.csv");
    write_schedule_summary(res, a.out_prefix + ".summary.json");
    if (a.synthetic > 0) write_trace_csv(trace.requests, a.out_prefix + ".trace.csv");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zoserve: zeroth-order fine-tuning on a serving-style runtime"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  auto* train = app.add_subcommand("train", "run an experiment and write its artifacts");
  train->add_option("-c,--config", config_path, "TOML config file")->check(CLI::ExistingFile);
  train->add_option("-s,--set", sets, "override a field, e.g. --set zo.learning_rate=0.01");
  train->add_option("-o,--out", out_dir, "output directory (overrides output_dir)");

  std::string traj_a, traj_b, report_path;
  double loss_tol = kSamePathLossTol;
  double tau = kDefaultTau;
  bool force = false;
  auto* verify = app.add_subcommand("verify", "compare two trajectory files");
  verify->add_option("trajectory_a", traj_a)->required()->check(CLI::ExistingFile);
  verify->add_option("trajectory_b", traj_b)->required()->check(CLI::ExistingFile);
  verify->add_option("--loss-tol", loss_tol, "per-step |dL+|, |dL-| bound")->capture_default_str();
  verify->add_option("--tau", tau, "high-signal threshold for sign match")->capture_default_str();
  verify->add_flag("--force", force, "compare even if model/task digests differ");
  verify->add_option("--report", report_path, "write the JSON report here");

  std::size_t bench_steps = 50;
  auto* bench = app.add_subcommand("bench", "cost breakdown of both paths");
  bench->add_option("-c,--config", config_path, "TOML config file")->check(CLI::ExistingFile);
  bench->add_option("-s,--set", sets, "override a field");
  bench->add_option("--steps", bench_steps, "steps per path")->capture_default_str();

  SimArgs sim_args;
  auto* sim = app.add_subcommand("sim", "simulate probe scheduling against inference traffic");
  sim->add_option("--trace", sim_args.trace_path, "CSV arrival_time,cost")
      ->check(CLI::ExistingFile);
  sim->add_option("--synthetic", sim_args.synthetic, "generate a trace with N requests");
  sim->add_option("--probes", sim_args.probes_path, "CSV arrival_time,cost")
      ->check(CLI::ExistingFile);
  sim->add_option("--matched-probes", sim_args.matched_probe_cost,
                  "backlog of probes of this cost filling the residual capacity");
  sim->add_option("--capacity", sim_args.capacity, "batch capacity per tick")->capture_default_str();
  sim->add_option("--occupancy", sim_args.occupancy, "synthetic mean occupancy")
      ->capture_default_str();
  sim->add_option("--max-cost", sim_args.max_cost, "synthetic max request cost")
      ->capture_default_str();
  sim->add_option("--seed", sim_args.seed, "synthetic trace seed")->capture_default_str();
  sim->add_option("--policy", sim_args.policy, "slack or fifo")->capture_default_str();
  sim->add_option("--out", sim_args.out_prefix, "write <prefix>.schedule.csv and .summary.json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, sets, out_dir);
    if (verify->parsed()) return cmd_verify(traj_a, traj_b, loss_tol, tau, force, report_path);
    if (bench->parsed()) return cmd_bench(config_path, sets, bench_steps);
    if (sim->parsed()) return cmd_sim(sim_args);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailed;
  }
  return kExitUsage;
}
