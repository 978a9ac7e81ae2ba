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

#include "zoserve/runtime.h"

#include <chrono>
#include <cstdio>

#include "zoserve/errors.h"

namespace zoserve {
namespace {

using Clock = std::chrono::steady_clock;

}  // namespace

const char* to_string(ProbeStatus s) {
  switch (s) {
    case ProbeStatus::kQueued: return "queued";
    case ProbeStatus::kScored: return "scored";
    case ProbeStatus::kApplied: return "applied";
  }
  return "?";
}

ProbePair make_probe_pair(const ParameterSet& params, const ZoConfig& config, std::uint64_t step,
                          std::span<const std::size_t> batch) {
  ProbePair p;
  p.step = step;
  p.minibatch_id = minibatch_id(batch);
  const std::uint64_t window = (step / config.nu) * config.nu;
  for (const auto& blk : params.blocks()) {
    switch (config.estimator) {
      case Estimator::kLozoLazy:
        p.directions.push_back(StreamKey{config.seed, step, blk.id, StreamRole::kU});
        p.directions.push_back(StreamKey{config.seed, window, blk.id, StreamRole::kV});
        break;
      case Estimator::kFactorizedSqrtR:
        p.directions.push_back(StreamKey{config.seed, step, blk.id, StreamRole::kU});
        p.directions.push_back(StreamKey{config.seed, step, blk.id, StreamRole::kV});
        break;
      case Estimator::kDenseMezo:
        p.directions.push_back(StreamKey{config.seed, step, blk.id, StreamRole::kDenseZ});
        break;
    }
  }
  if (config.scope == Scope::kFull) {
    for (const auto& v : params.vectors()) {
      p.directions.push_back(StreamKey{config.seed, step, v.id, StreamRole::kDenseZ});
    }
  }
  return p;
}

ServingSession::ServingSession(const ZoConfig& config, ParameterSet initial,
                               const Objective& objective, const RunOptions& options)
    : config_(config),
      options_(options),
      params_(std::move(initial)),
      adapter_(params_),
      objective_(objective, meter_),
      dirty_(params_.blocks().size(), false) {
  config_.validate();
  if (config_.estimator == Estimator::kDenseMezo) {
    throw ConfigError("serving path needs a low-rank estimator (lozo_lazy or factorized_sqrt_r)");
  }
}

ZoStepRecord ServingSession::step() {
  const std::uint64_t t = next_step_;
  const auto batch = minibatch_indices(config_, t, objective_.pool_size());
  ProbePair probe = make_probe_pair(params_, config_, t, batch);

  ZoTarget target{params_, adapter_, UpdateMode::kAccumulateOnU, options_.slot_cap};
  ZoStepRecord rec;
  {
    // Scoring is charged by the metered objective; what remains is update work.
    const double scoring_seconds_before =
        meter_.bucket_seconds[static_cast<std::size_t>(CostBucket::kScoring)];
    const auto start = Clock::now();
    WriteScope writes;
    rec = zo_step(target, objective_, config_, t, batch);
    const double total = std::chrono::duration<double>(Clock::now() - start).count();
    const double scoring =
        meter_.bucket_seconds[static_cast<std::size_t>(CostBucket::kScoring)] -
        scoring_seconds_before;
    meter_.charge_writes(CostBucket::kUpdate, writes.count(), std::max(0.0, total - scoring));
  }
  probe.status = ProbeStatus::kApplied;
  probes_.push_back(std::move(probe));
  std::fill(dirty_.begin(), dirty_.end(), true);
  ++next_step_;

  if (next_step_ % config_.nu == 0) fold_dirty();
  return rec;
}

void ServingSession::fold_dirty() {
  MeteredSection section(meter_, CostBucket::kFold);
  for (std::size_t t = 0; t < params_.tensors().size(); ++t) {
    const auto blocks = params_.blocks_of_tensor(t);
    if (blocks.empty()) continue;
    std::vector<std::size_t> fold_blocks;
    for (std::size_t b : blocks) {
      AdapterEntry& e = adapter_.entry(b);
      if (!dirty_[b] || e.update_slots.empty()) continue;
      if (e.update_slots.size() > 1) {
        LoraSlot merged = merge_slots(e.update_slots);
        e.update_slots.clear();
        e.update_slots.push_back(std::move(merged));
      }
      fold_blocks.push_back(b);
    }
    if (fold_blocks.empty()) continue;
    if (blocks.size() == 1) {
      fold_window(adapter_.entry(fold_blocks[0]).update_slots[0], params_.block_ref(fold_blocks[0]));
    } else {
      std::vector<LoraSlot*> slots;
      for (std::size_t b : fold_blocks) slots.push_back(&adapter_.entry(b).update_slots[0]);
      fold_packed(params_, fold_blocks, slots);
    }
    for (std::size_t b : fold_blocks) {
      // Lazy windows keep the zeroed slot so the next window can adopt it.
      if (config_.estimator != Estimator::kLozoLazy) adapter_.entry(b).update_slots.clear();
      dirty_[b] = false;
    }
  }
}

Digest ServingSession::state_digest() const {
  Fnv1a h;
  h.update_u64(params_.digest().value);
  h.update_u64(adapter_.digest().value);
  h.update_u64(next_step_);
  return h.digest();
}

PathRun run_serving_path(const ZoConfig& config, ParameterSet initial, const Objective& objective,
                         const Evaluator* evaluator, const RunOptions& options) {
  options.validate();
  ServingSession session(config, std::move(initial), objective, options);
  PathRun run;
  run.path = ExecutionPath::kServing;
  run.config = config;

  double train_seconds = 0.0;
  auto evaluate = [&](std::uint64_t step) {
    if (!evaluator) return;
    if (options.fold_on_eval) {
      const auto start = Clock::now();
      session.fold_dirty();
      train_seconds += std::chrono::duration<double>(Clock::now() - start).count();
    }
    const EvalMetrics m = (*evaluator)(session.params(), &session.adapter());
    run.evals.push_back(EvalPoint{step, m.loss, m.accuracy, train_seconds * 1e3});
  };

  evaluate(0);
  for (std::uint64_t t = 0; t < options.steps; ++t) {
    const auto start = Clock::now();
    run.trajectory.push_back(session.step());
    if (t + 1 == options.steps) session.finish();
    train_seconds += std::chrono::duration<double>(Clock::now() - start).count();
    const std::uint64_t done = t + 1;
    if (done == options.steps || (options.eval_every > 0 && done % options.eval_every == 0)) {
      evaluate(done);
    }
  }
  run.wall_seconds = train_seconds;
  run.meter = session.meter();
  run.params = session.take_params();
  run.adapter = session.take_adapter();
  return run;
}

std::uint64_t serving_write_law(const ParameterSet& params, const ZoConfig& config,
                                std::uint64_t steps) {
  const std::uint64_t windows = (steps + config.nu - 1) / config.nu;
  std::uint64_t total = 0;
  for (const auto& b : params.blocks()) {
    total += steps * b.rows * config.rank + windows * b.rows * b.cols;
  }
  if (config.scope == Scope::kFull) {
    for (std::size_t v = 0; v < params.vectors().size(); ++v) {
      total += steps * params.vector_values(v).size();
    }
  }
  return total;
}

CostReport cost_report(const CostMeter& meter) {
  CostReport r;
  r.weight_writes = meter.weight_writes;
  r.scoring_calls = meter.scoring_calls;
  for (std::size_t b = 0; b < kCostBuckets; ++b) {
    r.total_units += meter.bucket_units[b];
    r.total_seconds += meter.bucket_seconds[b];
  }
  for (std::size_t b = 0; b < kCostBuckets; ++b) {
    CostShare s;
    s.component = to_string(static_cast<CostBucket>(b));
    s.units = meter.bucket_units[b];
    s.seconds = meter.bucket_seconds[b];
    s.unit_share = r.total_units ? 100.0 * static_cast<double>(s.units) /
                                       static_cast<double>(r.total_units)
                                 : 0.0;
    s.time_share = r.total_seconds > 0.0 ? 100.0 * s.seconds / r.total_seconds : 0.0;
    r.rows.push_back(std::move(s));
  }
  return r;
}

std::string format_cost_table(const CostReport& report, const std::string& title) {
  std::string out = title + "\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %16s %8s %12s %8s\n", "component", "units", "units%",
                "seconds", "time%");
  out += line;
  for (const auto& s : report.rows) {
    std::snprintf(line, sizeof line, "%-10s %16llu %7.2f%% %12.6f %7.2f%%\n",
                  s.component.c_str(), static_cast<unsigned long long>(s.units), s.unit_share,
                  s.seconds, s.time_share);
    out += line;
  }
  std::snprintf(line, sizeof line, "weight writes %llu, scoring calls %llu\n",
                static_cast<unsigned long long>(report.weight_writes),
                static_cast<unsigned long long>(report.scoring_calls));
  out += line;
  return out;
}

}  // namespace zoserve
