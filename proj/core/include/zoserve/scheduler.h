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

// Tick-level simulation of probe jobs sharing batches with inference
// traffic. Each tick is one batch of `capacity` cost units.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace zoserve {

struct InferenceRequest {
  std::uint64_t arrival = 0;
  std::uint64_t cost = 1;
  bool operator==(const InferenceRequest&) const = default;
};

struct InferenceTrace {
  std::vector<InferenceRequest> requests;
  std::uint64_t capacity = 16;

  void validate() const;  // throws InputError
};

// A probe job: release tick and cost (both probes of a pair, in cost units).
struct ProbeJob {
  std::uint64_t release = 0;
  std::uint64_t cost = 1;
  bool operator==(const ProbeJob&) const = default;
};

enum class SchedulePolicy {
  kSlack,  // high priority first, probes only in residual capacity
  kFifo,   // one queue in arrival order, probes block like requests
};
const char* to_string(SchedulePolicy p);
std::optional<SchedulePolicy> parse_policy(std::string_view text);

struct JobTiming {
  std::uint64_t arrival = 0;
  std::uint64_t start = 0;   // first tick serving the job
  std::uint64_t finish = 0;  // last tick serving the job
  std::uint64_t latency() const { return finish - arrival; }
  bool operator==(const JobTiming&) const = default;
};

struct TickUsage {
  std::uint64_t high = 0;
  std::uint64_t probe = 0;
  bool operator==(const TickUsage&) const = default;
};

struct LatencyStats {
  std::size_t count = 0;
  double mean = 0.0;
  std::uint64_t p50 = 0;
  std::uint64_t p90 = 0;
  std::uint64_t p99 = 0;
  std::uint64_t max = 0;
};

struct ScheduleResult {
  SchedulePolicy policy = SchedulePolicy::kSlack;
  std::uint64_t capacity = 0;
  std::vector<JobTiming> requests;
  std::vector<JobTiming> probes;
  std::vector<TickUsage> ticks;
  // Horizon: ticks up to and including the last high-priority completion
  // (all ticks when the trace is empty).
  std::uint64_t horizon = 0;
  LatencyStats high;
  LatencyStats probe;
  double utilization = 0.0;
  std::uint64_t residual_capacity = 0;  // inside the horizon
  std::uint64_t probe_units_in_horizon = 0;
  double probe_throughput = 0.0;  // probe units / residual capacity, inside the horizon
};

ScheduleResult slack_schedule(const InferenceTrace& trace, std::span<const ProbeJob> probes,
                              SchedulePolicy policy = SchedulePolicy::kSlack);

// Nearest-rank percentile of unsorted values; 0 for an empty list.
std::uint64_t percentile(std::vector<std::uint64_t> values, double pct);

// Poisson arrivals with uniform costs in [1, max_cost], sized so the mean
// batch occupancy is `occupancy`.
InferenceTrace synthetic_trace(std::uint64_t seed, std::size_t events, std::uint64_t capacity,
                               double occupancy, std::uint64_t max_cost);

// A backlog of probes released at tick 0 whose total cost equals the
// residual capacity up to the last arrival of `trace`.
std::vector<ProbeJob> matched_probes(const InferenceTrace& trace, std::uint64_t probe_cost);

// CSV with columns arrival_time,cost (header optional).
std::vector<InferenceRequest> read_trace_csv(const std::filesystem::path& path);
std::vector<ProbeJob> read_probes_csv(const std::filesystem::path& path);
void write_trace_csv(std::span<const InferenceRequest> requests, const std::filesystem::path& path);
void write_schedule_csv(const ScheduleResult& result, const std::filesystem::path& path);
void write_schedule_summary(const ScheduleResult& result, const std::filesystem::path& path);

}  // namespace zoserve
