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

#include "zoserve/scheduler.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "zoserve/errors.h"
#include "zoserve/random.h"

namespace zoserve {
namespace {

LatencyStats latency_stats(const std::vector<JobTiming>& jobs) {
  LatencyStats s;
  s.count = jobs.size();
  if (jobs.empty()) return s;
  std::vector<std::uint64_t> v;
  v.reserve(jobs.size());
  double sum = 0.0;
  for (const auto& j : jobs) {
    v.push_back(j.latency());
    sum += static_cast<double>(j.latency());
  }
  s.mean = sum / static_cast<double>(v.size());
  s.max = *std::max_element(v.begin(), v.end());
  s.p50 = percentile(v, 50.0);
  s.p90 = percentile(v, 90.0);
  s.p99 = percentile(v, 99.0);
  return s;
}

void validate_probes(std::span<const ProbeJob> probes) {
  for (std::size_t i = 0; i < probes.size(); ++i) {
    if (probes[i].cost == 0) throw InputError("probe " + std::to_string(i) + " has zero cost");
    if (i > 0 && probes[i].release < probes[i - 1].release) {
      throw InputError("probe releases must be nondecreasing (probe " + std::to_string(i) + ")");
    }
  }
}

struct ProbeCursor {
  std::span<const ProbeJob> jobs;
  std::vector<JobTiming>& out;
  std::size_t next = 0;
  std::uint64_t left = 0;  // remaining cost of jobs[next]
  bool started = false;

  bool available(std::uint64_t tick) const {
    return next < jobs.size() && jobs[next].release <= tick;
  }
  // Spends up to `budget` units on the head probe; returns the units used.
  std::uint64_t serve(std::uint64_t tick, std::uint64_t budget) {
    if (!started) {
      left = jobs[next].cost;
      started = true;
      out[next].arrival = jobs[next].release;
      out[next].start = tick;
    }
    const std::uint64_t used = std::min(budget, left);
    left -= used;
    if (left == 0) {
      out[next].finish = tick;
      ++next;
      started = false;
    }
    return used;
  }
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  return cells;
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> read_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<std::pair<std::uint64_t, std::uint64_t>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto cells = split_csv_line(line);
    if (cells.empty() || (cells.size() == 1 && cells[0].empty())) continue;
    if (line_no == 1 && !cells[0].empty() && std::isalpha(static_cast<unsigned char>(cells[0][0]))) {
      continue;  // header
    }
    if (cells.size() != 2) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected 2 columns");
    }
    for (const auto& cell : cells) {
      if (cell.empty() || !std::isdigit(static_cast<unsigned char>(cell[0]))) {
        throw InputError(path.string() + ":" + std::to_string(line_no) + ": not an integer row");
      }
    }
    try {
      std::size_t used0 = 0;
      std::size_t used1 = 0;
      const auto a = std::stoull(cells[0], &used0);
      const auto c = std::stoull(cells[1], &used1);
      if (used0 != cells[0].size() || used1 != cells[1].size()) throw std::invalid_argument("");
      rows.emplace_back(a, c);
    } catch (const std::logic_error&) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": not an integer row");
    }
  }
  return rows;
}

}  // namespace

void InferenceTrace::validate() const {
  if (capacity == 0) throw InputError("trace capacity must be >= 1");
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto& r = requests[i];
    if (r.cost == 0) throw InputError("request " + std::to_string(i) + " has zero cost");
    if (r.cost > capacity) {
      throw InputError("request " + std::to_string(i) + " cost " + std::to_string(r.cost) +
                       " exceeds batch capacity " + std::to_string(capacity));
    }
    if (i > 0 && r.arrival < requests[i - 1].arrival) {
      throw InputError("arrival times must be nondecreasing (request " + std::to_string(i) + ")");
    }
  }
}

const char* to_string(SchedulePolicy p) { return p == SchedulePolicy::kSlack ? "slack" : "fifo"; }

std::optional<SchedulePolicy> parse_policy(std::string_view text) {
  if (text == "slack") return SchedulePolicy::kSlack;
  if (text == "fifo") return SchedulePolicy::kFifo;
  return std::nullopt;
}

ScheduleResult slack_schedule(const InferenceTrace& trace, std::span<const ProbeJob> probes,
                              SchedulePolicy policy) {
  trace.validate();
  validate_probes(probes);
  const std::uint64_t cap = trace.capacity;

  ScheduleResult res;
  res.policy = policy;
  res.capacity = cap;
  res.requests.resize(trace.requests.size());
  res.probes.resize(probes.size());
  ProbeCursor pc{probes, res.probes};
  std::size_t next_req = 0;

  for (std::uint64_t tick = 0; next_req < trace.requests.size() || pc.next < probes.size();
       ++tick) {
    TickUsage use;
    std::uint64_t room = cap;
    auto admit_request = [&]() {
      const auto& r = trace.requests[next_req];
      res.requests[next_req] = JobTiming{r.arrival, tick, tick};
      room -= r.cost;
      use.high += r.cost;
      ++next_req;
    };
    auto request_ready = [&]() {
      return next_req < trace.requests.size() && trace.requests[next_req].arrival <= tick;
    };

    if (policy == SchedulePolicy::kSlack) {
      while (request_ready() && trace.requests[next_req].cost <= room) admit_request();
      while (room > 0 && pc.available(tick)) {
        const std::uint64_t used = pc.serve(tick, room);
        room -= used;
        use.probe += used;
      }
    } else {
      // Arrival order, requests first on ties; a job that cannot proceed
      // blocks everything behind it until the next tick.
      while (room > 0) {
        const bool req = request_ready();
        const bool prb = pc.available(tick);
        if (!req && !prb) break;
        const bool take_request =
            req && (!prb || trace.requests[next_req].arrival <= probes[pc.next].release);
        if (take_request) {
          if (trace.requests[next_req].cost > room) break;
          admit_request();
        } else {
          const std::uint64_t used = pc.serve(tick, room);
          room -= used;
          use.probe += used;
          if (pc.started) break;  // probe still holds the head of the queue
        }
      }
    }
    res.ticks.push_back(use);
  }

  if (!res.requests.empty()) {
    std::uint64_t last = 0;
    for (const auto& r : res.requests) last = std::max(last, r.finish);
    res.horizon = last + 1;
  } else {
    res.horizon = res.ticks.size();
  }
  std::uint64_t high_units = 0;
  for (std::uint64_t t = 0; t < res.horizon && t < res.ticks.size(); ++t) {
    high_units += res.ticks[t].high;
    res.probe_units_in_horizon += res.ticks[t].probe;
  }
  const std::uint64_t total = cap * res.horizon;
  res.residual_capacity = total - high_units;
  res.utilization =
      total ? static_cast<double>(high_units + res.probe_units_in_horizon) / static_cast<double>(total)
            : 0.0;
  res.probe_throughput = res.residual_capacity
                             ? static_cast<double>(res.probe_units_in_horizon) /
                                   static_cast<double>(res.residual_capacity)
                             : 1.0;
  res.high = latency_stats(res.requests);
  res.probe = latency_stats(res.probes);
  return res;
}

std::uint64_t percentile(std::vector<std::uint64_t> values, double pct) {
  if (values.empty()) return 0;
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(pct / 100.0 * static_cast<double>(values.size()));
  const std::size_t idx = rank < 1.0 ? 0 : static_cast<std::size_t>(rank) - 1;
  return values[std::min(idx, values.size() - 1)];
}

InferenceTrace synthetic_trace(std::uint64_t seed, std::size_t events, std::uint64_t capacity,
                               double occupancy, std::uint64_t max_cost) {
  if (max_cost == 0 || max_cost > capacity) throw ConfigError("synthetic_trace: bad max_cost");
  if (!(occupancy > 0.0 && occupancy < 1.0)) throw ConfigError("synthetic_trace: occupancy");
  const double mean_cost = (1.0 + static_cast<double>(max_cost)) / 2.0;
  const double lambda = occupancy * static_cast<double>(capacity) / mean_cost;
  const double limit = std::exp(-lambda);

  InferenceTrace trace;
  trace.capacity = capacity;
  CounterStream rng(StreamKey{seed, 0, 0, StreamRole::kTask});
  for (std::uint64_t tick = 0; trace.requests.size() < events; ++tick) {
    // Knuth's product method.
    std::size_t k = 0;
    for (double p = rng.uniform(); p > limit; p *= rng.uniform()) ++k;
    for (std::size_t i = 0; i < k && trace.requests.size() < events; ++i) {
      trace.requests.push_back(InferenceRequest{tick, 1 + rng.below(max_cost)});
    }
  }
  return trace;
}

std::vector<ProbeJob> matched_probes(const InferenceTrace& trace, std::uint64_t probe_cost) {
  if (probe_cost == 0) throw ConfigError("matched_probes: probe_cost must be >= 1");
  if (trace.requests.empty()) return {};
  std::uint64_t load = 0;
  for (const auto& r : trace.requests) load += r.cost;
  const std::uint64_t span = trace.requests.back().arrival + 1;
  const std::uint64_t total = trace.capacity * span;
  const std::uint64_t residual = total > load ? total - load : 0;
  return std::vector<ProbeJob>(residual / probe_cost, ProbeJob{0, probe_cost});
}

std::vector<InferenceRequest> read_trace_csv(const std::filesystem::path& path) {
  std::vector<InferenceRequest> out;
  for (const auto& [a, c] : read_pairs(path)) out.push_back(InferenceRequest{a, c});
  return out;
}

std::vector<ProbeJob> read_probes_csv(const std::filesystem::path& path) {
  std::vector<ProbeJob> out;
  for (const auto& [a, c] : read_pairs(path)) out.push_back(ProbeJob{a, c});
  return out;
}

void write_trace_csv(std::span<const InferenceRequest> requests, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out << "arrival_time,cost\n";
  for (const auto& r : requests) out << r.arrival << ',' << r.cost << '\n';
}

void write_schedule_csv(const ScheduleResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out << "class,id,arrival,start,finish,latency\n";
  auto rows = [&](const char* cls, const std::vector<JobTiming>& jobs) {
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      const auto& j = jobs[i];
      out << cls << ',' << i << ',' << j.arrival << ',' << j.start << ',' << j.finish << ','
          << j.latency() << '\n';
    }
  };
  rows("high", result.requests);
  rows("probe", result.probes);
}

void write_schedule_summary(const ScheduleResult& result, const std::filesystem::path& path) {
  auto stats = [](const LatencyStats& s) {
    return nlohmann::json{{"count", s.count}, {"mean", s.mean}, {"p50", s.p50},
                          {"p90", s.p90},     {"p99", s.p99},   {"max", s.max}};
  };
  const nlohmann::json j{{"policy", to_string(result.policy)},
                         {"capacity", result.capacity},
                         {"ticks", result.ticks.size()},
                         {"horizon", result.horizon},
                         {"utilization", result.utilization},
                         {"residual_capacity", result.residual_capacity},
                         {"probe_units_in_horizon", result.probe_units_in_horizon},
                         {"probe_throughput", result.probe_throughput},
                         {"high_latency", stats(result.high)},
                         {"probe_latency", stats(result.probe)}};
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

}  // namespace zoserve
