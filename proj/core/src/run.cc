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

#include "zoserve/run.h"

#include "zoserve/errors.h"

namespace zoserve {

const char* to_string(ExecutionPath p) {
  return p == ExecutionPath::kBaseline ? "baseline" : "serving";
}

const char* to_string(CostBucket b) {
  switch (b) {
    case CostBucket::kScoring: return "scoring";
    case CostBucket::kPerturb: return "perturb";
    case CostBucket::kUpdate: return "update";
    case CostBucket::kFold: return "fold";
  }
  return "?";
}

void RunOptions::validate() const {
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (slot_cap < 1) throw ConfigError("slot_cap must be >= 1");
}

void CostMeter::charge_writes(CostBucket b, std::uint64_t writes, double seconds) {
  weight_writes += writes;
  bucket_units[static_cast<std::size_t>(b)] += writes;
  bucket_seconds[static_cast<std::size_t>(b)] += seconds;
}

void CostMeter::charge_scoring(std::uint64_t units, double seconds) {
  ++scoring_calls;
  scoring_cost_units += units;
  bucket_units[static_cast<std::size_t>(CostBucket::kScoring)] += units;
  bucket_seconds[static_cast<std::size_t>(CostBucket::kScoring)] += seconds;
}

MeteredSection::MeteredSection(CostMeter& meter, CostBucket bucket)
    : meter_(meter), bucket_(bucket), start_(std::chrono::steady_clock::now()) {}

MeteredSection::~MeteredSection() {
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start_;
  meter_.charge_writes(bucket_, writes_.count(), dt.count());
}

double MeteredObjective::loss(const ParameterSet& params, const AdapterState* adapter,
                              std::span<const std::size_t> batch) const {
  const auto start = std::chrono::steady_clock::now();
  const double value = inner_.loss(params, adapter, batch);
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
  meter_.charge_scoring(inner_.cost_units(batch), dt.count());
  return value;
}

}  // namespace zoserve
