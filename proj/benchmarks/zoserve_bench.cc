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


#include <benchmark/benchmark.h>

#include "zoserve/adapter.h"
#include "zoserve/baseline_loop.h"
#include "zoserve/random.h"
#include "zoserve/runtime.h"
#include "zoserve/zo_engine.h"

namespace zoserve {
namespace {

ParameterSet square_matrices(std::size_t count, std::size_t dim) {
  ParameterSet ps;
  for (std::uint32_t i = 0; i < count; ++i)
    ps.add_matrix("w" + std::to_string(i),
                  sample_gaussian(StreamKey{3, 0, i, StreamRole::kInit}, dim, dim));
  return ps;
}

ZoConfig bench_config() {
  ZoConfig c;
  c.rank = 4;
  c.nu = 50;
  c.scope = Scope::kLoraOnly;
  return c;
}

// Scoring is stubbed to a constant, so these time the weight traffic.
void BM_BaselineStep(benchmark::State& state) {
  const ParameterSet ps = square_matrices(4, state.range(0));
  ConstantCostObjective flat(1.0, 0);
  RunOptions o;
  o.steps = 50;
  o.eval_every = 0;
  for (auto _ : state) {
    PathRun r = run_baseline(bench_config(), ps, flat, nullptr, o);
    benchmark::DoNotOptimize(r.meter.weight_writes);
  }
  state.SetItemsProcessed(state.iterations() * 50);
}
BENCHMARK(BM_BaselineStep)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_ServingStep(benchmark::State& state) {
  const ParameterSet ps = square_matrices(4, state.range(0));
  ConstantCostObjective flat(1.0, 0);
  RunOptions o;
  o.steps = 50;
  o.eval_every = 0;
  for (auto _ : state) {
    PathRun r = run_serving_path(bench_config(), ps, flat, nullptr, o);
    benchmark::DoNotOptimize(r.meter.weight_writes);
  }
  state.SetItemsProcessed(state.iterations() * 50);
}
BENCHMARK(BM_ServingStep)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_ComposeProbe(benchmark::State& state) {
  const std::size_t n = state.range(0);
  const Matrix w = sample_gaussian(StreamKey{1, 0, 0, StreamRole::kInit}, n, n);
  AdapterEntry e;
  e.update_slots.push_back(factorized_direction(5, 0, 0, 4, n, n));
  e.perturb_slot = factorized_direction(5, 0, 1, 4, n, n);
  e.perturb_sign = 1;
  e.epsilon = 1e-3;
  for (auto _ : state) {
    Matrix m = compose_probe(w, e);
    benchmark::DoNotOptimize(m.data().data());
  }
}
BENCHMARK(BM_ComposeProbe)->Arg(64)->Arg(512);

void BM_LozoDirection(benchmark::State& state) {
  const std::size_t n = state.range(0);
  std::uint64_t t = 0;
  for (auto _ : state) {
    LowRankDirection d = lozo_direction(42, 0, t++, 50, 4, n, n);
    benchmark::DoNotOptimize(d.u.data().data());
  }
}
BENCHMARK(BM_LozoDirection)->Arg(64)->Arg(512);

void BM_DenseDirection(benchmark::State& state) {
  const std::size_t n = state.range(0);
  std::uint64_t t = 0;
  for (auto _ : state) {
    Matrix z = dense_direction(42, 0, t++, n, n);
    benchmark::DoNotOptimize(z.data().data());
  }
}
BENCHMARK(BM_DenseDirection)->Arg(64)->Arg(512);

}  // namespace
}  // namespace zoserve

BENCHMARK_MAIN();
