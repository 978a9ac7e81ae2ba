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

#include "zoserve/zo_engine.h"

#include <algorithm>
#include <cmath>

#include "zoserve/errors.h"

namespace zoserve {
namespace {

// Restores perturb_sign = 0 however scoring exits.
class SignGuard {
 public:
  explicit SignGuard(AdapterState& adapter) : adapter_(adapter) {}
  ~SignGuard() { adapter_.set_perturb_sign(0); }
  SignGuard(const SignGuard&) = delete;
  SignGuard& operator=(const SignGuard&) = delete;

 private:
  AdapterState& adapter_;
};

bool has_probe(const AdapterState& adapter) {
  for (const auto& e : adapter.entries())
    if (e.perturb_slot) return true;
  for (std::size_t v = 0; v < adapter.vector_count(); ++v)
    if (adapter.vector_direction(v)) return true;
  return false;
}

bool all_zero(const Matrix& m) {
  return std::all_of(m.data().begin(), m.data().end(), [](double x) { return x == 0.0; });
}

void install_probe(AdapterState& adapter, StepDirections& dirs, double epsilon) {
  for (std::size_t b = 0; b < dirs.blocks.size(); ++b) {
    if (dirs.blocks[b]) adapter.entry(b).perturb_slot = *dirs.blocks[b];
  }
  for (std::size_t v = 0; v < dirs.vectors.size(); ++v) {
    if (dirs.vectors[v]) adapter.set_vector_direction(v, *dirs.vectors[v]);
  }
  adapter.set_epsilon(epsilon);
  adapter.set_perturb_sign(0);
}

// The slot accumulating the current lazy window for one block: the last
// update slot when it already carries this window's V, a zeroed slot that
// can adopt V, or a new slot.
LoraSlot& window_accumulator(AdapterEntry& entry, const Matrix& v, std::size_t cap,
                             MatrixRef base) {
  if (!entry.update_slots.empty()) {
    LoraSlot& last = entry.update_slots.back();
    if (last.b == v && last.scale == 1.0) return last;
    if (last.rank() == v.cols() && last.scale == 1.0 && all_zero(last.a)) {
      // B holds the shared window direction; adopting it is direction
      // sampling, not a weight write.
      last.b = v;
      return last;
    }
  }
  push_update_slot(entry, LoraSlot{Matrix(base.rows, v.cols()), v, 1.0}, cap, base);
  return entry.update_slots.back();
}

void update_vectors(ParameterSet& params, const StepDirections& dirs, double coef) {
  for (std::size_t v = 0; v < dirs.vectors.size(); ++v) {
    if (!dirs.vectors[v]) continue;
    auto p = params.vector_values(v);
    const auto& z = *dirs.vectors[v];
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= coef * z[i];
    record_weight_writes(p.size());
  }
}

ZoStepRecord make_record(const ZoConfig& config, std::uint64_t step,
                         const CoefficientEstimate& est, double beta,
                         const StepDirections& dirs, std::span<const std::size_t> batch) {
  ZoStepRecord rec;
  rec.step = step;
  rec.loss_plus = est.loss_plus;
  rec.loss_minus = est.loss_minus;
  rec.coefficient = est.coefficient;
  rec.beta = beta;
  rec.seed = config.seed;
  rec.u_digest = dirs.u_digest;
  rec.v_digest = dirs.v_digest;
  rec.minibatch_id = minibatch_id(batch);
  return rec;
}

}  // namespace

const char* to_string(Estimator e) {
  switch (e) {
    case Estimator::kDenseMezo: return "dense_mezo";
    case Estimator::kLozoLazy: return "lozo_lazy";
    case Estimator::kFactorizedSqrtR: return "factorized_sqrt_r";
  }
  return "?";
}

const char* to_string(Scope s) { return s == Scope::kFull ? "full" : "lora_only"; }

std::optional<Estimator> parse_estimator(std::string_view text) {
  for (Estimator e : {Estimator::kDenseMezo, Estimator::kLozoLazy, Estimator::kFactorizedSqrtR})
    if (text == to_string(e)) return e;
  return std::nullopt;
}

std::optional<Scope> parse_scope(std::string_view text) {
  for (Scope s : {Scope::kFull, Scope::kLoraOnly})
    if (text == to_string(s)) return s;
  return std::nullopt;
}

void ZoConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("zo.epsilon must be > 0");
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    throw ConfigError("zo.learning_rate must be finite and >= 0");
  }
  if (nu < 1) throw ConfigError("zo.nu must be >= 1");
  if (rank < 1) throw ConfigError("zo.rank must be >= 1");
  if (batch_size < 1) throw ConfigError("zo.batch_size must be >= 1");
}

double effective_rate(const ZoConfig& config) {
  return config.divide_by_r ? config.learning_rate / static_cast<double>(config.rank)
                            : config.learning_rate;
}

std::vector<std::size_t> minibatch_indices(const ZoConfig& config, std::uint64_t step,
                                           std::size_t pool) {
  return sample_indices(StreamKey{config.seed, step, 0, StreamRole::kMinibatch}, pool,
                        std::min(config.batch_size, pool));
}

Digest minibatch_id(std::span<const std::size_t> indices) {
  Fnv1a h;
  for (std::size_t i : indices) h.update_u64(i);
  return h.digest();
}

CoefficientEstimate estimate_coefficient(const Objective& objective, const ParameterSet& params,
                                         AdapterState& adapter, double epsilon,
                                         std::span<const std::size_t> batch) {
  if (!(epsilon > 0.0)) throw ConfigError("estimate_coefficient: epsilon must be > 0");
  if (!has_probe(adapter)) throw ConfigError("estimate_coefficient: no perturbation installed");
  SignGuard guard(adapter);
  adapter.set_epsilon(epsilon);
  CoefficientEstimate est;
  adapter.set_perturb_sign(+1);
  est.loss_plus = objective.loss(params, &adapter, batch);
  adapter.set_perturb_sign(-1);
  est.loss_minus = objective.loss(params, &adapter, batch);
  est.coefficient = (est.loss_plus - est.loss_minus) / (2.0 * epsilon);
  return est;
}

LowRankDirection lozo_direction(std::uint64_t seed, std::uint32_t layer_id, std::uint64_t step,
                                std::size_t nu, std::size_t r, std::size_t m, std::size_t n) {
  if (r < 1 || r > std::min(m, n)) {
    throw ConfigError("lozo_direction: rank " + std::to_string(r) + " outside [1, " +
                      std::to_string(std::min(m, n)) + "]");
  }
  if (nu < 1) throw ConfigError("lozo_direction: nu must be >= 1");
  const std::uint64_t window_start = (step / nu) * nu;
  return LowRankDirection{
      sample_gaussian(StreamKey{seed, step, layer_id, StreamRole::kU}, m, r),
      sample_gaussian(StreamKey{seed, window_start, layer_id, StreamRole::kV}, n, r)};
}

LoraSlot factorized_direction(std::uint64_t seed, std::uint32_t layer_id, std::uint64_t step,
                              std::size_t r, std::size_t m, std::size_t n) {
  if (r < 1) throw ConfigError("factorized_direction: rank must be >= 1");
  return LoraSlot{sample_gaussian(StreamKey{seed, step, layer_id, StreamRole::kU}, m, r),
                  sample_gaussian(StreamKey{seed, step, layer_id, StreamRole::kV}, n, r),
                  1.0 / std::sqrt(static_cast<double>(r))};
}

Matrix dense_direction(std::uint64_t seed, std::uint32_t layer_id, std::uint64_t step,
                       std::size_t m, std::size_t n) {
  return sample_gaussian(StreamKey{seed, step, layer_id, StreamRole::kDenseZ}, m, n);
}

StepDirections draw_directions(const ParameterSet& params, const ZoConfig& config,
                               std::uint64_t step) {
  StepDirections dirs;
  const auto& blocks = params.blocks();
  dirs.blocks.resize(blocks.size());
  dirs.dense_blocks.resize(blocks.size());
  dirs.vectors.resize(params.vectors().size());
  Fnv1a u_hash;
  Fnv1a v_hash;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const MatrixBlock& blk = blocks[b];
    switch (config.estimator) {
      case Estimator::kLozoLazy: {
        LowRankDirection d =
            lozo_direction(config.seed, blk.id, step, config.nu, config.rank, blk.rows, blk.cols);
        u_hash.update(ConstMatrixRef(d.u));
        v_hash.update(ConstMatrixRef(d.v));
        dirs.blocks[b] = LoraSlot{std::move(d.u), std::move(d.v), 1.0};
        break;
      }
      case Estimator::kFactorizedSqrtR: {
        LoraSlot s =
            factorized_direction(config.seed, blk.id, step, config.rank, blk.rows, blk.cols);
        u_hash.update(ConstMatrixRef(s.a));
        v_hash.update(ConstMatrixRef(s.b));
        dirs.blocks[b] = std::move(s);
        break;
      }
      case Estimator::kDenseMezo: {
        Matrix z = dense_direction(config.seed, blk.id, step, blk.rows, blk.cols);
        u_hash.update(ConstMatrixRef(z));
        dirs.dense_blocks[b] = std::move(z);
        break;
      }
    }
  }
  if (config.scope == Scope::kFull) {
    for (std::size_t v = 0; v < params.vectors().size(); ++v) {
      const auto values = params.vector_values(v);
      Matrix z = dense_direction(config.seed, params.vectors()[v].id, step, 1, values.size());
      u_hash.update(ConstMatrixRef(z));
      dirs.vectors[v] = std::vector<double>(z.data().begin(), z.data().end());
    }
  }
  dirs.u_digest = u_hash.digest();
  dirs.v_digest = v_hash.digest();
  return dirs;
}

ZoStepRecord lozo_step(ZoTarget& target, const Objective& objective, const ZoConfig& config,
                       std::uint64_t step, std::span<const std::size_t> batch) {
  if (config.estimator != Estimator::kLozoLazy) throw ConfigError("lozo_step: estimator");
  StepDirections dirs = draw_directions(target.params, config, step);
  install_probe(target.adapter, dirs, config.epsilon);
  CoefficientEstimate est;
  try {
    est = estimate_coefficient(objective, target.params, target.adapter, config.epsilon, batch);
  } catch (...) {
    target.adapter.clear_perturbation();
    throw;
  }
  target.adapter.clear_perturbation();

  const double eta = effective_rate(config);
  for (std::size_t b = 0; b < dirs.blocks.size(); ++b) {
    const LoraSlot& dir = *dirs.blocks[b];
    MatrixRef base = target.params.block_ref(b);
    if (target.mode == UpdateMode::kAccumulateOnU) {
      LoraSlot& acc = window_accumulator(target.adapter.entry(b), dir.b, target.slot_cap, base);
      accumulate_on_U(acc, eta, est.coefficient, dir.a);
    } else {
      axpy_outer(base, -(eta * est.coefficient), dir.a, dir.b);
    }
  }
  update_vectors(target.params, dirs, config.learning_rate * est.coefficient);
  return make_record(config, step, est, -(eta * est.coefficient), dirs, batch);
}

ZoStepRecord factorized_step(ZoTarget& target, const Objective& objective,
                             const ZoConfig& config, std::uint64_t step,
                             std::span<const std::size_t> batch) {
  if (config.estimator != Estimator::kFactorizedSqrtR) {
    throw ConfigError("factorized_step: estimator");
  }
  StepDirections dirs = draw_directions(target.params, config, step);
  install_probe(target.adapter, dirs, config.epsilon);
  CoefficientEstimate est;
  try {
    est = estimate_coefficient(objective, target.params, target.adapter, config.epsilon, batch);
  } catch (...) {
    target.adapter.clear_perturbation();
    throw;
  }
  target.adapter.clear_perturbation();

  const double beta = -(config.learning_rate * est.coefficient);
  for (std::size_t b = 0; b < dirs.blocks.size(); ++b) {
    LoraSlot& dir = *dirs.blocks[b];
    MatrixRef base = target.params.block_ref(b);
    const double scale = beta * dir.scale;
    if (target.mode == UpdateMode::kAccumulateOnU) {
      record_weight_writes((dir.rows() + dir.cols()) * dir.rank());
      push_update_slot(target.adapter.entry(b), LoraSlot{std::move(dir.a), std::move(dir.b), scale},
                       target.slot_cap, base);
    } else {
      axpy_outer(base, scale, dir.a, dir.b);
    }
  }
  update_vectors(target.params, dirs, config.learning_rate * est.coefficient);
  return make_record(config, step, est, beta, dirs, batch);
}

ZoStepRecord dense_mezo_step(ParameterSet& params, const Objective& objective,
                             const ZoConfig& config, std::uint64_t step,
                             std::span<const std::size_t> batch) {
  if (config.estimator != Estimator::kDenseMezo) throw ConfigError("dense_mezo_step: estimator");
  const StepDirections dirs = draw_directions(params, config, step);
  const double eps = config.epsilon;

  auto perturb = [&](double alpha) {
    for (std::size_t b = 0; b < dirs.dense_blocks.size(); ++b) {
      axpy(params.block_ref(b), alpha, *dirs.dense_blocks[b]);
    }
    for (std::size_t v = 0; v < dirs.vectors.size(); ++v) {
      if (!dirs.vectors[v]) continue;
      auto p = params.vector_values(v);
      axpy(MatrixRef(p.data(), 1, p.size(), p.size()), alpha,
           ConstMatrixRef(dirs.vectors[v]->data(), 1, p.size(), p.size()));
    }
  };

  CoefficientEstimate est;
  perturb(eps);
  try {
    est.loss_plus = objective.loss(params, nullptr, batch);
  } catch (...) {
    perturb(-eps);
    throw;
  }
  perturb(-2.0 * eps);
  try {
    est.loss_minus = objective.loss(params, nullptr, batch);
  } catch (...) {
    perturb(eps);
    throw;
  }
  perturb(eps);
  est.coefficient = (est.loss_plus - est.loss_minus) / (2.0 * eps);
  perturb(-(config.learning_rate * est.coefficient));
  return make_record(config, step, est, -(config.learning_rate * est.coefficient), dirs, batch);
}

ZoStepRecord zo_step(ZoTarget& target, const Objective& objective, const ZoConfig& config,
                     std::uint64_t step, std::span<const std::size_t> batch) {
  switch (config.estimator) {
    case Estimator::kLozoLazy: return lozo_step(target, objective, config, step, batch);
    case Estimator::kFactorizedSqrtR: return factorized_step(target, objective, config, step, batch);
    case Estimator::kDenseMezo: return dense_mezo_step(target.params, objective, config, step, batch);
  }
  throw ConfigError("zo_step: unknown estimator");
}

}  // namespace zoserve
