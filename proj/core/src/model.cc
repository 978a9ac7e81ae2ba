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

#include "zoserve/model.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "zoserve/errors.h"
#include "zoserve/random.h"

namespace zoserve {
namespace {

constexpr double kNormEps = 1e-5;
constexpr std::size_t kTensorsPerLayer = 8;

enum LayerTensor : std::size_t {
  kLn1Scale = 0,
  kLn1Shift,
  kQkv,
  kOut,
  kLn2Scale,
  kLn2Shift,
  kUp,
  kDown,
};

std::size_t layer_tensor(int layer, LayerTensor which) {
  return 1 + static_cast<std::size_t>(layer) * kTensorsPerLayer + which;
}

std::size_t final_scale(const TransformerConfig& c) {
  return 1 + static_cast<std::size_t>(c.layers) * kTensorsPerLayer;
}

template <typename T>
struct Weights {
  std::vector<std::vector<T>> tensors;
  const T* operator[](std::size_t t) const { return tensors[t].data(); }
};

template <typename T>
Weights<T> prepare(const ParameterSet& params, const AdapterState* adapter) {
  Weights<T> w;
  w.tensors.resize(params.tensors().size());
  Matrix scratch;
  for (std::size_t t = 0; t < params.tensors().size(); ++t) {
    const Matrix& m = compose_tensor(params, adapter, t, scratch);
    const auto data = m.data();
    w.tensors[t].assign(data.begin(), data.end());
  }
  return w;
}

// out[L x n] = in[L x m] * W[m x n]
template <typename T>
void matmul(const T* in, std::size_t rows, std::size_t m, const T* w, std::size_t n, T* out) {
  std::fill(out, out + rows * n, T(0));
  for (std::size_t i = 0; i < rows; ++i) {
    const T* xi = in + i * m;
    T* oi = out + i * n;
    for (std::size_t k = 0; k < m; ++k) {
      const T a = xi[k];
      const T* wk = w + k * n;
      for (std::size_t j = 0; j < n; ++j) oi[j] += a * wk[j];
    }
  }
}

template <typename T>
void layer_norm(const T* x, std::size_t rows, std::size_t d, const T* scale, const T* shift,
                T* out) {
  for (std::size_t i = 0; i < rows; ++i) {
    const T* xi = x + i * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xi[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + static_cast<T>(kNormEps));
    T* oi = out + i * d;
    for (std::size_t j = 0; j < d; ++j) oi[j] = (xi[j] - mean) * inv * scale[j] + shift[j];
  }
}

template <typename T>
T gelu(T x) {
  const T c = static_cast<T>(0.7978845608028654);  // sqrt(2 / pi)
  return static_cast<T>(0.5) * x * (T(1) + std::tanh(c * (x + static_cast<T>(0.044715) * x * x * x)));
}

double position_code(std::size_t pos, std::size_t j, std::size_t d) {
  const double freq = std::pow(10000.0, -static_cast<double>(2 * (j / 2)) / static_cast<double>(d));
  const double angle = static_cast<double>(pos) * freq;
  return j % 2 == 0 ? std::sin(angle) : std::cos(angle);
}

// Runs the network over `tokens` and returns log-softmax rows for the
// requested positions.
template <typename T>
std::vector<std::vector<T>> run_sequence(const TransformerConfig& c, const Weights<T>& w,
                                         std::span<const int> tokens,
                                         std::span<const std::size_t> positions) {
  const std::size_t L = tokens.size();
  const std::size_t d = c.dim;
  const std::size_t f = static_cast<std::size_t>(c.dim) * c.ffn_mult;
  const std::size_t heads = c.heads;
  const std::size_t dh = d / heads;
  const std::size_t V = c.vocab;
  const T* emb = w[0];

  std::vector<T> x(L * d), a(L * d), qkv(L * 3 * d), ctx(L * d), proj(L * d), hidden(L * f);
  for (std::size_t p = 0; p < L; ++p)
    for (std::size_t j = 0; j < d; ++j)
      x[p * d + j] = emb[static_cast<std::size_t>(tokens[p]) * d + j] +
                     static_cast<T>(position_code(p, j, d));

  const T inv_sqrt_dh = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<T> scores(L);
  for (int l = 0; l < c.layers; ++l) {
    layer_norm(x.data(), L, d, w[layer_tensor(l, kLn1Scale)], w[layer_tensor(l, kLn1Shift)],
               a.data());
    matmul(a.data(), L, d, w[layer_tensor(l, kQkv)], 3 * d, qkv.data());
    std::fill(ctx.begin(), ctx.end(), T(0));
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t qo = h * dh, ko = d + h * dh, vo = 2 * d + h * dh;
      for (std::size_t p = 0; p < L; ++p) {
        const T* q = &qkv[p * 3 * d + qo];
        T peak = -std::numeric_limits<T>::infinity();
        for (std::size_t s = 0; s <= p; ++s) {
          const T* k = &qkv[s * 3 * d + ko];
          T dot = 0;
          for (std::size_t e = 0; e < dh; ++e) dot += q[e] * k[e];
          scores[s] = dot * inv_sqrt_dh;
          peak = std::max(peak, scores[s]);
        }
        T denom = 0;
        for (std::size_t s = 0; s <= p; ++s) {
          scores[s] = std::exp(scores[s] - peak);
          denom += scores[s];
        }
        T* out = &ctx[p * d + h * dh];
        for (std::size_t s = 0; s <= p; ++s) {
          const T weight = scores[s] / denom;
          const T* v = &qkv[s * 3 * d + vo];
          for (std::size_t e = 0; e < dh; ++e) out[e] += weight * v[e];
        }
      }
    }
    matmul(ctx.data(), L, d, w[layer_tensor(l, kOut)], d, proj.data());
    for (std::size_t i = 0; i < L * d; ++i) x[i] += proj[i];

    layer_norm(x.data(), L, d, w[layer_tensor(l, kLn2Scale)], w[layer_tensor(l, kLn2Shift)],
               a.data());
    matmul(a.data(), L, d, w[layer_tensor(l, kUp)], f, hidden.data());
    for (T& v : hidden) v = gelu(v);
    matmul(hidden.data(), L, f, w[layer_tensor(l, kDown)], d, proj.data());
    for (std::size_t i = 0; i < L * d; ++i) x[i] += proj[i];
  }

  const std::size_t fs = final_scale(c);
  std::vector<std::vector<T>> result;
  result.reserve(positions.size());
  std::vector<T> z(d);
  for (std::size_t p : positions) {
    layer_norm(&x[p * d], 1, d, w[fs], w[fs + 1], z.data());
    std::vector<T> logits(V);
    T peak = -std::numeric_limits<T>::infinity();
    for (std::size_t v = 0; v < V; ++v) {
      const T* ev = emb + v * d;
      T s = 0;
      for (std::size_t j = 0; j < d; ++j) s += z[j] * ev[j];
      logits[v] = s;
      peak = std::max(peak, s);
    }
    T sum = 0;
    for (T lg : logits) sum += std::exp(lg - peak);
    const T log_norm = peak + std::log(sum);
    for (T& lg : logits) lg -= log_norm;
    result.push_back(std::move(logits));
  }
  return result;
}

// Sum of log p(option tokens | prompt) under teacher forcing.
template <typename T>
double option_logprob(const TransformerConfig& c, const Weights<T>& w, const Example& ex,
                      const std::vector<int>& option) {
  std::vector<int> seq = ex.prompt;
  seq.insert(seq.end(), option.begin(), option.end() - 1);
  std::vector<std::size_t> positions;
  for (std::size_t j = 0; j < option.size(); ++j) positions.push_back(ex.prompt.size() - 1 + j);
  const auto rows = run_sequence(c, w, seq, positions);
  double total = 0.0;
  for (std::size_t j = 0; j < option.size(); ++j) total += static_cast<double>(rows[j][option[j]]);
  return total;
}

template <typename T>
double score_impl(const TransformerConfig& c, const ParameterSet& params,
                  const AdapterState* adapter, const Minibatch& batch) {
  const Weights<T> w = prepare<T>(params, adapter);
  std::vector<double> losses(batch.examples.size());
  for (std::size_t i = 0; i < batch.examples.size(); ++i) {
    const Example& ex = batch.examples[i];
    losses[i] = -option_logprob(c, w, ex, ex.candidates[ex.gold]);
  }
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(losses.size());
}

template <typename T>
std::vector<std::vector<double>> logprobs_impl(const TransformerConfig& c,
                                               const ParameterSet& params,
                                               const AdapterState* adapter,
                                               std::span<const Example> examples) {
  const Weights<T> w = prepare<T>(params, adapter);
  std::vector<std::vector<double>> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    const bool single_token = std::all_of(ex.candidates.begin(), ex.candidates.end(),
                                          [](const auto& cand) { return cand.size() == 1; });
    std::vector<double> scores;
    if (single_token) {
      const std::size_t pos = ex.prompt.size() - 1;
      const auto rows = run_sequence(c, w, ex.prompt, std::span<const std::size_t>(&pos, 1));
      for (const auto& cand : ex.candidates) scores.push_back(static_cast<double>(rows[0][cand[0]]));
    } else {
      for (const auto& cand : ex.candidates) scores.push_back(option_logprob(c, w, ex, cand));
    }
    out.push_back(std::move(scores));
  }
  return out;
}

}  // namespace

const char* to_string(Precision p) { return p == Precision::kReal64 ? "real64" : "real32"; }

void TransformerConfig::validate() const {
  if (vocab < 5) throw ConfigError("model.vocab must be >= 5");
  if (dim < 2 || layers < 1 || heads < 1 || ffn_mult < 1) {
    throw ConfigError("model dims must be positive (dim >= 2)");
  }
  if (dim % heads != 0) throw ConfigError("model.dim must be divisible by model.heads");
  if (max_prompt < 2) throw ConfigError("model.max_prompt must be >= 2");
}

ModelParams init_model(const TransformerConfig& config, std::uint64_t init_seed) {
  config.validate();
  const std::size_t d = config.dim;
  const std::size_t f = d * config.ffn_mult;
  const std::size_t V = config.vocab;
  ModelParams model{config, {}};
  ParameterSet& ps = model.params;
  std::uint32_t stream = 0;
  auto gaussian = [&](std::size_t rows, std::size_t cols, double stddev) {
    Matrix m = sample_gaussian(StreamKey{init_seed, 0, stream++, StreamRole::kInit}, rows, cols);
    for (double& x : m.data()) x *= stddev;
    return m;
  };
  const double in_std = 1.0 / std::sqrt(static_cast<double>(d));
  ps.add_matrix("embedding", gaussian(V, d, 0.2));
  for (int l = 0; l < config.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    ps.add_vector(p + "ln1.scale", std::vector<double>(d, 1.0));
    ps.add_vector(p + "ln1.shift", std::vector<double>(d, 0.0));
    const std::string parts[3] = {p + "q", p + "k", p + "v"};
    ps.add_packed(p + "qkv", gaussian(d, 3 * d, in_std), parts);
    ps.add_matrix(p + "out", gaussian(d, d, 0.5 * in_std));
    ps.add_vector(p + "ln2.scale", std::vector<double>(d, 1.0));
    ps.add_vector(p + "ln2.shift", std::vector<double>(d, 0.0));
    ps.add_matrix(p + "up", gaussian(d, f, in_std));
    ps.add_matrix(p + "down", gaussian(f, d, 0.5 / std::sqrt(static_cast<double>(f))));
  }
  ps.add_vector("final_norm.scale", std::vector<double>(d, 1.0));
  ps.add_vector("final_norm.shift", std::vector<double>(d, 0.0));
  return model;
}

double forward_score(const TransformerConfig& config, const ParameterSet& params,
                     const AdapterState* adapter, const Minibatch& batch, Precision precision) {
  if (batch.examples.empty()) throw InputError("forward_score: empty minibatch");
  validate_examples(batch.examples, config.vocab);
  return precision == Precision::kReal64 ? score_impl<double>(config, params, adapter, batch)
                                         : score_impl<float>(config, params, adapter, batch);
}

double forward_score(const ModelParams& model, const AdapterState* adapter,
                     const Minibatch& batch, Precision precision) {
  return forward_score(model.config, model.params, adapter, batch, precision);
}

std::vector<std::vector<double>> option_logprobs(const TransformerConfig& config,
                                                 const ParameterSet& params,
                                                 const AdapterState* adapter,
                                                 std::span<const Example> examples,
                                                 Precision precision) {
  validate_examples(examples, config.vocab);
  return precision == Precision::kReal64
             ? logprobs_impl<double>(config, params, adapter, examples)
             : logprobs_impl<float>(config, params, adapter, examples);
}

double eval_accuracy(const TransformerConfig& config, const ParameterSet& params,
                     const AdapterState* adapter, std::span<const Example> pool,
                     Precision precision) {
  if (pool.empty()) throw InputError("eval_accuracy: empty pool");
  const auto scores = option_logprobs(config, params, adapter, pool, precision);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& s = scores[i];
    // max_element returns the first maximum: lowest index wins ties.
    const auto best = static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
    if (best == pool[i].gold) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pool.size());
}

ParameterSet full_gradient_fd(const ModelParams& model, const Minibatch& batch, double h) {
  if (!(h > 0.0)) throw ConfigError("full_gradient_fd: h must be > 0");
  ParameterSet work = model.params;
  ParameterSet grad = model.params;
  for (std::size_t t = 0; t < work.tensors().size(); ++t) {
    auto values = work.tensor_value(t).data();
    auto out = grad.tensor_value(t).data();
    for (std::size_t e = 0; e < values.size(); ++e) {
      const double original = values[e];
      values[e] = original + h;
      const double plus = forward_score(model.config, work, nullptr, batch);
      values[e] = original - h;
      const double minus = forward_score(model.config, work, nullptr, batch);
      values[e] = original;
      out[e] = (plus - minus) / (2.0 * h);
    }
  }
  return grad;
}

std::uint64_t scoring_cost_units(const TransformerConfig& c, const Minibatch& batch) {
  const std::uint64_t d = c.dim;
  const std::uint64_t f = d * c.ffn_mult;
  const std::uint64_t V = c.vocab;
  std::uint64_t total = 0;
  for (const auto& ex : batch.examples) {
    const std::uint64_t m = ex.candidates[ex.gold].size();
    const std::uint64_t L = ex.prompt.size() + m - 1;
    const std::uint64_t per_layer = L * d * 3 * d + L * d * d + 2 * L * d * f + L * (L + 1) * d;
    total += static_cast<std::uint64_t>(c.layers) * per_layer + m * V * d;
  }
  return total;
}

double inner_product(const ParameterSet& a, const ParameterSet& b) {
  if (a.tensors().size() != b.tensors().size()) throw DimensionError("inner_product: tensor count");
  double s = 0.0;
  for (std::size_t t = 0; t < a.tensors().size(); ++t) {
    const auto x = a.tensor(t).value.data();
    const auto y = b.tensor(t).value.data();
    if (x.size() != y.size()) throw DimensionError("inner_product: tensor shape");
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  }
  return s;
}

}  // namespace zoserve
