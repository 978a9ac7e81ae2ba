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

#include "zoserve/experiment.h"

#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>
#include <toml.hpp>

#include "zoserve/baseline_loop.h"
#include "zoserve/errors.h"
#include "zoserve/objective.h"
#include "zoserve/runtime.h"

namespace zoserve {
namespace {

// Flattens a TOML table into dotted keys so unknown fields can be reported.
void flatten(const toml::table& tbl, const std::string& prefix,
             std::map<std::string, const toml::node*>& out) {
  for (const auto& [k, v] : tbl) {
    const std::string key = prefix.empty() ? std::string(k.str()) : prefix + "." + std::string(k.str());
    if (const auto* sub = v.as_table()) {
      flatten(*sub, key, out);
    } else {
      out[key] = &v;
    }
  }
}

void merge_into(toml::table& dst, const toml::table& src) {
  for (const auto& [k, v] : src) {
    if (const auto* sub = v.as_table()) {
      auto* existing = dst.get_as<toml::table>(k.str());
      if (existing) {
        merge_into(*existing, *sub);
        continue;
      }
    }
    dst.insert_or_assign(k.str(), v);
  }
}

toml::table parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + text + "': expected dotted.key=value");
  }
  const std::string key = text.substr(0, eq);
  const std::string value = text.substr(eq + 1);
  try {
    return toml::parse(key + " = " + value);
  } catch (const toml::parse_error&) {
  }
  // Bare words are taken as strings.
  const nlohmann::json quoted = value;
  try {
    return toml::parse(key + " = " + quoted.dump());
  } catch (const toml::parse_error& e) {
    throw ConfigError("override '" + text + "': " + std::string(e.description()));
  }
}

class FieldReader {
 public:
  explicit FieldReader(const toml::table& tbl) { flatten(tbl, "", fields_); }

  template <typename I>
  void integer(const std::string& key, I& dst) {
    const toml::node* n = take(key);
    if (!n) return;
    const auto v = n->value<std::int64_t>();
    if (!n->is_integer() || !v || *v < 0) {
      throw ConfigError(key + ": expected a non-negative integer");
    }
    if (static_cast<std::uint64_t>(*v) > static_cast<std::uint64_t>(std::numeric_limits<I>::max())) {
      throw ConfigError(key + ": value too large");
    }
    dst = static_cast<I>(*v);
  }
  void real(const std::string& key, double& dst) {
    const toml::node* n = take(key);
    if (!n) return;
    if (!n->is_number()) throw ConfigError(key + ": expected a number");
    dst = *n->value<double>();
  }
  void boolean(const std::string& key, bool& dst) {
    const toml::node* n = take(key);
    if (!n) return;
    if (!n->is_boolean()) throw ConfigError(key + ": expected true or false");
    dst = *n->value<bool>();
  }
  template <typename E>
  void choice(const std::string& key, E& dst, std::optional<E> (*parse)(std::string_view),
              const char* allowed) {
    const toml::node* n = take(key);
    if (!n) return;
    if (!n->is_string()) throw ConfigError(key + ": expected a string (" + allowed + ")");
    const auto v = parse(*n->value<std::string>());
    if (!v) {
      throw ConfigError(key + ": unknown value '" + *n->value<std::string>() + "' (" + allowed + ")");
    }
    dst = *v;
  }
  void string(const std::string& key, std::string& dst) {
    const toml::node* n = take(key);
    if (!n) return;
    if (!n->is_string()) throw ConfigError(key + ": expected a string");
    dst = *n->value<std::string>();
  }
  void finish() const {
    if (fields_.empty()) return;
    std::string names;
    for (const auto& [k, v] : fields_) names += (names.empty() ? "" : ", ") + k;
    throw ConfigError("unknown config field(s): " + names);
  }

 private:
  const toml::node* take(const std::string& key) {
    auto it = fields_.find(key);
    if (it == fields_.end()) return nullptr;
    const toml::node* n = it->second;
    fields_.erase(it);
    return n;
  }
  std::map<std::string, const toml::node*> fields_;
};

std::optional<PathChoice> parse_path(std::string_view s) {
  if (s == "baseline") return PathChoice::kBaseline;
  if (s == "serving") return PathChoice::kServing;
  if (s == "both") return PathChoice::kBoth;
  return std::nullopt;
}

std::optional<Precision> parse_precision(std::string_view s) {
  if (s == "real64") return Precision::kReal64;
  if (s == "real32") return Precision::kReal32;
  return std::nullopt;
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

const char* fmt_bool(bool b) { return b ? "true" : "false"; }

void write_text(const std::filesystem::path& path, const std::string& text,
                std::vector<std::filesystem::path>& files) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw InputError("write failed: " + path.string());
  files.push_back(path);
}

nlohmann::json meter_json(const CostMeter& m) {
  const CostReport r = cost_report(m);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : r.rows) {
    rows.push_back({{"component", s.component},
                    {"units", s.units},
                    {"unit_share", s.unit_share},
                    {"seconds", s.seconds},
                    {"time_share", s.time_share}});
  }
  return {{"weight_writes", m.weight_writes},
          {"scoring_calls", m.scoring_calls},
          {"scoring_cost_units", m.scoring_cost_units},
          {"breakdown", rows}};
}

}  // namespace

const char* to_string(PathChoice p) {
  switch (p) {
    case PathChoice::kBaseline: return "baseline";
    case PathChoice::kServing: return "serving";
    case PathChoice::kBoth: return "both";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  if (schema != kConfigSchema) {
    throw ConfigError("schema: unsupported version " + std::to_string(schema) + " (expected " +
                      std::to_string(kConfigSchema) + ")");
  }
  model.validate();
  zo.validate();
  if (steps < 1) throw ConfigError("steps: must be >= 1");
  if (slot_cap < 1) throw ConfigError("runtime.slot_cap: must be >= 1");
  if (task_sizes.train < 1 || task_sizes.dev < 1 || task_sizes.validation < 1) {
    throw ConfigError("task: split sizes must be >= 1");
  }
  if (path != PathChoice::kBaseline && zo.estimator == Estimator::kDenseMezo) {
    throw ConfigError("path: the serving path needs zo.estimator = lozo_lazy or factorized_sqrt_r");
  }
  if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
}

RunOptions ExperimentConfig::run_options() const {
  RunOptions o;
  o.steps = steps;
  o.eval_every = eval_every;
  o.recompute_products = recompute_products;
  o.fold_on_eval = fold_on_eval;
  o.slot_cap = slot_cap;
  return o;
}

Digest ExperimentConfig::digest() const {
  ExperimentConfig c = *this;
  c.output_dir.clear();
  Fnv1a h;
  h.update(std::string_view(to_toml(c)));
  return h.digest();
}

std::string to_toml(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "schema = " << c.schema << '\n'
    << "path = \"" << to_string(c.path) << "\"\n"
    << "steps = " << c.steps << '\n'
    << "eval_every = " << c.eval_every << '\n'
    << "precision = \"" << to_string(c.precision) << "\"\n";
  if (!c.output_dir.empty()) o << "output_dir = " << nlohmann::json(c.output_dir).dump() << '\n';
  o << "\n[model]\n"
    << "vocab = " << c.model.vocab << '\n'
    << "dim = " << c.model.dim << '\n'
    << "layers = " << c.model.layers << '\n'
    << "heads = " << c.model.heads << '\n'
    << "max_prompt = " << c.model.max_prompt << '\n'
    << "ffn_mult = " << c.model.ffn_mult << '\n'
    << "init_seed = " << c.init_seed << '\n'
    << "\n[task]\n"
    << "seed = " << c.task_seed << '\n'
    << "train = " << c.task_sizes.train << '\n'
    << "dev = " << c.task_sizes.dev << '\n'
    << "validation = " << c.task_sizes.validation << '\n'
    << "\n[zo]\n"
    << "estimator = \"" << to_string(c.zo.estimator) << "\"\n"
    << "scope = \"" << to_string(c.zo.scope) << "\"\n"
    << "epsilon = " << fmt_real(c.zo.epsilon) << '\n'
    << "learning_rate = " << fmt_real(c.zo.learning_rate) << '\n'
    << "rank = " << c.zo.rank << '\n'
    << "nu = " << c.zo.nu << '\n'
    << "divide_by_r = " << fmt_bool(c.zo.divide_by_r) << '\n'
    << "seed = " << c.zo.seed << '\n'
    << "batch_size = " << c.zo.batch_size << '\n'
    << "\n[runtime]\n"
    << "recompute_products = " << fmt_bool(c.recompute_products) << '\n'
    << "fold_on_eval = " << fmt_bool(c.fold_on_eval) << '\n'
    << "slot_cap = " << c.slot_cap << '\n';
  return o.str();
}

ExperimentConfig parse_config(std::string_view toml_text, std::span<const std::string> overrides) {
  toml::table tbl;
  try {
    tbl = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config: " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(msg.str());
  }
  for (const auto& ov : overrides) merge_into(tbl, parse_override(ov));

  ExperimentConfig c;
  FieldReader f(tbl);
  f.integer("schema", c.schema);
  f.choice("path", c.path, &parse_path, "baseline, serving, both");
  f.integer("steps", c.steps);
  f.integer("eval_every", c.eval_every);
  f.choice("precision", c.precision, &parse_precision, "real64, real32");
  f.string("output_dir", c.output_dir);
  f.integer("model.vocab", c.model.vocab);
  f.integer("model.dim", c.model.dim);
  f.integer("model.layers", c.model.layers);
  f.integer("model.heads", c.model.heads);
  f.integer("model.max_prompt", c.model.max_prompt);
  f.integer("model.ffn_mult", c.model.ffn_mult);
  f.integer("model.init_seed", c.init_seed);
  f.integer("task.seed", c.task_seed);
  f.integer("task.train", c.task_sizes.train);
  f.integer("task.dev", c.task_sizes.dev);
  f.integer("task.validation", c.task_sizes.validation);
  f.choice("zo.estimator", c.zo.estimator, &parse_estimator,
           "dense_mezo, lozo_lazy, factorized_sqrt_r");
  f.choice("zo.scope", c.zo.scope, &parse_scope, "full, lora_only");
  f.real("zo.epsilon", c.zo.epsilon);
  f.real("zo.learning_rate", c.zo.learning_rate);
  f.integer("zo.rank", c.zo.rank);
  f.integer("zo.nu", c.zo.nu);
  f.boolean("zo.divide_by_r", c.zo.divide_by_r);
  f.integer("zo.seed", c.zo.seed);
  f.integer("zo.batch_size", c.zo.batch_size);
  f.boolean("runtime.recompute_products", c.recompute_products);
  f.boolean("runtime.fold_on_eval", c.fold_on_eval);
  f.integer("runtime.slot_cap", c.slot_cap);
  f.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             std::span<const std::string> overrides) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides);
}

ExperimentSetup make_setup(const ExperimentConfig& config) {
  ExperimentSetup s;
  s.model = init_model(config.model, config.init_seed);
  s.task = generate_task(config.task_seed, config.task_sizes, config.model.vocab, PlantedRule{},
                         config.model.max_prompt);
  s.model_digest = s.model.params.digest();
  s.task_digest = s.task.digest();
  return s;
}

ExperimentResult run_experiment(const ExperimentConfig& config, bool write_files) {
  config.validate();
  ExperimentResult res;
  res.config = config;
  res.config_digest = config.digest();

  const ExperimentSetup setup = make_setup(config);
  const TaskObjective objective(config.model, setup.task.train, config.precision);
  const Evaluator evaluator = make_task_evaluator(config.model, setup.task.dev, config.precision);
  const RunOptions options = config.run_options();

  TrajectoryHeader header;
  header.config_digest = res.config_digest;
  header.model_digest = setup.model_digest;
  header.task_digest = setup.task_digest;
  header.estimator = to_string(config.zo.estimator);
  header.precision = to_string(config.precision);

  std::vector<ReportRun> report_runs;
  if (config.path != PathChoice::kServing) {
    res.baseline = run_baseline(config.zo, setup.model.params, objective, &evaluator, options);
    TrajectoryHeader h = header;
    h.path = "baseline";
    res.baseline_trajectory = compare_ready_export(*res.baseline, h);
    report_runs.push_back({"baseline", res.baseline->evals, res.baseline->wall_seconds});
  }
  if (config.path != PathChoice::kBaseline) {
    res.serving = run_serving_path(config.zo, setup.model.params, objective, &evaluator, options);
    TrajectoryHeader h = header;
    h.path = "serving";
    res.serving_trajectory = compare_ready_export(*res.serving, h);
    report_runs.push_back({"serving", res.serving->evals, res.serving->wall_seconds});
  }
  if (res.baseline_trajectory && res.serving_trajectory) {
    const double tol =
        config.precision == Precision::kReal64 ? kSamePathLossTol : kCrossPrecisionLossTol;
    res.compare = strict_compare(*res.baseline_trajectory, *res.serving_trajectory, tol);
  }
  res.summary = trajectory_report(report_runs);
  if (!write_files) return res;

  const std::filesystem::path dir = config.output_dir;
  std::filesystem::create_directories(dir);
  write_text(dir / "config.toml",
             "# config_digest " + res.config_digest.hex() + "\n" + to_toml(config), res.files);

  nlohmann::json summary{{"config_digest", res.config_digest.hex()},
                         {"model_digest", setup.model_digest.hex()},
                         {"task_digest", setup.task_digest.hex()},
                         {"config", to_toml(config)}};
  auto emit_run = [&](const PathRun& run, const Trajectory& traj) {
    const std::string name = to_string(run.path);
    const auto path = dir / (name + ".trajectory.jsonl");
    save_trajectory(traj, path);
    res.files.push_back(path);
    summary["runs"][name] = {{"trajectory", path.filename().string()},
                             {"trajectory_digest", trajectory_digest(traj).hex()},
                             {"wall_seconds", run.wall_seconds},
                             {"final_eval_loss", run.evals.empty() ? 0.0 : run.evals.back().loss},
                             {"final_eval_accuracy",
                              run.evals.empty() ? 0.0 : run.evals.back().accuracy},
                             {"final_params_digest", run.params.digest().hex()},
                             {"cost", meter_json(run.meter)}};
  };
  if (res.baseline) emit_run(*res.baseline, *res.baseline_trajectory);
  if (res.serving) emit_run(*res.serving, *res.serving_trajectory);

  write_trajectory_report(report_runs, res.summary, dir, res.config_digest);
  for (const auto& r : report_runs) res.files.push_back(dir / (r.name + ".eval.csv"));
  res.files.push_back(dir / "report.json");

  if (res.compare) {
    auto j = nlohmann::json::parse(strict_compare_json(*res.compare));
    j["config_digest"] = res.config_digest.hex();
    write_text(dir / "compare.json", j.dump(2) + "\n", res.files);
    write_text(dir / "compare.txt",
               "# config_digest " + res.config_digest.hex() + "\n" +
                   format_strict_compare(*res.compare),
               res.files);
    summary["compare"] = j;
  }
  if (res.summary.speedup) summary["speedup"] = *res.summary.speedup;
  write_text(dir / "summary.json", summary.dump(2) + "\n", res.files);
  return res;
}

}  // namespace zoserve
