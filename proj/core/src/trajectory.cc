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

#include "zoserve/trajectory.h"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "zoserve/errors.h"

namespace zoserve {
namespace {

using nlohmann::json;

Digest digest_field(const json& j, const char* key) {
  const auto text = j.at(key).get<std::string>();
  auto d = Digest::from_hex(text);
  if (!d) throw InputError(std::string("bad digest in field ") + key + ": " + text);
  return *d;
}

json step_json(const ZoStepRecord& r) {
  return json{{"kind", "step"},
              {"step", r.step},
              {"loss_plus", r.loss_plus},
              {"loss_minus", r.loss_minus},
              {"coefficient", r.coefficient},
              {"beta", r.beta},
              {"seed", r.seed},
              {"u_digest", r.u_digest.hex()},
              {"v_digest", r.v_digest.hex()},
              {"minibatch_id", r.minibatch_id.hex()}};
}

ZoStepRecord step_from_json(const json& j) {
  ZoStepRecord r;
  r.step = j.at("step").get<std::uint64_t>();
  r.loss_plus = j.at("loss_plus").get<double>();
  r.loss_minus = j.at("loss_minus").get<double>();
  r.coefficient = j.at("coefficient").get<double>();
  r.beta = j.at("beta").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.u_digest = digest_field(j, "u_digest");
  r.v_digest = digest_field(j, "v_digest");
  r.minibatch_id = digest_field(j, "minibatch_id");
  return r;
}

}  // namespace

std::string to_jsonl(const Trajectory& t) {
  std::string out;
  const json header{{"kind", "header"},
                    {"schema", kTrajectorySchema},
                    {"path", t.header.path},
                    {"config_digest", t.header.config_digest.hex()},
                    {"model_digest", t.header.model_digest.hex()},
                    {"task_digest", t.header.task_digest.hex()},
                    {"estimator", t.header.estimator},
                    {"precision", t.header.precision},
                    {"steps", t.header.steps}};
  out += header.dump();
  out += '\n';
  for (const auto& r : t.steps) {
    out += step_json(r).dump();
    out += '\n';
  }
  for (const auto& e : t.evals) {
    out += json{{"kind", "eval"}, {"step", e.step}, {"loss", e.loss}, {"accuracy", e.accuracy}}
               .dump();
    out += '\n';
  }
  return out;
}

Trajectory parse_jsonl(std::string_view text) {
  Trajectory t;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "header") {
        if (have_header) throw InputError("duplicate header");
        if (j.at("schema").get<int>() != kTrajectorySchema) {
          throw InputError("unsupported trajectory schema " + j.at("schema").dump());
        }
        t.header.path = j.at("path").get<std::string>();
        t.header.config_digest = digest_field(j, "config_digest");
        t.header.model_digest = digest_field(j, "model_digest");
        t.header.task_digest = digest_field(j, "task_digest");
        t.header.estimator = j.at("estimator").get<std::string>();
        t.header.precision = j.at("precision").get<std::string>();
        t.header.steps = j.at("steps").get<std::uint64_t>();
        have_header = true;
      } else if (!have_header) {
        throw InputError("record before header");
      } else if (kind == "step") {
        t.steps.push_back(step_from_json(j));
      } else if (kind == "eval") {
        t.evals.push_back(EvalRecord{j.at("step").get<std::uint64_t>(),
                                     j.at("loss").get<double>(),
                                     j.at("accuracy").get<double>()});
      } else {
        throw InputError("unknown record kind '" + kind + "'");
      }
    } catch (const json::exception& e) {
      throw InputError("trajectory line " + std::to_string(line_no) + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError("trajectory line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw InputError("trajectory has no header");
  if (t.steps.size() != t.header.steps) {
    throw InputError("trajectory declares " + std::to_string(t.header.steps) + " steps, has " +
                     std::to_string(t.steps.size()));
  }
  return t;
}

void save_trajectory(const Trajectory& trajectory, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out << to_jsonl(trajectory);
  if (!out) throw InputError("write failed: " + path.string());
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_jsonl(buf.str());
}

Digest trajectory_digest(const Trajectory& trajectory) {
  Fnv1a h;
  h.update(std::string_view(to_jsonl(trajectory)));
  return h.digest();
}

Digest file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  Fnv1a h;
  h.update(std::string_view(buf.str()));
  return h.digest();
}

}  // namespace zoserve
