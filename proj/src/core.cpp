/* Copyright 2026 The pipesim Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "pipesim/core.hpp"

#include <json.hpp>

#include "pipesim/analysis.hpp"

namespace pipesim {

using ojson = nlohmann::ordered_json;

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::GPipe: return "gpipe";
    case Scheme::Dapple: return "dapple";
    case Scheme::Gems: return "gems";
    case Scheme::PipeDream: return "pipedream";
    case Scheme::PipeDream2BW: return "pipedream-2bw";
    case Scheme::Chimera: return "chimera";
  }
  return "?";
}

std::string to_string(ScalingStrategy s) {
  switch (s) {
    case ScalingStrategy::Direct: return "direct";
    case ScalingStrategy::ForwardDoubling: return "forward-doubling";
    case ScalingStrategy::BackwardHalving: return "backward-halving";
  }
  return "?";
}

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::Forward: return "Forward";
    case TaskKind::Backward: return "Backward";
    case TaskKind::Recompute: return "Recompute";
    case TaskKind::P2PSend: return "P2PSend";
    case TaskKind::P2PRecv: return "P2PRecv";
    case TaskKind::AllReduceStart: return "AllReduceStart";
    case TaskKind::AllReduceWait: return "AllReduceWait";
  }
  return "?";
}

std::optional<Scheme> scheme_from_string(const std::string& s) {
  if (s == "gpipe") return Scheme::GPipe;
  if (s == "dapple") return Scheme::Dapple;
  if (s == "gems") return Scheme::Gems;
  if (s == "pipedream") return Scheme::PipeDream;
  if (s == "pipedream-2bw" || s == "pipedream2bw") return Scheme::PipeDream2BW;
  if (s == "chimera") return Scheme::Chimera;
  return std::nullopt;
}

std::optional<ScalingStrategy> scaling_from_string(const std::string& s) {
  if (s == "direct") return ScalingStrategy::Direct;
  if (s == "forward-doubling" || s == "doubling") return ScalingStrategy::ForwardDoubling;
  if (s == "backward-halving" || s == "halving") return ScalingStrategy::BackwardHalving;
  return std::nullopt;
}

std::optional<TaskKind> task_kind_from_string(const std::string& s) {
  if (s == "Forward") return TaskKind::Forward;
  if (s == "Backward") return TaskKind::Backward;
  if (s == "Recompute") return TaskKind::Recompute;
  if (s == "P2PSend") return TaskKind::P2PSend;
  if (s == "P2PRecv") return TaskKind::P2PRecv;
  if (s == "AllReduceStart") return TaskKind::AllReduceStart;
  if (s == "AllReduceWait") return TaskKind::AllReduceWait;
  return std::nullopt;
}

std::vector<std::string> validate_config_shape(const PipelineConfig& c) {
  std::vector<std::string> v;
  if (c.D < 1) v.push_back("D must be a positive integer");
  if (c.W < 1) v.push_back("W must be a positive integer");
  if (c.N < 1) v.push_back("N must be a positive integer");
  if (c.B < 1) v.push_back("B must be a positive integer");
  if (c.scheme == Scheme::Chimera) {
    if (c.D % 2 != 0) v.push_back("chimera requires an even number of stages D");
    if (c.f < 1) v.push_back("chimera requires f >= 1");
    if (c.D >= 2 && c.f >= 1) {
      const int q = c.D / 2;
      if (c.f > q) v.push_back("chimera requires f <= D/2");
      else if (q % c.f != 0) v.push_back("chimera requires f to divide D/2");
    }
    if (c.scaling == ScalingStrategy::BackwardHalving && c.B % 2 != 0)
      v.push_back("backward-halving requires an even micro-batch size B");
    if (c.scaling != ScalingStrategy::Direct && c.N > c.D && c.N % c.D != 0)
      v.push_back("forward-doubling/backward-halving require D to divide N");
  } else {
    if (c.f != 1) v.push_back("f is only meaningful for chimera");
    if (c.scaling != ScalingStrategy::Direct)
      v.push_back("scaling strategies are only meaningful for chimera");
  }
  return v;
}

std::vector<std::string> validate_config(const PipelineConfig& c, const CostProfile& p) {
  std::vector<std::string> v = validate_config_shape(c);
  if (!v.empty()) return v;
  if (p.F_t <= 0 || p.backward_ratio <= 0 || p.M_theta <= 0 || p.M_a <= 0 ||
      p.M_a_ckpt <= 0 || p.mem_capacity <= 0 || p.L_grad <= 0 || p.L_act <= 0 ||
      p.alpha < 0 || p.beta < 0)
    v.push_back("cost profile fields must be positive");
  if (p.M_a_ckpt > p.M_a)
    v.push_back("M_a_ckpt must not exceed M_a");
  if (!v.empty()) return v;
  if (!analysis::fits_memory(c, p))
    v.push_back("peak per-worker memory exceeds mem_capacity");
  return v;
}

// --- JSON ------------------------------------------------------------------

namespace {

ojson config_to_ojson(const PipelineConfig& c) {
  ojson j;
  j["scheme"] = to_string(c.scheme);
  j["D"] = c.D;
  j["W"] = c.W;
  j["N"] = c.N;
  j["B"] = c.B;
  j["f"] = c.f;
  j["scaling"] = to_string(c.scaling);
  j["recompute"] = c.recompute;
  return j;
}

PipelineConfig config_from_ojson(const ojson& j) {
  PipelineConfig c;
  const auto sch = scheme_from_string(j.at("scheme").get<std::string>());
  if (!sch) throw InvalidConfigError("unknown scheme: " + j.at("scheme").dump());
  c.scheme = *sch;
  c.D = j.at("D").get<int>();
  c.W = j.at("W").get<int>();
  c.N = j.at("N").get<int>();
  c.B = j.at("B").get<int>();
  c.f = j.at("f").get<int>();
  const auto sc = scaling_from_string(j.at("scaling").get<std::string>());
  if (!sc) throw InvalidConfigError("unknown scaling: " + j.at("scaling").dump());
  c.scaling = *sc;
  c.recompute = j.at("recompute").get<bool>();
  return c;
}

ojson task_to_ojson(const Task& t) {
  ojson j;
  j["kind"] = to_string(t.kind);
  j["pipeline_id"] = t.pipeline_id;
  j["micro_batch"] = t.micro_batch;
  j["stage"] = t.stage;
  j["worker"] = t.worker;
  j["replica_group"] = t.replica_group;
  return j;
}

Task task_from_ojson(const ojson& j) {
  Task t;
  const auto k = task_kind_from_string(j.at("kind").get<std::string>());
  if (!k) throw InvalidConfigError("unknown task kind: " + j.at("kind").dump());
  t.kind = *k;
  t.pipeline_id = j.at("pipeline_id").get<int>();
  t.micro_batch = j.at("micro_batch").get<int>();
  t.stage = j.at("stage").get<int>();
  t.worker = j.at("worker").get<int>();
  t.replica_group = j.at("replica_group").get<int>();
  return t;
}

ojson schedule_to_ojson(const Schedule& s) {
  ojson j;
  j["config"] = config_to_ojson(s.config);
  ojson workers = ojson::array();
  for (const auto& w : s.per_worker) {
    ojson tasks = ojson::array();
    for (const auto& t : w) tasks.push_back(task_to_ojson(t));
    workers.push_back(std::move(tasks));
  }
  j["per_worker"] = std::move(workers);
  if (s.timing) {
    ojson timing = ojson::array();
    for (const auto& w : *s.timing) {
      ojson spans = ojson::array();
      for (const auto& ts : w) {
        ojson span;
        span["start"] = ts.start;
        span["end"] = ts.end;
        spans.push_back(std::move(span));
      }
      timing.push_back(std::move(spans));
    }
    j["timing"] = std::move(timing);
  }
  return j;
}

Schedule schedule_from_ojson(const ojson& j) {
  Schedule s;
  s.config = config_from_ojson(j.at("config"));
  for (const auto& w : j.at("per_worker")) {
    std::vector<Task> tasks;
    for (const auto& t : w) tasks.push_back(task_from_ojson(t));
    s.per_worker.push_back(std::move(tasks));
  }
  if (j.contains("timing")) {
    std::vector<std::vector<TimeSpan>> timing;
    for (const auto& w : j.at("timing")) {
      std::vector<TimeSpan> spans;
      for (const auto& ts : w)
        spans.push_back({ts.at("start").get<double>(), ts.at("end").get<double>()});
      timing.push_back(std::move(spans));
    }
    s.timing = std::move(timing);
  }
  return s;
}

ojson profile_to_ojson(const CostProfile& p) {
  ojson j;
  j["F_t"] = p.F_t;
  j["backward_ratio"] = p.backward_ratio;
  j["alpha"] = p.alpha;
  j["beta"] = p.beta;
  j["L_grad"] = p.L_grad;
  j["L_act"] = p.L_act;
  j["M_theta"] = p.M_theta;
  j["M_a"] = p.M_a;
  j["M_a_ckpt"] = p.M_a_ckpt;
  j["mem_capacity"] = p.mem_capacity;
  j["embed_surcharge"] = p.embed_surcharge;
  return j;
}

CostProfile profile_from_ojson(const ojson& j) {
  static const char* known[] = {"F_t",     "backward_ratio", "alpha",
                                "beta",    "L_grad",         "L_act",
                                "M_theta", "M_a",            "M_a_ckpt",
                                "mem_capacity", "embed_surcharge"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok |= (it.key() == k);
    if (!ok) throw InvalidConfigError("unknown cost profile field: " + it.key());
  }
  CostProfile p;
  p.F_t = j.at("F_t").get<double>();
  p.backward_ratio = j.at("backward_ratio").get<double>();
  p.alpha = j.at("alpha").get<double>();
  p.beta = j.at("beta").get<double>();
  p.L_grad = j.at("L_grad").get<double>();
  p.L_act = j.at("L_act").get<double>();
  p.M_theta = j.at("M_theta").get<double>();
  p.M_a = j.at("M_a").get<double>();
  p.M_a_ckpt = j.at("M_a_ckpt").get<double>();
  p.mem_capacity = j.at("mem_capacity").get<double>();
  if (j.contains("embed_surcharge")) p.embed_surcharge = j.at("embed_surcharge").get<bool>();
  return p;
}

ojson report_to_ojson(const AnalysisReport& r) {
  ojson j;
  j["bubble_ratio"] = ojson{{"num", r.bubble_ratio.num}, {"den", r.bubble_ratio.den}};
  j["weight_mem"] = r.weight_mem;
  j["act_mem"] = r.act_mem;
  j["peak_mem"] = r.peak_mem;
  j["C_f"] = r.C_f;
  j["C_b"] = r.C_b;
  j["T_predicted"] = r.T_predicted;
  j["T_simulated"] = r.T_simulated;
  return j;
}

AnalysisReport report_from_ojson(const ojson& j) {
  AnalysisReport r;
  r.bubble_ratio = Rational(j.at("bubble_ratio").at("num").get<std::int64_t>(),
                            j.at("bubble_ratio").at("den").get<std::int64_t>());
  r.weight_mem = j.at("weight_mem").get<std::vector<double>>();
  r.act_mem = j.at("act_mem").get<std::vector<double>>();
  r.peak_mem = j.at("peak_mem").get<double>();
  r.C_f = j.at("C_f").get<int>();
  r.C_b = j.at("C_b").get<int>();
  r.T_predicted = j.at("T_predicted").get<double>();
  r.T_simulated = j.at("T_simulated").get<double>();
  return r;
}

std::string dump(const ojson& j, int indent) {
  std::string out = j.dump(indent);
  out.push_back('\n');
  return out;
}

}  // namespace

std::string to_json(const PipelineConfig& c, int indent) { return dump(config_to_ojson(c), indent); }
std::string to_json(const Task& t, int indent) { return dump(task_to_ojson(t), indent); }
std::string to_json(const Schedule& s, int indent) { return dump(schedule_to_ojson(s), indent); }
std::string to_json(const CostProfile& p, int indent) { return dump(profile_to_ojson(p), indent); }
std::string to_json(const AnalysisReport& r, int indent) { return dump(report_to_ojson(r), indent); }

PipelineConfig config_from_json(const std::string& text) {
  return config_from_ojson(ojson::parse(text));
}
Task task_from_json(const std::string& text) { return task_from_ojson(ojson::parse(text)); }
Schedule schedule_from_json(const std::string& text) {
  return schedule_from_ojson(ojson::parse(text));
}
CostProfile profile_from_json(const std::string& text) {
  return profile_from_ojson(ojson::parse(text));
}
AnalysisReport report_from_json(const std::string& text) {
  return report_from_ojson(ojson::parse(text));
}

}  // namespace pipesim
