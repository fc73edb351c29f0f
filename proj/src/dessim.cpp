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

#include "pipesim/dessim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>

#include "listsched.hpp"
#include "pipesim/perfmodel.hpp"

namespace pipesim::dessim {

std::string to_string(SyncPolicy p) {
  switch (p) {
    case SyncPolicy::EndOfIteration: return "end-of-iteration";
    case SyncPolicy::EagerSync: return "eager-sync";
    case SyncPolicy::EagerSyncOpt: return "eager-sync-opt";
  }
  return "?";
}

std::optional<SyncPolicy> sync_policy_from_string(const std::string& s) {
  if (s == "end-of-iteration" || s == "end") return SyncPolicy::EndOfIteration;
  if (s == "eager-sync" || s == "eager") return SyncPolicy::EagerSync;
  if (s == "eager-sync-opt" || s == "eager-opt") return SyncPolicy::EagerSyncOpt;
  return std::nullopt;
}

namespace {

detail::SimParams sim_params(const Schedule& s, const CostProfile& profile,
                             bool zero_comm) {
  const bool halved = detail::halved_backward(s.config);
  detail::SimParams p;
  p.f_dur = profile.F_t;
  p.b_dur = profile.backward_ratio * profile.F_t * (halved ? 0.5 : 1.0);
  if (!zero_comm) {
    p.p2p_fwd = profile.alpha + profile.beta * profile.L_act;
    p.p2p_bwd = profile.alpha + profile.beta * profile.L_act * (halved ? 0.5 : 1.0);
  }
  return p;
}

struct StageCompletion {
  int last_b_index = -1;  // index of the final backward for this stage
  double completion = 0;
  double interior_slack = 0;  // idle between completion and the worker's last compute
};

// Completion time and trailing interior idle per (worker, held stage).
std::vector<std::map<int, StageCompletion>> stage_completions(
    const Schedule& s, const detail::SimTimes& times) {
  const int workers = static_cast<int>(s.per_worker.size());
  std::vector<std::map<int, StageCompletion>> out(workers);
  for (int w = 0; w < workers; ++w) {
    for (int i = 0; i < static_cast<int>(s.per_worker[w].size()); ++i) {
      const Task& t = s.per_worker[w][i];
      if (t.kind != TaskKind::Backward) continue;
      auto& sc = out[w][t.stage];
      if (times.spans[w][i].end > sc.completion) {
        sc.completion = times.spans[w][i].end;
        sc.last_b_index = i;
      }
    }
    double local_end = 0;
    std::vector<TimeSpan> spans = times.spans[w];
    std::sort(spans.begin(), spans.end(),
              [](const TimeSpan& a, const TimeSpan& b) { return a.start < b.start; });
    for (const TimeSpan& ts : spans) local_end = std::max(local_end, ts.end);
    for (auto& [stage, sc] : out[w]) {
      double idle = 0, cursor = sc.completion;
      for (const TimeSpan& ts : spans) {
        if (ts.end <= sc.completion) continue;
        if (ts.start > cursor) idle += ts.start - cursor;
        cursor = std::max(cursor, ts.end);
      }
      sc.interior_slack = idle;
    }
  }
  return out;
}

}  // namespace

SimResult simulate(const Schedule& s, const CostProfile& profile, const SimOptions& opts) {
  const auto params = sim_params(s, profile, opts.zero_comm);
  const auto pass1 = detail::list_schedule(s, params);

  const double eps = opts.eager_overhead < 0 ? 0.02 * profile.F_t : opts.eager_overhead;
  const int r = perfmodel::replicas_per_stage(s.config);
  const double ar_cost =
      opts.zero_comm ? 0.0 : perfmodel::allreduce_cost(profile.L_grad, r, profile);

  auto completions = stage_completions(s, pass1);

  // Decide which stage replicas synchronize eagerly.
  std::map<std::pair<int, int>, double> delays;
  std::vector<std::vector<std::pair<int, bool>>> held(s.per_worker.size());
  for (int w = 0; w < static_cast<int>(s.per_worker.size()); ++w) {
    for (const auto& [stage, sc] : completions[w]) {
      bool eager = false;
      if (ar_cost > 0) {
        if (opts.policy == SyncPolicy::EagerSync) eager = true;
        if (opts.policy == SyncPolicy::EagerSyncOpt) eager = sc.interior_slack > 0;
      }
      held[w].push_back({stage, eager});
      if (eager && eps > 0 && sc.last_b_index >= 0) delays[{w, sc.last_b_index}] = eps;
    }
  }

  detail::SimTimes pass2;
  if (delays.empty()) {
    pass2 = pass1;
  } else {
    auto params2 = params;
    params2.post_delays = &delays;
    pass2 = detail::list_schedule(s, params2);
    completions = stage_completions(s, pass2);
  }

  SimResult result;
  result.timed = s;
  result.timed.timing = pass2.spans;
  result.compute_makespan = pass1.makespan;

  double makespan = pass2.makespan;
  for (int w = 0; w < static_cast<int>(s.per_worker.size()); ++w) {
    double local_end = 0;
    for (const TimeSpan& ts : pass2.spans[w]) local_end = std::max(local_end, ts.end);
    double serial_cursor = local_end;
    for (const auto& [stage, eager] : held[w]) {
      if (ar_cost <= 0) continue;
      AllReduceEvent ev;
      ev.worker = w;
      ev.stage = stage;
      ev.eager = eager;
      if (eager) {
        ev.start = completions[w].at(stage).completion + eps;
        ev.end = ev.start + ar_cost;
      } else {
        ev.start = serial_cursor;
        ev.end = ev.start + ar_cost;
        serial_cursor = ev.end;
      }
      result.allreduce_events.push_back(ev);
      makespan = std::max(makespan, ev.end);
    }
  }
  result.makespan = makespan;
  result.allreduce_exposed = makespan - result.compute_makespan;

  // Idle inside the compute span, per worker.
  double span_start = pass2.makespan, span_end = 0;
  std::vector<double> busy(s.per_worker.size(), 0.0);
  for (std::size_t w = 0; w < s.per_worker.size(); ++w) {
    for (const TimeSpan& ts : pass2.spans[w]) {
      span_start = std::min(span_start, ts.start);
      span_end = std::max(span_end, ts.end);
      busy[w] += ts.end - ts.start;
    }
  }
  result.per_worker_idle.resize(s.per_worker.size());
  for (std::size_t w = 0; w < s.per_worker.size(); ++w)
    result.per_worker_idle[w] =
        s.per_worker[w].empty() ? 0.0 : (span_end - span_start) - busy[w];
  return result;
}

std::vector<std::vector<MemorySample>> memory_trace(const SimResult& result,
                                                    const CostProfile& profile) {
  const Schedule& s = result.timed;
  if (!s.timed()) throw UntimedScheduleError("memory trace requires a timed schedule");
  const double per_micro =
      (s.config.recompute ? profile.M_a_ckpt : profile.M_a) * s.config.B;

  std::vector<std::vector<MemorySample>> out(s.per_worker.size());
  for (std::size_t w = 0; w < s.per_worker.size(); ++w) {
    std::vector<std::pair<double, double>> events;  // (time, delta)
    for (std::size_t i = 0; i < s.per_worker[w].size(); ++i) {
      const Task& t = s.per_worker[w][i];
      const TimeSpan& ts = (*s.timing)[w][i];
      if (t.kind == TaskKind::Forward) events.push_back({ts.start, per_micro});
      else if (t.kind == TaskKind::Backward) events.push_back({ts.end, -per_micro});
    }
    std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
      return a.first < b.first || (a.first == b.first && a.second < b.second);
    });
    double level = 0;
    for (const auto& [time, delta] : events) {
      level += delta;
      if (!out[w].empty() && out[w].back().time == time)
        out[w].back().bytes = level;
      else
        out[w].push_back({time, level});
    }
  }
  return out;
}

}  // namespace pipesim::dessim
