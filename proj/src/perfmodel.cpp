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

#include "pipesim/perfmodel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "listsched.hpp"
#include "pipesim/analysis.hpp"
#include "pipesim/schedgen.hpp"

namespace pipesim::perfmodel {

double p2p_cost(double payload_bytes, const CostProfile& profile) {
  if (payload_bytes < 0) throw InvalidConfigError("p2p payload must be non-negative");
  return profile.alpha + profile.beta * payload_bytes;
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

double allreduce_cost(double L_bytes, int replicas, const CostProfile& profile) {
  if (replicas <= 1) return 0.0;
  const double r = replicas;
  return 2.0 * std::log2(r) * profile.alpha + 2.0 * (r - 1.0) * profile.beta * L_bytes / r;
}

int replicas_per_stage(const PipelineConfig& config) {
  switch (config.scheme) {
    case Scheme::Chimera: return 2 * config.f * config.W;
    case Scheme::Gems: return 2 * config.W;
    default: return config.W;
  }
}

namespace {

using Key = std::array<int, 4>;

std::map<Key, std::pair<int, int>> index_tasks(const Schedule& s) {
  std::map<Key, std::pair<int, int>> where;
  for (int w = 0; w < static_cast<int>(s.per_worker.size()); ++w)
    for (int i = 0; i < static_cast<int>(s.per_worker[w].size()); ++i) {
      const Task& t = s.per_worker[w][i];
      if (t.kind != TaskKind::Forward && t.kind != TaskKind::Backward) continue;
      where.emplace(Key{t.kind == TaskKind::Backward ? 1 : 0, t.pipeline_id,
                        t.micro_batch, t.stage},
                    std::make_pair(w, i));
    }
  return where;
}

}  // namespace

CriticalPath critical_path(const Schedule& s, const CostProfile& profile) {
  const auto times = detail::tick_schedule(s, profile);
  const auto where = index_tasks(s);

  // Latest-finishing task; ties resolved toward the lower worker id.
  int cw = -1, ci = -1;
  double latest = -1;
  for (int w = 0; w < static_cast<int>(s.per_worker.size()); ++w)
    for (int i = 0; i < static_cast<int>(s.per_worker[w].size()); ++i)
      if (times.spans[w][i].end > latest) {
        latest = times.spans[w][i].end;
        cw = w;
        ci = i;
      }
  if (cw < 0) return {};

  CriticalPath cp;
  std::vector<Task> rev;
  while (cw >= 0) {
    const Task& t = s.per_worker[cw][ci];
    rev.push_back(t);
    if (t.kind == TaskKind::Forward) ++cp.C_f;
    if (t.kind == TaskKind::Backward) ++cp.C_b;
    const double start = times.spans[cw][ci].start;
    if (start <= 0) break;

    int nw = -1, ni = -1;
    // Binding data edge first, then the worker-sequencing edge.
    auto try_data = [&](const Key& key) {
      if (nw >= 0) return;
      auto it = where.find(key);
      if (it == where.end()) return;
      const auto [dw, di] = it->second;
      if (times.spans[dw][di].end == start) {
        nw = dw;
        ni = di;
      }
    };
    if (t.kind == TaskKind::Backward) {
      try_data(Key{1, t.pipeline_id, t.micro_batch, t.stage + 1});
      try_data(Key{0, t.pipeline_id, t.micro_batch, t.stage});
    } else if (t.stage > 0) {
      try_data(Key{0, t.pipeline_id, t.micro_batch, t.stage - 1});
    }
    if (nw < 0) {
      for (int j = 0; j < static_cast<int>(s.per_worker[cw].size()); ++j)
        if (j != ci && times.spans[cw][j].end == start) {
          nw = cw;
          ni = j;
          break;
        }
    }
    if (nw < 0) throw CyclicDependencyError("critical path walk found no binding edge");
    cw = nw;
    ci = ni;
  }
  cp.path.assign(rev.rbegin(), rev.rend());
  return cp;
}

FreeRegions free_regions(const Schedule& s, const CostProfile& profile) {
  if (!s.timed()) throw UntimedScheduleError("free regions require a timed schedule");
  (void)profile;
  FreeRegions fr;
  fr.per_worker.resize(s.per_worker.size());
  for (int w = 0; w < static_cast<int>(s.per_worker.size()); ++w) {
    std::map<int, double> completion;
    for (std::size_t i = 0; i < s.per_worker[w].size(); ++i) {
      const Task& t = s.per_worker[w][i];
      if (t.kind == TaskKind::Backward)
        completion[t.stage] = std::max(completion[t.stage], (*s.timing)[w][i].end);
    }
    std::vector<TimeSpan> spans = (*s.timing)[w];
    std::sort(spans.begin(), spans.end(),
              [](const TimeSpan& a, const TimeSpan& b) { return a.start < b.start; });
    for (const auto& [stage, done] : completion) {
      double idle = 0, cursor = done;
      for (const TimeSpan& ts : spans) {
        if (ts.end <= done) continue;
        if (ts.start > cursor) idle += ts.start - cursor;
        cursor = std::max(cursor, ts.end);
      }
      fr.per_worker[w].push_back({stage, idle});
    }
  }
  return fr;
}

double predict_T(const PipelineConfig& config, const CostProfile& profile) {
  const Schedule s = schedgen::generate(config, profile);
  const CriticalPath cp = critical_path(s, profile);

  const bool halved = detail::halved_backward(config);
  const double comm_p2p = config.D > 1 ? p2p_cost(profile.L_act, profile) : 0.0;
  const double b_task = profile.backward_ratio * profile.F_t * (halved ? 0.5 : 1.0);
  double T = (profile.F_t + comm_p2p) * cp.C_f + (b_task + comm_p2p) * cp.C_b;

  const int r = replicas_per_stage(config);
  const double ar = allreduce_cost(profile.L_grad, r, profile);
  if (ar > 0) {
    // Free regions on the p2p-costed compute timeline; each stage's
    // allreduce greedily consumes the idle following its completion, and
    // only the remainder extends the runtime.
    detail::SimParams params;
    params.f_dur = profile.F_t;
    params.b_dur = b_task;
    params.p2p_fwd = comm_p2p;
    params.p2p_bwd = config.D > 1
                         ? p2p_cost(profile.L_act * (halved ? 0.5 : 1.0), profile)
                         : 0.0;
    const auto times = detail::list_schedule(s, params);

    double worst = 0;
    for (int w = 0; w < static_cast<int>(s.per_worker.size()); ++w) {
      std::map<int, double> completion;
      for (std::size_t i = 0; i < s.per_worker[w].size(); ++i) {
        const Task& t = s.per_worker[w][i];
        if (t.kind == TaskKind::Backward)
          completion[t.stage] = std::max(completion[t.stage], times.spans[w][i].end);
      }
      std::vector<TimeSpan> spans = times.spans[w];
      std::sort(spans.begin(), spans.end(),
                [](const TimeSpan& a, const TimeSpan& b) { return a.start < b.start; });
      // Idle intervals of this worker.
      std::vector<std::pair<double, double>> idle;
      double cursor = spans.empty() ? 0.0 : spans.front().start;
      for (const TimeSpan& ts : spans) {
        if (ts.start > cursor) idle.push_back({cursor, ts.start});
        cursor = std::max(cursor, ts.end);
      }
      // Stages in completion order each consume idle after their completion.
      std::vector<std::pair<double, int>> order;
      for (const auto& [stage, done] : completion) order.push_back({done, stage});
      std::sort(order.begin(), order.end());
      double unoverlapped = 0;
      for (const auto& [done, stage] : order) {
        double need = ar;
        for (auto& [lo, hi] : idle) {
          if (hi <= done || need <= 0) continue;
          const double avail = hi - std::max(lo, done);
          if (avail <= 0) continue;
          const double take = std::min(avail, need);
          need -= take;
          // Consume from the front of the usable part of this interval.
          if (std::max(lo, done) == lo) lo += take;
          else hi -= take;
        }
        unoverlapped += std::max(0.0, need);
      }
      worst = std::max(worst, unoverlapped);
    }
    T += worst;
  }
  return T;
}

std::vector<PlanEntry> plan(int P, long long B_hat, const CostProfile& profile,
                            Scheme scheme) {
  if (P < 2) throw InvalidConfigError("plan requires at least two workers");
  if (B_hat < 1) throw InvalidConfigError("plan requires a positive mini-batch size");

  std::vector<PlanEntry> entries;
  for (int W = 1; W <= P; ++W) {
    if (P % W != 0) continue;
    const int D = P / W;
    if (scheme == Scheme::Chimera && (D % 2 != 0)) continue;

    // Greedy micro-batch size: largest power of two fitting in memory,
    // preferring no recomputation.
    PipelineConfig base;
    base.scheme = scheme;
    base.D = D;
    base.W = W;
    int chosen_B = 0;
    bool chosen_recompute = false;
    for (int pass = 0; pass < 2 && chosen_B == 0; ++pass) {
      const bool recompute = pass == 1;
      for (long long B = 1; B * W <= B_hat; B *= 2) {
        if (B_hat % (B * W) != 0) continue;
        PipelineConfig c = base;
        c.B = static_cast<int>(B);
        c.N = static_cast<int>(B_hat / (B * W));
        c.recompute = recompute;
        if (analysis::fits_memory(c, profile))
          if (B > chosen_B) {
            chosen_B = static_cast<int>(B);
            chosen_recompute = recompute;
          }
      }
    }
    if (chosen_B == 0) continue;

    PipelineConfig c = base;
    c.B = chosen_B;
    c.N = static_cast<int>(B_hat / (static_cast<long long>(chosen_B) * W));
    c.recompute = chosen_recompute;

    std::vector<ScalingStrategy> strategies{ScalingStrategy::Direct};
    if (scheme == Scheme::Chimera && c.N > c.D && c.N % c.D == 0) {
      strategies.push_back(ScalingStrategy::ForwardDoubling);
      if (c.B % 2 == 0) strategies.push_back(ScalingStrategy::BackwardHalving);
    }
    for (ScalingStrategy strat : strategies) {
      PipelineConfig v = c;
      v.scaling = strat;
      if (strat == ScalingStrategy::ForwardDoubling && v.N > v.D) v.recompute = true;
      if (!analysis::fits_memory(v, profile)) continue;
      // Recomputation re-runs the forward inside the backward pass.
      CostProfile prof = profile;
      if (v.recompute) prof.backward_ratio = profile.backward_ratio + 1.0;
      PlanEntry e;
      e.W = W;
      e.D = D;
      e.B = v.B;
      e.N = v.N;
      e.scaling = strat;
      e.recompute = v.recompute;
      e.T_predicted = predict_T(v, prof);
      entries.push_back(e);
    }
  }
  if (entries.empty())
    throw NoFeasibleConfigError("no (W, D, B) configuration fits in device memory");
  std::stable_sort(entries.begin(), entries.end(), [](const PlanEntry& a, const PlanEntry& b) {
    if (a.T_predicted != b.T_predicted) return a.T_predicted < b.T_predicted;
    if (a.D != b.D) return a.D < b.D;
    return a.W < b.W;
  });
  return entries;
}

}  // namespace pipesim::perfmodel
