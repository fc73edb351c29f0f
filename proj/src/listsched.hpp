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

#ifndef PIPESIM_SRC_LISTSCHED_HPP
#define PIPESIM_SRC_LISTSCHED_HPP

#include <algorithm>
#include <array>
#include <limits>
#include <map>
#include <vector>

#include "pipesim/core.hpp"

namespace pipesim::detail {

// Shared list-scheduling core. A task starts at max(worker free time,
// predecessor end + edge cost). Data edges: Forward(p,m,s-1) -> Forward(p,m,s),
// Backward(p,m,s+1) -> Backward(p,m,s), and the stash edge
// Forward(p,m,s) -> Backward(p,m,s). Edge costs apply on cross-worker edges
// only. In relaxed mode the first pending Forward on a worker may start ahead
// of earlier-queued Backwards when it can begin strictly earlier; Forwards
// never reorder among themselves and Backwards never reorder at all.

struct SimParams {
  double f_dur = 1.0;
  double b_dur = 2.0;
  double p2p_fwd = 0.0;
  double p2p_bwd = 0.0;
  bool relaxed = false;
  // Extra busy time appended after a given (worker, index) completes.
  const std::map<std::pair<int, int>, double>* post_delays = nullptr;
};

struct SimTimes {
  std::vector<std::vector<TimeSpan>> spans;  // aligned with schedule.per_worker
  double makespan = 0;
};

inline SimTimes list_schedule(const Schedule& s, const SimParams& p) {
  const auto& pw = s.per_worker;
  const int workers = static_cast<int>(pw.size());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr double kEps = 1e-12;

  using Key = std::array<int, 4>;  // {is_backward, pipeline, micro, stage}
  std::map<Key, std::pair<int, int>> where;
  for (int w = 0; w < workers; ++w) {
    for (int i = 0; i < static_cast<int>(pw[w].size()); ++i) {
      const Task& t = pw[w][i];
      if (t.kind != TaskKind::Forward && t.kind != TaskKind::Backward) continue;
      where.emplace(Key{t.kind == TaskKind::Backward ? 1 : 0, t.pipeline_id,
                        t.micro_batch, t.stage},
                    std::make_pair(w, i));
    }
  }

  SimTimes out;
  out.spans.resize(workers);
  std::vector<std::vector<bool>> done(workers);
  for (int w = 0; w < workers; ++w) {
    out.spans[w].assign(pw[w].size(), TimeSpan{-1, -1});
    done[w].assign(pw[w].size(), false);
  }
  std::vector<double> free_at(workers, 0.0);
  std::vector<int> head(workers, 0);

  // Earliest start of (w, i) given already-scheduled predecessors; inf if a
  // predecessor is still pending.
  auto est_of = [&](int w, int i) -> double {
    const Task& t = pw[w][i];
    double est = free_at[w];
    auto fold = [&](const Key& key, double cost) -> bool {
      auto it = where.find(key);
      if (it == where.end()) return true;  // absent predecessor: unconstrained
      const auto [dw, di] = it->second;
      if (dw == w && di == i) return true;
      if (!done[dw][di]) return false;
      est = std::max(est, out.spans[dw][di].end + (dw == w ? 0.0 : cost));
      return true;
    };
    if (t.kind == TaskKind::Forward) {
      if (t.stage > 0 &&
          !fold(Key{0, t.pipeline_id, t.micro_batch, t.stage - 1}, p.p2p_fwd))
        return kInf;
    } else if (t.kind == TaskKind::Backward) {
      if (!fold(Key{1, t.pipeline_id, t.micro_batch, t.stage + 1}, p.p2p_bwd))
        return kInf;
      if (!fold(Key{0, t.pipeline_id, t.micro_batch, t.stage}, 0.0)) return kInf;
    }
    return est;
  };

  std::size_t remaining = 0;
  for (const auto& w : pw) remaining += w.size();

  while (remaining > 0) {
    int best_w = -1, best_i = -1;
    double best_est = kInf;
    for (int w = 0; w < workers; ++w) {
      const int n = static_cast<int>(pw[w].size());
      while (head[w] < n && done[w][head[w]]) ++head[w];
      if (head[w] >= n) continue;

      int cand_i = -1;
      double cand_est = kInf;
      bool forward_pending = false;
      for (int i = head[w]; i < n; ++i) {
        if (done[w][i]) continue;
        const Task& t = pw[w][i];
        const bool eligible =
            i == head[w] ||
            (p.relaxed && t.kind == TaskKind::Forward && !forward_pending);
        if (eligible) {
          const double est = est_of(w, i);
          if (est < cand_est - kEps) {
            cand_i = i;
            cand_est = est;
          }
        }
        if (t.kind == TaskKind::Forward) forward_pending = true;
        if (!p.relaxed) break;
        // Once the first pending Forward has been considered, nothing further
        // down the queue may overtake.
        if (forward_pending && i > head[w]) break;
      }
      if (cand_i >= 0 && cand_est < best_est - kEps) {
        best_w = w;
        best_i = cand_i;
        best_est = cand_est;
      }
    }
    if (best_w < 0)
      throw CyclicDependencyError("no schedulable task; dependency cycle in schedule");

    const Task& t = pw[best_w][best_i];
    const double dur = t.kind == TaskKind::Backward  ? p.b_dur
                       : t.kind == TaskKind::Forward ? p.f_dur
                                                     : 0.0;
    out.spans[best_w][best_i] = {best_est, best_est + dur};
    done[best_w][best_i] = true;
    free_at[best_w] = best_est + dur;
    if (p.post_delays) {
      auto it = p.post_delays->find({best_w, best_i});
      if (it != p.post_delays->end()) free_at[best_w] += it->second;
    }
    out.makespan = std::max(out.makespan, best_est + dur);
    --remaining;
  }
  return out;
}

// Integer-tick durations for exact idle/span accounting: forward = den,
// backward = num of the rationalized backward/forward ratio.
struct TickDurations {
  long long f_ticks = 1;
  long long b_ticks = 2;
};

inline TickDurations tick_durations(const CostProfile& profile, bool halved_backward) {
  const Rational r = rationalize(profile.backward_ratio);
  TickDurations t;
  if (halved_backward) {
    t.f_ticks = 2 * r.den;
    t.b_ticks = r.num;
  } else {
    t.f_ticks = r.den;
    t.b_ticks = r.num;
  }
  return t;
}

inline bool halved_backward(const PipelineConfig& c) {
  return c.scheme == Scheme::Chimera &&
         c.scaling == ScalingStrategy::BackwardHalving && c.N > c.D;
}

// Compute-only exact retiming of a schedule at integer tick resolution.
inline SimTimes tick_schedule(const Schedule& s, const CostProfile& profile) {
  const TickDurations td = tick_durations(profile, halved_backward(s.config));
  SimParams p;
  p.f_dur = static_cast<double>(td.f_ticks);
  p.b_dur = static_cast<double>(td.b_ticks);
  return list_schedule(s, p);
}

}  // namespace pipesim::detail

#endif  // PIPESIM_SRC_LISTSCHED_HPP
