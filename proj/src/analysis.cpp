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

#include "pipesim/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>

#include "listsched.hpp"
#include "pipesim/schedgen.hpp"

namespace pipesim::analysis {

namespace {

std::string task_str(const Task& t) {
  std::ostringstream os;
  os << to_string(t.kind) << "(pipeline " << t.pipeline_id << ", micro " << t.micro_batch
     << ", stage " << t.stage << ", worker " << t.worker << ")";
  return os.str();
}

}  // namespace

std::vector<std::string> validate_dependencies(const Schedule& s) {
  std::vector<std::string> violations;
  using Key = std::array<int, 4>;
  std::map<Key, int> seen;
  std::map<Key, const Task*> forwards;

  for (const auto& worker : s.per_worker) {
    for (const Task& t : worker) {
      if (t.kind != TaskKind::Forward && t.kind != TaskKind::Backward) continue;
      const Key k{t.kind == TaskKind::Backward ? 1 : 0, t.pipeline_id, t.micro_batch,
                  t.stage};
      if (++seen[k] == 2) violations.push_back("duplicate task: " + task_str(t));
      if (t.kind == TaskKind::Forward) forwards[Key{0, t.pipeline_id, t.micro_batch, t.stage}] = &t;
    }
  }
  for (const auto& worker : s.per_worker) {
    for (const Task& t : worker) {
      if (t.kind != TaskKind::Backward) continue;
      if (!forwards.count(Key{0, t.pipeline_id, t.micro_batch, t.stage}))
        violations.push_back("backward without matching forward: " + task_str(t));
    }
  }

  // Same-worker orders must be stage-monotone per (pipeline, micro-batch):
  // forwards ascend, backwards descend, and a backward follows its forward.
  for (const auto& worker : s.per_worker) {
    std::map<std::pair<int, int>, int> last_f_stage, last_b_stage, f_pos;
    for (int i = 0; i < static_cast<int>(worker.size()); ++i) {
      const Task& t = worker[i];
      const auto key = std::make_pair(t.pipeline_id, t.micro_batch);
      if (t.kind == TaskKind::Forward) {
        if (last_f_stage.count(key) && last_f_stage[key] >= t.stage)
          violations.push_back("forward stages out of order at " + task_str(t));
        last_f_stage[key] = t.stage;
        f_pos[{t.pipeline_id, t.micro_batch * 1024 + t.stage}] = i;
      } else if (t.kind == TaskKind::Backward) {
        if (last_b_stage.count(key) && last_b_stage[key] <= t.stage)
          violations.push_back("backward stages out of order at " + task_str(t));
        last_b_stage[key] = t.stage;
        auto it = f_pos.find({t.pipeline_id, t.micro_batch * 1024 + t.stage});
        if (it != f_pos.end() && it->second > i)
          violations.push_back("backward precedes its forward at " + task_str(t));
      }
    }
  }

  if (violations.empty()) {
    try {
      CostProfile unit;  // durations are irrelevant for cycle detection
      (void)detail::tick_schedule(s, unit);
    } catch (const CyclicDependencyError& e) {
      violations.push_back(std::string("cyclic dependency: ") + e.what());
    }
  }
  return violations;
}

namespace {

struct TickView {
  detail::SimTimes times;
  long long span = 0;
  long long f_ticks = 1;
  std::vector<long long> busy;
};

TickView tick_view(const Schedule& s, const CostProfile& profile) {
  TickView v;
  const auto td = detail::tick_durations(profile, detail::halved_backward(s.config));
  v.f_ticks = td.f_ticks;
  v.times = detail::tick_schedule(s, profile);
  v.span = std::llround(v.times.makespan);
  v.busy.assign(s.per_worker.size(), 0);
  for (std::size_t w = 0; w < s.per_worker.size(); ++w)
    for (const Task& t : s.per_worker[w])
      v.busy[w] += t.kind == TaskKind::Backward ? td.b_ticks
                   : t.kind == TaskKind::Forward ? td.f_ticks
                                                 : 0;
  return v;
}

}  // namespace

std::vector<Rational> bubble_ratio_per_worker(const Schedule& s, const CostProfile& profile) {
  if (!s.timed()) throw UntimedScheduleError("bubble ratio requires an assigned timing");
  const TickView v = tick_view(s, profile);
  std::vector<Rational> out;
  out.reserve(s.per_worker.size());
  for (std::size_t w = 0; w < s.per_worker.size(); ++w)
    out.push_back(v.span == 0 ? Rational(0) : Rational(v.span - v.busy[w], v.span));
  return out;
}

Rational bubble_ratio(const Schedule& s, const CostProfile& profile) {
  const auto per_worker = bubble_ratio_per_worker(s, profile);
  if (per_worker.empty()) return Rational(0);
  return per_worker.front();
}

double steady_state_idle(const Schedule& s, const CostProfile& profile) {
  const TickView v = tick_view(s, profile);
  const double lo = static_cast<double>(v.span) / 3.0;
  const double hi = 2.0 * static_cast<double>(v.span) / 3.0;
  double worst = 0;
  for (std::size_t w = 0; w < s.per_worker.size(); ++w) {
    double busy_in_window = 0;
    for (std::size_t i = 0; i < s.per_worker[w].size(); ++i) {
      const TimeSpan& ts = v.times.spans[w][i];
      busy_in_window += std::max(0.0, std::min(hi, ts.end) - std::max(lo, ts.start));
    }
    worst = std::max(worst, (hi - lo) - busy_in_window);
  }
  return worst * profile.F_t / static_cast<double>(v.f_ticks);
}

MemoryProfile memory_profile(const Schedule& s, const CostProfile& profile) {
  const auto& cfg = s.config;
  const int workers = static_cast<int>(s.per_worker.size());
  const TickView v = tick_view(s, profile);

  // Peak live micro-batch activations per worker: a stash lives from the
  // start of its forward to the end of the matching backward.
  MemoryProfile mp;
  mp.act_counts.assign(workers, 0);
  for (int w = 0; w < workers; ++w) {
    std::vector<std::pair<double, int>> events;  // (time, delta); frees first
    std::map<std::array<int, 3>, double> f_start;
    for (std::size_t i = 0; i < s.per_worker[w].size(); ++i) {
      const Task& t = s.per_worker[w][i];
      if (t.kind == TaskKind::Forward)
        f_start[{t.pipeline_id, t.micro_batch, t.stage}] = v.times.spans[w][i].start;
      else if (t.kind == TaskKind::Backward)
        events.push_back({v.times.spans[w][i].end, -1});
    }
    for (const auto& [key, start] : f_start) events.push_back({start, +1});
    std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
      return a.first < b.first || (a.first == b.first && a.second < b.second);
    });
    int live = 0, peak = 0;
    for (const auto& [time, delta] : events) peak = std::max(peak, live += delta);
    mp.act_counts[w] = peak;
  }

  mp.weight_counts.assign(workers, 1);
  for (int w = 0; w < workers; ++w) {
    switch (cfg.scheme) {
      case Scheme::GPipe:
      case Scheme::Dapple: mp.weight_counts[w] = 1; break;
      case Scheme::Gems: mp.weight_counts[w] = 2; break;
      case Scheme::Chimera: mp.weight_counts[w] = 2 * cfg.f; break;
      case Scheme::PipeDream2BW: mp.weight_counts[w] = 2; break;
      case Scheme::PipeDream:
        // One stashed weight version per in-flight micro-batch.
        mp.weight_counts[w] = std::max(1, mp.act_counts[w]);
        break;
    }
  }

  mp.weight_bytes.assign(workers, 0);
  mp.act_bytes.assign(workers, 0);
  const double m_act = cfg.recompute ? profile.M_a_ckpt : profile.M_a;
  for (int w = 0; w < workers; ++w) {
    bool holds_stage0 = false;
    for (const Task& t : s.per_worker[w]) holds_stage0 |= (t.stage == 0);
    mp.weight_bytes[w] = mp.weight_counts[w] * profile.M_theta +
                         (profile.embed_surcharge && holds_stage0 ? profile.M_theta : 0);
    mp.act_bytes[w] = static_cast<double>(mp.act_counts[w]) * cfg.B * m_act;
    const double total = mp.weight_bytes[w] + mp.act_bytes[w];
    if (total > mp.peak_bytes) {
      mp.peak_bytes = total;
      mp.peak_worker = w;
    }
  }
  return mp;
}

bool fits_memory(const PipelineConfig& config, const CostProfile& profile) {
  const Schedule s = schedgen::generate(config, profile);
  const MemoryProfile mp = memory_profile(s, profile);
  return mp.peak_bytes <= profile.mem_capacity;
}

}  // namespace pipesim::analysis
