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

#ifndef PIPESIM_DESSIM_HPP
#define PIPESIM_DESSIM_HPP

#include <vector>

#include "pipesim/core.hpp"

namespace pipesim::dessim {

enum class SyncPolicy { EndOfIteration, EagerSync, EagerSyncOpt };

std::string to_string(SyncPolicy p);
std::optional<SyncPolicy> sync_policy_from_string(const std::string& s);

struct AllReduceEvent {
  int worker = 0;
  int stage = 0;
  bool eager = false;
  double start = 0;
  double end = 0;
};

struct SimResult {
  Schedule timed;                       // input schedule with timing assigned
  double makespan = 0;                  // includes exposed gradient sync
  double compute_makespan = 0;          // compute + p2p only
  std::vector<double> per_worker_idle;  // idle inside the compute span
  double allreduce_exposed = 0;         // portion extending the critical path
  std::vector<AllReduceEvent> allreduce_events;
};

struct SimOptions {
  SyncPolicy policy = SyncPolicy::EndOfIteration;
  double eager_overhead = -1.0;  // epsilon; < 0 means 0.02 * F_t
  bool zero_comm = false;        // ignore alpha/beta (compute-only timing)
};

/// List-scheduling simulation: each task starts at the maximum of its
/// worker's free time and its predecessors' finish times plus p2p transfer
/// costs on cross-worker edges. Task order per worker is never changed.
SimResult simulate(const Schedule& s, const CostProfile& profile,
                   const SimOptions& opts = {});

struct MemorySample {
  double time = 0;
  double bytes = 0;
};

/// Time series of live activation bytes per worker; its peak matches
/// analysis::memory_profile.
std::vector<std::vector<MemorySample>> memory_trace(const SimResult& result,
                                                    const CostProfile& profile);

}  // namespace pipesim::dessim

#endif  // PIPESIM_DESSIM_HPP
