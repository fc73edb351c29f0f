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

#ifndef PIPESIM_SCHEDGEN_HPP
#define PIPESIM_SCHEDGEN_HPP

#include <map>
#include <vector>

#include "pipesim/core.hpp"

namespace pipesim::schedgen {

/// Uniform-slot grid: one forward or backward occupies one slot. This is the
/// structure in which the bidirectional merge is conflict-free.
struct SlotGrid {
  int workers = 0;
  std::vector<std::map<int, Task>> cells;  // worker -> slot -> task

  explicit SlotGrid(int w = 0) : workers(w), cells(w) {}

  void place(int worker, int slot, const Task& task) {
    if (!cells[worker].emplace(slot, task).second)
      throw ScheduleConflictError(worker, slot);
  }

  bool empty() const {
    for (const auto& w : cells)
      if (!w.empty()) return false;
    return true;
  }
};

enum class Direction { Down, Up };

struct OneFOneBOptions {
  int slot_offset = 0;    // shift the whole grid right (unit concatenation)
  int micro_offset = 0;   // first micro-batch id
  bool packed_stage0 = true;  // stage-0 forwards at consecutive slots
  int replica_group = 0;
};

/// One 1F1B pipeline as a slot grid. Down maps stage s to worker
/// (origin+s) mod D, Up to (origin+D-1-s) mod D. Stage-0 forwards sit at
/// consecutive slots when packed; every other stage runs at half rate
/// (slot s+2m), which is what leaves room for the opposite direction.
SlotGrid gen_1f1b_pipeline(int D, int n_micro, Direction direction, int pipeline_id,
                           int origin_worker, const OneFOneBOptions& opts = {});

/// Union of grids; throws ScheduleConflictError if two tasks claim one cell.
SlotGrid merge_grids(const std::vector<SlotGrid>& grids);

/// Per-worker task orders by ascending slot index.
std::vector<std::vector<Task>> linearize(const SlotGrid& grid);

Schedule gen_gpipe(const PipelineConfig& config);
Schedule gen_dapple(const PipelineConfig& config);
Schedule gen_gems(const PipelineConfig& config);
Schedule gen_pipedream(const PipelineConfig& config);
Schedule gen_pipedream_2bw(const PipelineConfig& config);

/// Bidirectional pipelines: 2f 1F1B grids merged, micro-batches split as
/// evenly as possible (down pipelines take the surplus), N > D handled by
/// the configured scaling strategy. Timing is left unassigned.
Schedule gen_chimera(const PipelineConfig& config, const CostProfile& profile);

/// Concatenation of K basic units (unit = one iteration worth of D
/// micro-batches); trailing bubbles of a unit host the next unit's warmup.
Schedule scale_direct(const Schedule& base, int K, const CostProfile& profile);

/// N > D with equalized forward/backward chunks: forwards run in fused pairs
/// of two micro-batches, backwards stay per micro-batch. Forces recomputation.
Schedule scale_forward_doubling(const Schedule& base, int K, const CostProfile& profile);

/// Same task pattern as forward doubling, but backward tasks carry half-size
/// micro-batches instead of forwards carrying two. No recomputation.
Schedule scale_backward_halving(const Schedule& base, int K, const CostProfile& profile);

/// Dispatch on config.scheme.
Schedule generate(const PipelineConfig& config, const CostProfile& profile);

}  // namespace pipesim::schedgen

#endif  // PIPESIM_SCHEDGEN_HPP
