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

#ifndef PIPESIM_ANALYSIS_HPP
#define PIPESIM_ANALYSIS_HPP

#include <string>
#include <vector>

#include "pipesim/core.hpp"
#include "pipesim/rational.hpp"

namespace pipesim::analysis {

struct MemoryProfile {
  std::vector<int> weight_counts;     // stage replicas (or stashed versions) per worker
  std::vector<int> act_counts;        // peak live micro-batch activations per worker
  std::vector<double> weight_bytes;   // weight_counts * M_theta (+ stage-0 surcharge)
  std::vector<double> act_bytes;      // act_counts * B * M_a (or M_a_ckpt)
  int peak_worker = 0;
  double peak_bytes = 0;
};

/// Empty iff every ordering invariant holds under the per-worker total
/// orders: unique forward/backward per (pipeline, micro, stage), no orphan
/// backwards, stage-monotone same-worker orders, and an acyclic global
/// dependency relation.
std::vector<std::string> validate_dependencies(const Schedule& s);

/// Idle fraction of the pipeline span, measured per worker against the whole
/// iteration span under compute-only retiming at exact integer ticks.
/// Under balanced stages every worker yields the same value; worker 0's is
/// returned. Throws UntimedScheduleError on a schedule without timing.
Rational bubble_ratio(const Schedule& s, const CostProfile& profile);

/// Per-worker ratios (for the all-workers-agree property).
std::vector<Rational> bubble_ratio_per_worker(const Schedule& s, const CostProfile& profile);

/// Worst per-worker idle inside the middle third of the span; the
/// steady-state measure for schemes without pipeline flushes.
double steady_state_idle(const Schedule& s, const CostProfile& profile);

MemoryProfile memory_profile(const Schedule& s, const CostProfile& profile);

/// True iff peak per-worker memory (weights + B-scaled activations, plus the
/// optional stage-0 surcharge) fits in mem_capacity.
bool fits_memory(const PipelineConfig& config, const CostProfile& profile);

}  // namespace pipesim::analysis

#endif  // PIPESIM_ANALYSIS_HPP
