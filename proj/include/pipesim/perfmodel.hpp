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

#ifndef PIPESIM_PERFMODEL_HPP
#define PIPESIM_PERFMODEL_HPP

#include <vector>

#include "pipesim/core.hpp"

namespace pipesim::perfmodel {

struct CriticalPath {
  int C_f = 0;
  int C_b = 0;
  std::vector<Task> path;  // dependency-connected, start to finish
};

struct StageSlack {
  int stage = 0;
  double slack = 0;  // idle between this stage's gradient completion and the
                     // worker's last compute, usable to hide its allreduce
};

struct FreeRegions {
  std::vector<std::vector<StageSlack>> per_worker;
};

struct PlanEntry {
  int W = 0;
  int D = 0;
  int B = 0;
  int N = 0;
  ScalingStrategy scaling = ScalingStrategy::Direct;
  bool recompute = false;
  double T_predicted = 0;
};

/// alpha + beta * payload.
double p2p_cost(double payload_bytes, const CostProfile& profile);

/// Rabenseifner allreduce: 2*log2(r)*alpha + 2*(r-1)*beta*L/r; 0 for r <= 1.
/// Evaluated with a real-valued log2 when r is not a power of two.
double allreduce_cost(double L_bytes, int replicas, const CostProfile& profile);

bool is_power_of_two(int n);

/// Processes holding one stage replica: W per pipeline copy, doubled for the
/// two GEMS model replicas and multiplied by 2f for bidirectional pipelines.
int replicas_per_stage(const PipelineConfig& config);

/// Longest weighted chain through the schedule (forward weight F_t, backward
/// weight B_t), following both data edges and same-worker sequencing.
CriticalPath critical_path(const Schedule& s, const CostProfile& profile);

/// Per worker and held stage replica: idle time between that stage's last
/// backward and the worker's final compute. Throws UntimedScheduleError.
FreeRegions free_regions(const Schedule& s, const CostProfile& profile);

/// Iteration-time model: T = (F_t + p2p)*C_f + (B_t + p2p)*C_b +
/// max over workers of the allreduce portion not hidden by free regions.
double predict_T(const PipelineConfig& config, const CostProfile& profile);

/// Enumerates W*D = P factorizations, greedily picks the largest
/// power-of-two micro-batch size that fits in memory, and ranks candidate
/// configurations by predicted iteration time (ties: smaller D, then W).
/// Throws NoFeasibleConfigError when nothing fits even with recomputation.
std::vector<PlanEntry> plan(int P, long long B_hat, const CostProfile& profile,
                            Scheme scheme);

}  // namespace pipesim::perfmodel

#endif  // PIPESIM_PERFMODEL_HPP
