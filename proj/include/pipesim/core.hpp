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

#ifndef PIPESIM_CORE_HPP
#define PIPESIM_CORE_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pipesim/rational.hpp"

namespace pipesim {

enum class Scheme { GPipe, Dapple, Gems, PipeDream, PipeDream2BW, Chimera };

enum class ScalingStrategy { Direct, ForwardDoubling, BackwardHalving };

enum class TaskKind {
  Forward,
  Backward,
  Recompute,
  P2PSend,
  P2PRecv,
  AllReduceStart,
  AllReduceWait
};

std::string to_string(Scheme s);
std::string to_string(ScalingStrategy s);
std::string to_string(TaskKind k);
std::optional<Scheme> scheme_from_string(const std::string& s);
std::optional<ScalingStrategy> scaling_from_string(const std::string& s);
std::optional<TaskKind> task_kind_from_string(const std::string& s);

/// One plan: scheme, pipeline depth D, data-parallel width W, micro-batches
/// per worker per iteration N, micro-batch size B, bidirectional pipeline
/// count f (Chimera), and the strategy used when N exceeds D.
struct PipelineConfig {
  Scheme scheme = Scheme::Chimera;
  int D = 1;
  int W = 1;
  int N = 1;
  int B = 1;
  int f = 1;
  ScalingStrategy scaling = ScalingStrategy::Direct;
  bool recompute = false;

  int workers() const { return W * D; }          // P = W * D
  long long mini_batch() const {                 // B-hat = B * N * W
    return static_cast<long long>(B) * N * W;
  }

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// One unit of scheduled work. Workers are indexed within a single pipeline
/// replica (0..D-1); all W replicas execute the same schedule, so generators
/// emit replica_group 0 and the data-parallel dimension stays implicit.
struct Task {
  TaskKind kind = TaskKind::Forward;
  int pipeline_id = 0;
  int micro_batch = 0;
  int stage = 0;
  int worker = 0;
  int replica_group = 0;

  friend bool operator==(const Task&, const Task&) = default;
};

struct TimeSpan {
  double start = 0;
  double end = 0;
  friend bool operator==(const TimeSpan&, const TimeSpan&) = default;
};

/// Per-worker totally ordered task lists, optionally with assigned times.
/// `timing`, when present, is aligned index-for-index with `per_worker`.
struct Schedule {
  PipelineConfig config;
  std::vector<std::vector<Task>> per_worker;
  std::optional<std::vector<std::vector<TimeSpan>>> timing;

  bool timed() const { return timing.has_value(); }
  std::size_t task_count() const {
    std::size_t n = 0;
    for (const auto& w : per_worker) n += w.size();
    return n;
  }

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

/// Measured or assumed cost scalars. Times are in abstract units where one
/// forward pass of one micro-batch on one stage takes F_t units.
struct CostProfile {
  double F_t = 1.0;
  double backward_ratio = 2.0;  // 2 plain, 3 with activation recomputation
  double alpha = 0.0;           // p2p latency
  double beta = 0.0;            // p2p transfer time per byte
  double L_grad = 1.0;          // per-stage gradient bytes
  double L_act = 1.0;           // per-boundary activation bytes per micro-batch
  double M_theta = 1.0;         // weight bytes of one stage
  double M_a = 1.0;             // activation bytes of one micro-batch (per sample unit B)
  double M_a_ckpt = 1.0;        // activation footprint under recomputation
  double mem_capacity = 1e30;   // bytes per worker
  bool embed_surcharge = false; // extra M_theta on workers holding stage 0

  double B_t() const { return backward_ratio * F_t; }

  friend bool operator==(const CostProfile&, const CostProfile&) = default;
};

struct AnalysisReport {
  Rational bubble_ratio;
  std::vector<double> weight_mem;
  std::vector<double> act_mem;
  double peak_mem = 0;
  int C_f = 0;
  int C_b = 0;
  double T_predicted = 0;
  double T_simulated = 0;
};

// ---------------------------------------------------------------------------
// Errors. Violations of user-facing constraints are returned as data by
// validate_config; these exceptions signal misuse or internal bugs.

struct InvalidConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScheduleConflictError : std::runtime_error {
  int worker;
  int slot;
  ScheduleConflictError(int w, int s)
      : std::runtime_error("slot conflict at worker " + std::to_string(w) + ", slot " +
                           std::to_string(s)),
        worker(w),
        slot(s) {}
};

struct CyclicDependencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UntimedScheduleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoFeasibleConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Checks the configuration invariants plus the memory predicate.
/// Returns human-readable violations; empty means valid.
std::vector<std::string> validate_config(const PipelineConfig& config,
                                         const CostProfile& profile);

/// Configuration invariants only (no memory check); used by generators.
std::vector<std::string> validate_config_shape(const PipelineConfig& config);

// ---------------------------------------------------------------------------
// JSON serialization. Field names follow the structs exactly; output key
// order is fixed so serialized artifacts are byte-stable.

std::string to_json(const PipelineConfig& c, int indent = -1);
std::string to_json(const Task& t, int indent = -1);
std::string to_json(const Schedule& s, int indent = -1);
std::string to_json(const CostProfile& p, int indent = -1);
std::string to_json(const AnalysisReport& r, int indent = -1);

PipelineConfig config_from_json(const std::string& text);
Task task_from_json(const std::string& text);
Schedule schedule_from_json(const std::string& text);
CostProfile profile_from_json(const std::string& text);
AnalysisReport report_from_json(const std::string& text);

}  // namespace pipesim

#endif  // PIPESIM_CORE_HPP
