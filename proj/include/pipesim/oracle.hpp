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

#ifndef PIPESIM_ORACLE_HPP
#define PIPESIM_ORACLE_HPP

#include <cstdint>
#include <vector>

#include "pipesim/core.hpp"

namespace pipesim::oracle {

/// Stage-partitioned toy network: D dense layers with tanh, squared-error
/// loss. Small enough to finite-difference every weight.
struct ToyModel {
  std::vector<int> dims;                           // D+1 entries
  std::vector<std::vector<double>> weights;        // stage -> row-major out x in
  std::vector<std::vector<double>> biases;         // stage -> out

  int stages() const { return static_cast<int>(weights.size()); }
  int in_dim() const { return dims.front(); }
  int out_dim() const { return dims.back(); }
};

struct Batch {
  int size = 0;
  std::vector<double> inputs;   // size x in_dim, row-major
  std::vector<double> targets;  // size x out_dim
};

ToyModel make_model(const std::vector<int>& dims, std::uint64_t seed);
Batch make_batch(const ToyModel& model, int size, std::uint64_t seed);

struct MissingActivationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VersionMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Plain mini-batch SGD on the whole batch: one forward/backward per sample,
/// average gradient, single update. The reference all schedules are held to.
ToyModel sequential_sgd(const ToyModel& model, const Batch& batch, double lr);

/// Replays the schedule in simulated-time order: forwards stash activations
/// under version-stamped weights, backwards consume the stash and accumulate
/// compensated gradient sums, allreduce averages across all stage replicas.
/// Synchronous schemes update at iteration end; PipeDream updates after each
/// micro-batch, PipeDream-2BW commits per accumulation window with forwards
/// reading the previously committed version.
ToyModel run_iteration(const Schedule& s, const ToyModel& model, const Batch& batch,
                       double lr);

struct IterationTrace {
  ToyModel model;
  std::vector<int> peak_stash_per_worker;  // live activation count maxima
};

IterationTrace run_iteration_traced(const Schedule& s, const ToyModel& model,
                                    const Batch& batch, double lr);

/// Central finite differences on every weight against the analytic gradient;
/// returns the maximum relative error.
double check_gradients(const ToyModel& model, const Batch& batch,
                       double step = 1e-5);

/// Max relative difference between two models' weights.
double max_relative_diff(const ToyModel& a, const ToyModel& b);

}  // namespace pipesim::oracle

#endif  // PIPESIM_ORACLE_HPP
