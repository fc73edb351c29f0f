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

#include <doctest.h>

#include <cmath>

#include "pipesim/analysis.hpp"
#include "pipesim/oracle.hpp"
#include "pipesim/schedgen.hpp"
#include "support.hpp"

using namespace pipesim;
using namespace pipesim::oracle;
namespace ts = pipesim::testsupport;

namespace {

ToyModel model_for(int D, std::uint64_t seed = 0) {
  std::vector<int> dims{4};
  for (int s = 1; s < D; ++s) dims.push_back(3 + (s % 3));
  dims.push_back(3);
  return make_model(dims, seed);
}

double run_vs_sequential(const PipelineConfig& config, int iterations,
                         std::uint64_t seed = 0, double lr = 0.05) {
  const Schedule sched = schedgen::generate(config, CostProfile{});
  ToyModel piped = model_for(config.D, seed);
  ToyModel ref = piped;
  double worst = 0;
  for (int it = 0; it < iterations; ++it) {
    const Batch batch =
        make_batch(piped, static_cast<int>(config.mini_batch()), seed + 1000 * it);
    piped = run_iteration(sched, piped, batch, lr);
    ref = sequential_sgd(ref, batch, lr);
    worst = std::max(worst, max_relative_diff(piped, ref));
  }
  return worst;
}

}  // namespace

TEST_CASE("finite differences confirm the analytic gradients") {
  for (std::uint64_t seed : {0ull, 1ull, 7ull}) {
    const ToyModel m = model_for(4, seed);
    const Batch b = make_batch(m, 6, seed);
    CHECK(check_gradients(m, b) <= 1e-5);
  }
}

TEST_CASE("zero input and zero weights give zero gradient") {
  ToyModel m = model_for(2, 0);
  for (auto& w : m.weights) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : m.biases) std::fill(b.begin(), b.end(), 0.0);
  Batch batch = make_batch(m, 4, 0);
  std::fill(batch.inputs.begin(), batch.inputs.end(), 0.0);
  std::fill(batch.targets.begin(), batch.targets.end(), 0.0);
  const ToyModel updated = sequential_sgd(m, batch, 0.1);
  CHECK(max_relative_diff(m, updated) == 0.0);
  CHECK(check_gradients(m, batch) <= 1e-12);
}

TEST_CASE("single-stage gradient matches the closed form") {
  ToyModel m = make_model({2, 1}, 3);
  Batch b;
  b.size = 1;
  b.inputs = {0.3, -0.4};
  b.targets = {0.25};
  // y = tanh(w.x + b); dL/dw_i = (y - t) (1 - y^2) x_i
  double z = m.biases[0][0] + m.weights[0][0] * 0.3 + m.weights[0][1] * -0.4;
  const double y = std::tanh(z);
  const double gz = (y - 0.25) * (1 - y * y);
  const ToyModel updated = sequential_sgd(m, b, 1.0);
  CHECK(updated.weights[0][0] == doctest::Approx(m.weights[0][0] - gz * 0.3).epsilon(1e-12));
  CHECK(updated.weights[0][1] == doctest::Approx(m.weights[0][1] - gz * -0.4).epsilon(1e-12));
  CHECK(updated.biases[0][0] == doctest::Approx(m.biases[0][0] - gz).epsilon(1e-12));
}

TEST_CASE("synchronous schedules reproduce mini-batch SGD") {
  CHECK(run_vs_sequential(ts::chimera(4, 4, 1, 2), 3) <= 1e-6);
  CHECK(run_vs_sequential(ts::baseline(Scheme::GPipe, 4, 4, 2), 3) <= 1e-6);
  CHECK(run_vs_sequential(ts::baseline(Scheme::Dapple, 4, 4, 2), 3) <= 1e-6);
  CHECK(run_vs_sequential(ts::baseline(Scheme::Gems, 4, 4, 2), 3) <= 1e-6);
}

TEST_CASE("scaling strategies leave the mathematics unchanged") {
  CHECK(run_vs_sequential(ts::chimera(4, 8, 1, 2, 2, ScalingStrategy::Direct), 3) <= 1e-6);
  CHECK(run_vs_sequential(ts::chimera(4, 8, 1, 2, 2, ScalingStrategy::ForwardDoubling), 3) <=
        1e-6);
  CHECK(run_vs_sequential(ts::chimera(4, 8, 1, 2, 2, ScalingStrategy::BackwardHalving), 3) <=
        1e-6);
}

TEST_CASE("four bidirectional pipelines stay synchronous") {
  CHECK(run_vs_sequential(ts::chimera(4, 4, 2, 2), 3) <= 1e-6);
}

TEST_CASE("pipedream diverges from the oracle through weight staleness") {
  const PipelineConfig config = ts::baseline(Scheme::PipeDream, 4, 4, 2);
  const Schedule sched = schedgen::generate(config, CostProfile{});
  ToyModel piped = model_for(4, 0);
  ToyModel ref = piped;
  double dev_after_2 = 0;
  for (int it = 0; it < 2; ++it) {
    const Batch batch = make_batch(piped, static_cast<int>(config.mini_batch()), 31 * it);
    piped = run_iteration(sched, piped, batch, 0.05);
    ref = sequential_sgd(ref, batch, 0.05);
    dev_after_2 = max_relative_diff(piped, ref);
  }
  CHECK(dev_after_2 > 1e-6);
}

TEST_CASE("dependency-valid linearizations agree to accumulation tolerance") {
  // Direct, doubled and halved schedules execute the same gradient sums in
  // different orders; compensated accumulation keeps them together.
  const int iters = 2;
  ToyModel a = model_for(4, 5), b = a, c = a;
  const Schedule sa =
      schedgen::generate(ts::chimera(4, 8, 1, 1, 2, ScalingStrategy::Direct), CostProfile{});
  const Schedule sb = schedgen::generate(
      ts::chimera(4, 8, 1, 1, 2, ScalingStrategy::ForwardDoubling), CostProfile{});
  const Schedule sc = schedgen::generate(
      ts::chimera(4, 8, 1, 1, 2, ScalingStrategy::BackwardHalving), CostProfile{});
  for (int it = 0; it < iters; ++it) {
    const Batch batch = make_batch(a, 16, 77 + it);
    a = run_iteration(sa, a, batch, 0.05);
    b = run_iteration(sb, b, batch, 0.05);
    c = run_iteration(sc, c, batch, 0.05);
  }
  CHECK(max_relative_diff(a, b) <= 1e-10);
  CHECK(max_relative_diff(a, c) <= 1e-10);
}

TEST_CASE("activation stash peaks match the static memory analysis") {
  for (const auto& config : {ts::chimera(4, 4), ts::baseline(Scheme::GPipe, 4, 4),
                             ts::baseline(Scheme::Dapple, 4, 4)}) {
    const Schedule sched = schedgen::generate(config, CostProfile{});
    const ToyModel m = model_for(config.D, 2);
    const Batch batch = make_batch(m, static_cast<int>(config.mini_batch()), 9);
    const IterationTrace trace = run_iteration_traced(sched, m, batch, 0.01);
    const auto mem = analysis::memory_profile(sched, CostProfile{});
    CHECK(trace.peak_stash_per_worker == mem.act_counts);
  }
}

TEST_CASE("pipedream version stash is bounded by the pipeline depth") {
  // More in-flight micro-batches than stages would need a deeper stash.
  Schedule s;
  s.config = ts::baseline(Scheme::PipeDream, 2, 3);
  s.per_worker.resize(2);
  for (int m = 0; m < 3; ++m) s.per_worker[0].push_back({TaskKind::Forward, 0, m, 0, 0, 0});
  for (int m = 0; m < 3; ++m) {
    s.per_worker[1].push_back({TaskKind::Forward, 0, m, 1, 1, 0});
    s.per_worker[1].push_back({TaskKind::Backward, 0, m, 1, 1, 0});
  }
  for (int m = 0; m < 3; ++m) s.per_worker[0].push_back({TaskKind::Backward, 0, m, 0, 0, 0});
  const ToyModel m = model_for(2, 0);
  const Batch batch = make_batch(m, 3, 0);
  CHECK_THROWS_AS(run_iteration(s, m, batch, 0.1), VersionMismatchError);
}

TEST_CASE("missing activations are reported") {
  Schedule s;
  s.config = ts::baseline(Scheme::GPipe, 2, 1);
  s.config.N = 1;
  s.per_worker.resize(2);
  // Second stage backward without its forward ever running.
  s.per_worker[1] = {{TaskKind::Backward, 0, 0, 1, 1, 0}};
  const ToyModel m = model_for(2, 0);
  const Batch batch = make_batch(m, 1, 0);
  CHECK_THROWS_AS(run_iteration(s, m, batch, 0.1), MissingActivationError);
}
