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

#include <set>

#include "pipesim/analysis.hpp"
#include "pipesim/schedgen.hpp"
#include "support.hpp"

using namespace pipesim;
using namespace pipesim::schedgen;
namespace ts = pipesim::testsupport;

namespace {

// Compact signature of one worker's order: F/B + pipeline + micro.
std::string order_sig(const std::vector<Task>& tasks) {
  std::string sig;
  for (const Task& t : tasks) {
    sig += t.kind == TaskKind::Backward ? 'B' : 'F';
    sig += 'p' + std::string(1, static_cast<char>('0' + t.pipeline_id));
    sig += std::to_string(t.micro_batch);
    sig += ' ';
  }
  if (!sig.empty()) sig.pop_back();
  return sig;
}

int slot_of(const SlotGrid& g, int worker, TaskKind kind, int micro) {
  for (const auto& [slot, task] : g.cells[worker])
    if (task.kind == kind && task.micro_batch == micro) return slot;
  return -1;
}

}  // namespace

TEST_CASE("1F1B down pipeline grid, four stages and two micro-batches") {
  const SlotGrid g = gen_1f1b_pipeline(4, 2, Direction::Down, 0, 0);
  // worker: {F0, F1, B0, B1} slots
  const int expected[4][4] = {{0, 1, 7, 9}, {1, 3, 6, 8}, {2, 4, 5, 7}, {3, 5, 4, 6}};
  for (int w = 0; w < 4; ++w) {
    CHECK(slot_of(g, w, TaskKind::Forward, 0) == expected[w][0]);
    CHECK(slot_of(g, w, TaskKind::Forward, 1) == expected[w][1]);
    CHECK(slot_of(g, w, TaskKind::Backward, 0) == expected[w][2]);
    CHECK(slot_of(g, w, TaskKind::Backward, 1) == expected[w][3]);
  }
  // Stage-to-worker mapping ascends from the origin.
  for (const auto& [slot, task] : g.cells[2]) CHECK(task.stage == 2);
}

TEST_CASE("single-stage pipeline packs with zero idle slots") {
  const SlotGrid g = gen_1f1b_pipeline(1, 3, Direction::Down, 0, 0);
  REQUIRE(g.cells[0].size() == 6);
  int expect = 0;
  for (const auto& [slot, task] : g.cells[0]) {
    CHECK(slot == expect);
    CHECK(task.kind == (expect % 2 ? TaskKind::Backward : TaskKind::Forward));
    CHECK(task.micro_batch == expect / 2);
    ++expect;
  }
}

TEST_CASE("up pipeline mirrors the down pipeline with reversed stage order") {
  const SlotGrid down = gen_1f1b_pipeline(4, 2, Direction::Down, 0, 0);
  const SlotGrid up = gen_1f1b_pipeline(4, 2, Direction::Up, 1, 0);
  for (int w = 0; w < 4; ++w) {
    REQUIRE(up.cells[3 - w].size() == down.cells[w].size());
    auto uit = up.cells[3 - w].begin();
    for (const auto& [slot, task] : down.cells[w]) {
      CHECK(uit->first == slot);
      CHECK(uit->second.kind == task.kind);
      CHECK(uit->second.stage == task.stage);
      ++uit;
    }
  }
}

TEST_CASE("merging with an empty grid is the identity") {
  const SlotGrid g = gen_1f1b_pipeline(4, 2, Direction::Down, 0, 0);
  const SlotGrid merged = merge_grids({g, SlotGrid(4)});
  CHECK(linearize(merged) == linearize(g));
}

TEST_CASE("merging a grid with itself raises a conflict") {
  const SlotGrid g = gen_1f1b_pipeline(4, 2, Direction::Down, 0, 0);
  CHECK_THROWS_AS(merge_grids({g, g}), ScheduleConflictError);
}

TEST_CASE("down and up pipelines merge without conflict into the full grid") {
  OneFOneBOptions up_opts;
  up_opts.micro_offset = 2;
  const SlotGrid down = gen_1f1b_pipeline(4, 2, Direction::Down, 0, 0);
  const SlotGrid up = gen_1f1b_pipeline(4, 2, Direction::Up, 1, 0, up_opts);
  const SlotGrid merged = merge_grids({down, up});
  // Interior workers are dense; edge workers keep one forward-side and one
  // backward-side bubble.
  CHECK(merged.cells[0].size() == 8);
  CHECK(merged.cells[1].size() == 8);
  const auto orders = linearize(merged);
  CHECK(order_sig(orders[0]) == "Fp00 Fp01 Fp12 Bp12 Fp13 Bp13 Bp00 Bp01");
  CHECK(order_sig(orders[1]) == "Fp00 Fp12 Fp01 Fp13 Bp12 Bp00 Bp13 Bp01");
  CHECK(order_sig(orders[2]) == "Fp12 Fp00 Fp13 Fp01 Bp00 Bp12 Bp01 Bp13");
  CHECK(order_sig(orders[3]) == "Fp12 Fp13 Fp00 Bp00 Fp01 Bp01 Bp12 Bp13");
}

TEST_CASE("bidirectional generator reproduces the merged grid orders") {
  const Schedule s = schedgen::gen_chimera(ts::chimera(4, 4), CostProfile{});
  CHECK(order_sig(s.per_worker[0]) == "Fp00 Fp01 Fp12 Bp12 Fp13 Bp13 Bp00 Bp01");
  CHECK(order_sig(s.per_worker[1]) == "Fp00 Fp12 Fp01 Fp13 Bp12 Bp00 Bp13 Bp01");
  CHECK(order_sig(s.per_worker[2]) == "Fp12 Fp00 Fp13 Fp01 Bp00 Bp12 Bp01 Bp13");
  CHECK(order_sig(s.per_worker[3]) == "Fp12 Fp13 Fp00 Bp00 Fp01 Bp01 Bp12 Bp13");
  CHECK(analysis::validate_dependencies(s).empty());
}

TEST_CASE("two-stage bidirectional schedule has no idle slots") {
  const auto ratio = ts::measured_bubble(ts::chimera(2, 2));
  CHECK(ratio == Rational(0));
}

TEST_CASE("four pipelines over eight stages: worker 0 order") {
  const Schedule s = schedgen::gen_chimera(ts::chimera(8, 8, /*f=*/2), CostProfile{});
  REQUIRE(s.per_worker.size() == 8);
  CHECK(order_sig(s.per_worker[0]) ==
        "Fp00 Fp01 Fp36 Fp12 Fp37 Fp13 Fp24 Bp24 Fp25 Bp25 Bp12 Bp36 Bp13 Bp37 "
        "Bp00 Bp01");
  CHECK(analysis::validate_dependencies(s).empty());
  // Two idle slots per worker in the uniform grid: D/f - 2 = 2.
}

TEST_CASE("micro-batches split as evenly as possible, surplus to down pipelines") {
  for (int N : {1, 3, 5, 7}) {
    const Schedule s = schedgen::gen_chimera(ts::chimera(4, N), CostProfile{});
    std::set<int> down_micros, up_micros;
    for (const auto& w : s.per_worker)
      for (const Task& t : w)
        (t.pipeline_id == 0 ? down_micros : up_micros).insert(t.micro_batch);
    CHECK(static_cast<int>(down_micros.size()) == (N + 1) / 2);
    CHECK(static_cast<int>(up_micros.size()) == N / 2);
  }
}

TEST_CASE("conflict-free merge property over the lattice") {
  for (int D : {2, 4, 6, 8, 12, 16}) {
    for (int f = 1; f <= D / 2; ++f) {
      if ((D / 2) % f != 0) continue;
      for (int N : {D, 2 * D}) {
        CAPTURE(D);
        CAPTURE(f);
        CAPTURE(N);
        const Schedule s = schedgen::gen_chimera(ts::chimera(D, N, f), CostProfile{});
        CHECK(analysis::validate_dependencies(s).empty());
        CHECK(s.task_count() == static_cast<std::size_t>(2 * N * D));
      }
    }
  }
}

TEST_CASE("direct concatenation keeps unit order and interleaves units") {
  const Schedule base = schedgen::gen_chimera(ts::chimera(4, 4), CostProfile{});
  CHECK(scale_direct(base, 1, CostProfile{}) == base);

  const Schedule scaled = scale_direct(base, 2, CostProfile{});
  CHECK(scaled.config.N == 8);
  CHECK(analysis::validate_dependencies(scaled).empty());
  // Unit 0 tasks (micros 0/1 down, 4/5 up) appear in the base relative order.
  for (int w = 0; w < 4; ++w) {
    std::vector<Task> unit0;
    for (const Task& t : scaled.per_worker[w]) {
      if (t.micro_batch < 4) unit0.push_back(t);  // unit 0 owns micros 0..3
    }
    REQUIRE(unit0.size() == base.per_worker[w].size());
    for (std::size_t i = 0; i < unit0.size(); ++i) {
      CHECK(unit0[i].kind == base.per_worker[w][i].kind);
      CHECK(unit0[i].stage == base.per_worker[w][i].stage);
    }
  }
}

TEST_CASE("direct concatenation has more idle than forward doubling") {
  CostProfile p;
  const Schedule direct =
      schedgen::gen_chimera(ts::chimera(4, 8, 1, 1, 2, ScalingStrategy::Direct), p);
  const Schedule doubled =
      schedgen::gen_chimera(ts::chimera(4, 8, 1, 1, 2, ScalingStrategy::ForwardDoubling), p);
  const auto sim_direct = ts::timed(direct, p);
  const auto sim_doubled = ts::timed(doubled, p);
  double idle_direct = 0, idle_doubled = 0;
  for (double v : sim_direct.per_worker_idle) idle_direct += v;
  for (double v : sim_doubled.per_worker_idle) idle_doubled += v;
  CHECK(idle_direct > idle_doubled);
}

TEST_CASE("forward doubling fuses forward pairs and forces recomputation") {
  const Schedule s = schedgen::gen_chimera(
      ts::chimera(4, 8, 1, 1, 2, ScalingStrategy::ForwardDoubling), CostProfile{});
  CHECK(s.config.recompute);
  CHECK(analysis::validate_dependencies(s).empty());
  CHECK(s.task_count() == 2u * 8 * 4);
  // Down pipeline micros pair up even/odd: micro 1's forward directly follows
  // micro 0's on the first worker.
  const auto& w0 = s.per_worker[0];
  auto it0 = std::find_if(w0.begin(), w0.end(), [](const Task& t) {
    return t.kind == TaskKind::Forward && t.micro_batch == 0 && t.pipeline_id == 0;
  });
  REQUIRE(it0 != w0.end());
  CHECK((it0 + 1)->micro_batch == 1);
}

TEST_CASE("odd K concatenates paired units plus a residual basic unit") {
  const Schedule base = schedgen::gen_chimera(ts::chimera(4, 4), CostProfile{});
  const Schedule s = scale_forward_doubling(base, 3, CostProfile{});
  CHECK(s.config.N == 12);
  CHECK(s.task_count() == 2u * 12 * 4);
  CHECK(analysis::validate_dependencies(s).empty());
}

TEST_CASE("backward halving requires an even micro-batch size") {
  PipelineConfig c = ts::chimera(4, 8, 1, 1, 3, ScalingStrategy::BackwardHalving);
  CHECK_THROWS_AS(schedgen::generate(c, CostProfile{}), InvalidConfigError);
  c.B = 2;
  const Schedule s = schedgen::generate(c, CostProfile{});
  CHECK_FALSE(s.config.recompute);
  CHECK(analysis::validate_dependencies(s).empty());
}

TEST_CASE("scaling strategies reject K < 2") {
  const Schedule base = schedgen::gen_chimera(ts::chimera(4, 4), CostProfile{});
  CHECK_THROWS_AS(scale_forward_doubling(base, 1, CostProfile{}), InvalidConfigError);
}

TEST_CASE("gpipe injects all forwards before any backward") {
  const Schedule s = schedgen::gen_gpipe(ts::baseline(Scheme::GPipe, 4, 4));
  for (const auto& w : s.per_worker) {
    CHECK(order_sig(w).find("Bp0") > order_sig(w).rfind("Fp0"));
    CHECK(w.size() == 8);
  }
  CHECK(order_sig(s.per_worker[0]) == "Fp00 Fp01 Fp02 Fp03 Bp00 Bp01 Bp02 Bp03");
  CHECK(analysis::validate_dependencies(s).empty());
}

TEST_CASE("dapple runs one-forward-one-backward with stage-dependent warmup") {
  const Schedule s = schedgen::gen_dapple(ts::baseline(Scheme::Dapple, 4, 4));
  CHECK(order_sig(s.per_worker[0]) == "Fp00 Fp01 Fp02 Fp03 Bp00 Bp01 Bp02 Bp03");
  CHECK(order_sig(s.per_worker[1]) == "Fp00 Fp01 Fp02 Bp00 Fp03 Bp01 Bp02 Bp03");
  CHECK(order_sig(s.per_worker[2]) == "Fp00 Fp01 Bp00 Fp02 Bp01 Fp03 Bp02 Bp03");
  CHECK(order_sig(s.per_worker[3]) == "Fp00 Bp00 Fp01 Bp01 Fp02 Bp02 Fp03 Bp03");
  CHECK(analysis::validate_dependencies(s).empty());
}

TEST_CASE("gems alternates micro-batches between the two model replicas") {
  const Schedule s = schedgen::gen_gems(ts::baseline(Scheme::Gems, 4, 4));
  CHECK(order_sig(s.per_worker[0]) == "Fp00 Bp00 Fp11 Bp11 Fp02 Bp02 Fp13 Bp13");
  // Replica 1 maps stage s to worker D-1-s.
  for (const Task& t : s.per_worker[0])
    CHECK(t.stage == (t.pipeline_id == 0 ? 0 : 3));
  CHECK(analysis::validate_dependencies(s).empty());
}

TEST_CASE("pipedream steady state has no idle slots") {
  const Schedule s = schedgen::gen_pipedream(ts::baseline(Scheme::PipeDream, 4, 16));
  CHECK(analysis::steady_state_idle(s, CostProfile{}) == 0.0);
  const Schedule s2 =
      schedgen::gen_pipedream_2bw(ts::baseline(Scheme::PipeDream2BW, 4, 16));
  CHECK(analysis::steady_state_idle(s2, CostProfile{}) == 0.0);
}

TEST_CASE("warmup depth bounds in-flight activations") {
  // All generated schedules satisfy the scheme's injection bound.
  const auto gp = analysis::memory_profile(
      schedgen::gen_gpipe(ts::baseline(Scheme::GPipe, 4, 8)), CostProfile{});
  for (int c : gp.act_counts) CHECK(c == 8);
  const auto da = analysis::memory_profile(
      schedgen::gen_dapple(ts::baseline(Scheme::Dapple, 4, 8)), CostProfile{});
  for (int c : da.act_counts) CHECK(c <= 4);
  const auto ch =
      analysis::memory_profile(schedgen::gen_chimera(ts::chimera(4, 4), CostProfile{}),
                               CostProfile{});
  for (int c : ch.act_counts) CHECK(c <= 4);
}
