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

#include "pipesim/schedgen.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "listsched.hpp"

namespace pipesim::schedgen {

namespace {

void require_valid_shape(const PipelineConfig& config) {
  const auto v = validate_config_shape(config);
  if (v.empty()) return;
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "; " : "") << v[i];
  throw InvalidConfigError(os.str());
}

}  // namespace

SlotGrid gen_1f1b_pipeline(int D, int n_micro, Direction direction, int pipeline_id,
                           int origin_worker, const OneFOneBOptions& opts) {
  if (D < 1 || n_micro < 1) throw InvalidConfigError("1F1B pipeline needs D >= 1, n >= 1");
  if (origin_worker < 0 || origin_worker >= D)
    throw InvalidConfigError("origin worker out of range");
  SlotGrid grid(D);
  const bool packed = opts.packed_stage0 && D >= 2;
  for (int m = 0; m < n_micro; ++m) {
    const int micro = opts.micro_offset + m;
    for (int s = 0; s < D; ++s) {
      const int worker = direction == Direction::Down
                             ? (origin_worker + s) % D
                             : (origin_worker + D - 1 - s) % D;
      const int fslot = (s == 0 && packed) ? m : s + 2 * m;
      const int bslot = 2 * D - 1 - s + 2 * m;
      Task fwd{TaskKind::Forward, pipeline_id, micro, s, worker, opts.replica_group};
      Task bwd{TaskKind::Backward, pipeline_id, micro, s, worker, opts.replica_group};
      grid.place(worker, opts.slot_offset + fslot, fwd);
      grid.place(worker, opts.slot_offset + bslot, bwd);
    }
  }
  return grid;
}

SlotGrid merge_grids(const std::vector<SlotGrid>& grids) {
  int workers = 0;
  for (const auto& g : grids) workers = std::max(workers, g.workers);
  SlotGrid merged(workers);
  for (const auto& g : grids)
    for (int w = 0; w < g.workers; ++w)
      for (const auto& [slot, task] : g.cells[w]) merged.place(w, slot, task);
  return merged;
}

std::vector<std::vector<Task>> linearize(const SlotGrid& grid) {
  std::vector<std::vector<Task>> orders(grid.workers);
  for (int w = 0; w < grid.workers; ++w) {
    orders[w].reserve(grid.cells[w].size());
    for (const auto& [slot, task] : grid.cells[w]) orders[w].push_back(task);
  }
  return orders;
}

// --- Chimera -----------------------------------------------------------------

namespace {

// Unit layout for scaling: each unit is one iteration-worth of micro-batches.
// Under forward doubling / backward halving units are built over "virtual"
// micro-batches that expand to fused pairs of real ones.
struct UnitPlan {
  std::vector<int> unit_sizes;              // virtual micros per unit
  std::vector<std::vector<int>> expansion;  // virtual id -> 1 or 2 real ids
};

UnitPlan plan_units(const PipelineConfig& c) {
  UnitPlan plan;
  const bool fused = c.scaling != ScalingStrategy::Direct && c.N > c.D;
  if (fused) {
    const int K = c.N / c.D;  // divisibility checked by the caller
    if (K < 2)
      throw InvalidConfigError("forward-doubling/backward-halving require N >= 2D");
    const int paired_units = K / 2;
    const bool residual = (K % 2) != 0;
    int real_base = 0;
    for (int u = 0; u < paired_units; ++u) {
      plan.unit_sizes.push_back(c.D);
      const int down_v = c.D / 2;
      for (int j = 0; j < c.D; ++j) {
        const int region = j < down_v ? 0 : 1;  // down reals first, then up
        const int jj = region == 0 ? j : j - down_v;
        const int base = real_base + region * c.D;
        plan.expansion.push_back({base + 2 * jj, base + 2 * jj + 1});
      }
      real_base += 2 * c.D;
    }
    if (residual) {
      plan.unit_sizes.push_back(c.D);
      for (int j = 0; j < c.D; ++j) plan.expansion.push_back({real_base + j});
      real_base += c.D;
    }
  } else {
    int remaining = c.N;
    int real_base = 0;
    while (remaining > 0) {
      const int size = std::min(remaining, c.D);
      plan.unit_sizes.push_back(size);
      for (int j = 0; j < size; ++j) plan.expansion.push_back({real_base + j});
      real_base += size;
      remaining -= size;
    }
  }
  return plan;
}

std::vector<std::vector<Task>> expand_orders(const std::vector<std::vector<Task>>& orders,
                                             const UnitPlan& plan) {
  std::vector<std::vector<Task>> out(orders.size());
  for (std::size_t w = 0; w < orders.size(); ++w) {
    for (const Task& t : orders[w]) {
      for (int real : plan.expansion[t.micro_batch]) {
        Task r = t;
        r.micro_batch = real;
        out[w].push_back(r);
      }
    }
  }
  return out;
}

// Re-times the per-worker orders allowing forwards to slide into bubbles
// left by pending backwards (warmup of the next unit filling the previous
// unit's drain), then rebuilds the orders from the achieved start times.
std::vector<std::vector<Task>> settle_orders(const PipelineConfig& config,
                                             const CostProfile& profile,
                                             std::vector<std::vector<Task>> orders) {
  Schedule tmp{config, std::move(orders), std::nullopt};
  const auto td = detail::tick_durations(profile, detail::halved_backward(config));
  detail::SimParams params;
  params.f_dur = static_cast<double>(td.f_ticks);
  params.b_dur = static_cast<double>(td.b_ticks);
  params.relaxed = true;
  const auto times = detail::list_schedule(tmp, params);

  std::vector<std::vector<Task>> settled(tmp.per_worker.size());
  for (std::size_t w = 0; w < tmp.per_worker.size(); ++w) {
    std::vector<int> idx(tmp.per_worker[w].size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      return times.spans[w][a].start < times.spans[w][b].start;
    });
    settled[w].reserve(idx.size());
    for (int i : idx) settled[w].push_back(tmp.per_worker[w][i]);
  }
  return settled;
}

}  // namespace

Schedule gen_chimera(const PipelineConfig& config, const CostProfile& profile) {
  require_valid_shape(config);
  if (config.scheme != Scheme::Chimera)
    throw InvalidConfigError("gen_chimera called with a non-chimera scheme");

  PipelineConfig cfg = config;
  if (cfg.scaling == ScalingStrategy::ForwardDoubling && cfg.N > cfg.D)
    cfg.recompute = true;

  const UnitPlan plan = plan_units(cfg);
  std::vector<SlotGrid> grids;
  int slot_offset = 0;
  int virt_base = 0;
  for (std::size_t u = 0; u < plan.unit_sizes.size(); ++u) {
    const int size = plan.unit_sizes[u];
    const int down_total = (size + 1) / 2;  // down pipelines take the surplus
    const int up_total = size - down_total;
    const bool packed = (u == 0);
    int cursor = virt_base;
    for (int i = 0; i < cfg.f; ++i) {
      const int count = down_total / cfg.f + (i < down_total % cfg.f ? 1 : 0);
      if (count > 0) {
        OneFOneBOptions opts;
        opts.slot_offset = slot_offset;
        opts.micro_offset = cursor;
        opts.packed_stage0 = packed;
        grids.push_back(gen_1f1b_pipeline(cfg.D, count, Direction::Down, i,
                                          i * (cfg.D / cfg.f), opts));
        cursor += count;
      }
    }
    for (int i = 0; i < cfg.f; ++i) {
      const int count = up_total / cfg.f + (i < up_total % cfg.f ? 1 : 0);
      if (count > 0) {
        OneFOneBOptions opts;
        opts.slot_offset = slot_offset;
        opts.micro_offset = cursor;
        opts.packed_stage0 = packed;
        grids.push_back(gen_1f1b_pipeline(cfg.D, count, Direction::Up, cfg.f + i,
                                          i * (cfg.D / cfg.f), opts));
        cursor += count;
      }
    }
    slot_offset += 2 * size;
    virt_base += size;
  }

  const SlotGrid merged = merge_grids(grids);
  auto orders = expand_orders(linearize(merged), plan);
  orders = settle_orders(cfg, profile, std::move(orders));
  return Schedule{cfg, std::move(orders), std::nullopt};
}

Schedule scale_direct(const Schedule& base, int K, const CostProfile& profile) {
  if (K < 1) throw InvalidConfigError("scale_direct requires K >= 1");
  if (K == 1) return base;
  PipelineConfig cfg = base.config;
  cfg.N = base.config.N * K;
  cfg.scaling = ScalingStrategy::Direct;
  return gen_chimera(cfg, profile);
}

Schedule scale_forward_doubling(const Schedule& base, int K, const CostProfile& profile) {
  if (K < 2) throw InvalidConfigError("forward doubling requires K >= 2");
  PipelineConfig cfg = base.config;
  cfg.N = base.config.N * K;
  cfg.scaling = ScalingStrategy::ForwardDoubling;
  return gen_chimera(cfg, profile);
}

Schedule scale_backward_halving(const Schedule& base, int K, const CostProfile& profile) {
  if (K < 2) throw InvalidConfigError("backward halving requires K >= 2");
  PipelineConfig cfg = base.config;
  cfg.N = base.config.N * K;
  cfg.scaling = ScalingStrategy::BackwardHalving;
  return gen_chimera(cfg, profile);
}

// --- Baselines ---------------------------------------------------------------

Schedule gen_gpipe(const PipelineConfig& config) {
  require_valid_shape(config);
  const int D = config.D, N = config.N;
  SlotGrid grid(D);
  for (int m = 0; m < N; ++m) {
    for (int s = 0; s < D; ++s) {
      grid.place(s, s + m, Task{TaskKind::Forward, 0, m, s, s, 0});
      grid.place(s, (N + D - 1) + (D - 1 - s) + m, Task{TaskKind::Backward, 0, m, s, s, 0});
    }
  }
  return Schedule{config, linearize(grid), std::nullopt};
}

namespace {

// Classic 1F1B orders: worker w admits min(N, D-w) forwards, then alternates
// one backward with one forward, then drains. Shared by DAPPLE (with the
// iteration flush) and the PipeDream family (as a window of consecutive
// single-update iterations).
std::vector<std::vector<Task>> one_f_one_b_orders(int D, int N) {
  std::vector<std::vector<Task>> orders(D);
  for (int w = 0; w < D; ++w) {
    const int warmup = std::min(N, D - w);
    int f = 0, b = 0;
    auto fwd = [&] { orders[w].push_back({TaskKind::Forward, 0, f++, w, w, 0}); };
    auto bwd = [&] { orders[w].push_back({TaskKind::Backward, 0, b++, w, w, 0}); };
    while (f < warmup) fwd();
    while (f < N) {
      bwd();
      fwd();
    }
    while (b < N) bwd();
  }
  return orders;
}

}  // namespace

Schedule gen_dapple(const PipelineConfig& config) {
  require_valid_shape(config);
  return Schedule{config, one_f_one_b_orders(config.D, config.N), std::nullopt};
}

Schedule gen_pipedream(const PipelineConfig& config) {
  require_valid_shape(config);
  return Schedule{config, one_f_one_b_orders(config.D, config.N), std::nullopt};
}

Schedule gen_pipedream_2bw(const PipelineConfig& config) {
  require_valid_shape(config);
  return Schedule{config, one_f_one_b_orders(config.D, config.N), std::nullopt};
}

Schedule gen_gems(const PipelineConfig& config) {
  require_valid_shape(config);
  const int D = config.D, N = config.N;
  std::vector<std::vector<Task>> orders(D);
  // Micro-batches alternate between the two model replicas; replica 1 maps
  // stage s to worker D-1-s. A worker releases one activation before taking
  // the next, so at most one micro-batch is live per worker.
  for (int p = 0; 2 * p < N; ++p) {
    const int a = 2 * p;
    const int b = 2 * p + 1;
    for (int w = 0; w < D; ++w) {
      orders[w].push_back({TaskKind::Forward, 0, a, w, w, 0});
      orders[w].push_back({TaskKind::Backward, 0, a, w, w, 0});
      if (b < N) {
        const int stage = D - 1 - w;
        orders[w].push_back({TaskKind::Forward, 1, b, stage, w, 0});
        orders[w].push_back({TaskKind::Backward, 1, b, stage, w, 0});
      }
    }
  }
  return Schedule{config, std::move(orders), std::nullopt};
}

Schedule generate(const PipelineConfig& config, const CostProfile& profile) {
  switch (config.scheme) {
    case Scheme::GPipe: return gen_gpipe(config);
    case Scheme::Dapple: return gen_dapple(config);
    case Scheme::Gems: return gen_gems(config);
    case Scheme::PipeDream: return gen_pipedream(config);
    case Scheme::PipeDream2BW: return gen_pipedream_2bw(config);
    case Scheme::Chimera: return gen_chimera(config, profile);
  }
  throw InvalidConfigError("unknown scheme");
}

}  // namespace pipesim::schedgen
