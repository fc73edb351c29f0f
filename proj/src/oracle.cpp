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

#include "pipesim/oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>

#include "listsched.hpp"

namespace pipesim::oracle {

namespace {

using Vec = std::vector<double>;

// Compensated accumulation keeps gradient sums independent of the order in
// which schedules interleave micro-batches.
struct KahanVec {
  Vec value;
  Vec comp;
  explicit KahanVec(std::size_t n = 0) : value(n, 0.0), comp(n, 0.0) {}
  void add(std::size_t i, double x) {
    const double y = x - comp[i];
    const double t = value[i] + y;
    comp[i] = (t - value[i]) - y;
    value[i] = t;
  }
};

Vec matvec(const Vec& w, const Vec& x, const Vec& b, int out, int in) {
  Vec y(out, 0.0);
  for (int o = 0; o < out; ++o) {
    double acc = b[o];
    for (int i = 0; i < in; ++i) acc += w[o * in + i] * x[i];
    y[o] = acc;
  }
  return y;
}

Vec stage_forward(const ToyModel& m, int s, const Vec& x) {
  Vec y = matvec(m.weights[s], x, m.biases[s], m.dims[s + 1], m.dims[s]);
  for (double& v : y) v = std::tanh(v);
  return y;
}

// Backward through one stage: given the stage input, output and dL/dy,
// accumulates dL/dW and dL/db (scaled) and returns dL/dx.
Vec stage_backward(const Vec& w, const Vec& x, const Vec& y, const Vec& g_y, int out,
                   int in, double scale, KahanVec& gw, KahanVec& gb) {
  Vec g_x(in, 0.0);
  for (int o = 0; o < out; ++o) {
    const double gz = g_y[o] * (1.0 - y[o] * y[o]);
    gb.add(o, gz * scale);
    for (int i = 0; i < in; ++i) {
      gw.add(o * in + i, gz * x[i] * scale);
      g_x[i] += w[o * in + i] * gz;
    }
  }
  return g_x;
}

struct SampleView {
  Vec input;
  Vec target;
};

SampleView sample_at(const Batch& batch, const ToyModel& m, int idx) {
  SampleView s;
  s.input.assign(batch.inputs.begin() + static_cast<long>(idx) * m.in_dim(),
                 batch.inputs.begin() + static_cast<long>(idx + 1) * m.in_dim());
  s.target.assign(batch.targets.begin() + static_cast<long>(idx) * m.out_dim(),
                  batch.targets.begin() + static_cast<long>(idx + 1) * m.out_dim());
  return s;
}

}  // namespace

ToyModel make_model(const std::vector<int>& dims, std::uint64_t seed) {
  if (dims.size() < 2) throw InvalidConfigError("model needs at least one stage");
  ToyModel m;
  m.dims = dims;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  for (std::size_t s = 0; s + 1 < dims.size(); ++s) {
    const int in = dims[s], out = dims[s + 1];
    Vec w(static_cast<std::size_t>(out) * in);
    Vec b(out);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w) v = dist(rng) * scale;
    for (double& v : b) v = dist(rng) * 0.1;
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(b));
  }
  return m;
}

Batch make_batch(const ToyModel& model, int size, std::uint64_t seed) {
  Batch b;
  b.size = size;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  b.inputs.resize(static_cast<std::size_t>(size) * model.in_dim());
  b.targets.resize(static_cast<std::size_t>(size) * model.out_dim());
  for (double& v : b.inputs) v = dist(rng);
  for (double& v : b.targets) v = dist(rng) * 0.5;
  return b;
}

ToyModel sequential_sgd(const ToyModel& model, const Batch& batch, double lr) {
  const int D = model.stages();
  std::vector<KahanVec> gw, gb;
  for (int s = 0; s < D; ++s) {
    gw.emplace_back(model.weights[s].size());
    gb.emplace_back(model.biases[s].size());
  }
  const double scale = 1.0 / batch.size;
  for (int i = 0; i < batch.size; ++i) {
    const SampleView sv = sample_at(batch, model, i);
    std::vector<Vec> acts{sv.input};
    for (int s = 0; s < D; ++s) acts.push_back(stage_forward(model, s, acts.back()));
    Vec g(model.out_dim());
    for (int o = 0; o < model.out_dim(); ++o) g[o] = acts.back()[o] - sv.target[o];
    for (int s = D - 1; s >= 0; --s)
      g = stage_backward(model.weights[s], acts[s], acts[s + 1], g, model.dims[s + 1],
                         model.dims[s], scale, gw[s], gb[s]);
  }
  ToyModel out = model;
  for (int s = 0; s < D; ++s) {
    for (std::size_t i = 0; i < out.weights[s].size(); ++i)
      out.weights[s][i] -= lr * gw[s].value[i];
    for (std::size_t i = 0; i < out.biases[s].size(); ++i)
      out.biases[s][i] -= lr * gb[s].value[i];
  }
  return out;
}

namespace {

struct ActRecord {
  std::vector<Vec> inputs;   // one per sample of the micro-batch
  std::vector<Vec> outputs;
  Vec w_used;  // weight snapshot (weight-versioned schemes)
  Vec b_used;
};

struct Engine {
  const Schedule& sched;
  const Batch& batch;
  double lr;
  PipelineConfig cfg;
  int D;
  int n_pipelines;

  // weights[r][pipeline] holds a full model copy.
  std::vector<std::vector<ToyModel>> copies;
  // gradient accumulators per (r, pipeline, stage)
  std::vector<std::vector<std::vector<KahanVec>>> gw, gb;
  std::map<std::array<int, 4>, ActRecord> stash;           // r, pipeline, micro, stage
  std::map<std::array<int, 4>, std::vector<Vec>> grad_in;  // dL/d output of stage
  std::vector<int> live_per_worker;
  std::vector<int> peak_per_worker;

  Engine(const Schedule& s, const ToyModel& model, const Batch& b, double lr_)
      : sched(s), batch(b), lr(lr_), cfg(s.config), D(model.stages()) {
    n_pipelines = 1;
    for (const auto& w : s.per_worker)
      for (const Task& t : w) n_pipelines = std::max(n_pipelines, t.pipeline_id + 1);
    copies.assign(cfg.W, std::vector<ToyModel>(n_pipelines, model));
    gw.resize(cfg.W);
    gb.resize(cfg.W);
    for (int r = 0; r < cfg.W; ++r) {
      gw[r].resize(n_pipelines);
      gb[r].resize(n_pipelines);
      for (int p = 0; p < n_pipelines; ++p)
        for (int s2 = 0; s2 < D; ++s2) {
          gw[r][p].emplace_back(model.weights[s2].size());
          gb[r][p].emplace_back(model.biases[s2].size());
        }
    }
    live_per_worker.assign(s.per_worker.size(), 0);
    peak_per_worker.assign(s.per_worker.size(), 0);
  }

  int sample_base(int r, int micro) const { return (r * cfg.N + micro) * cfg.B; }

  void forward(const Task& t, int r) {
    const ToyModel& m = copies[r][t.pipeline_id];
    ActRecord rec;
    if (cfg.scheme == Scheme::PipeDream) {
      int depth = 0;
      for (const auto& [key, unused] : stash)
        if (key[0] == r && key[1] == t.pipeline_id && key[3] == t.stage) ++depth;
      if (depth >= D)
        throw VersionMismatchError("weight version stash exhausted on stage " +
                                   std::to_string(t.stage));
      rec.w_used = m.weights[t.stage];
      rec.b_used = m.biases[t.stage];
    }
    for (int i = 0; i < cfg.B; ++i) {
      Vec x;
      if (t.stage == 0) {
        x = sample_at(batch, m, sample_base(r, t.micro_batch) + i).input;
      } else {
        auto it = stash.find({r, t.pipeline_id, t.micro_batch, t.stage - 1});
        if (it == stash.end())
          throw MissingActivationError("missing upstream activation for micro " +
                                       std::to_string(t.micro_batch));
        x = it->second.outputs[i];
      }
      Vec y;
      if (!rec.w_used.empty()) {
        y = matvec(rec.w_used, x, rec.b_used, m.dims[t.stage + 1], m.dims[t.stage]);
        for (double& v : y) v = std::tanh(v);
      } else {
        y = stage_forward(m, t.stage, x);
      }
      rec.inputs.push_back(std::move(x));
      rec.outputs.push_back(std::move(y));
    }
    stash.emplace(std::array<int, 4>{r, t.pipeline_id, t.micro_batch, t.stage},
                  std::move(rec));
    if (r == 0) {
      peak_per_worker[t.worker] =
          std::max(peak_per_worker[t.worker], ++live_per_worker[t.worker]);
    }
  }

  void backward(const Task& t, int r, double scale) {
    auto it = stash.find({r, t.pipeline_id, t.micro_batch, t.stage});
    if (it == stash.end())
      throw MissingActivationError("backward without stashed activation, micro " +
                                   std::to_string(t.micro_batch));
    ActRecord rec = std::move(it->second);
    stash.erase(it);
    if (r == 0) --live_per_worker[t.worker];

    const ToyModel& m = copies[r][t.pipeline_id];
    const Vec& w = rec.w_used.empty() ? m.weights[t.stage] : rec.w_used;
    std::vector<Vec> down(cfg.B);
    for (int i = 0; i < cfg.B; ++i) {
      Vec g_y;
      if (t.stage == D - 1) {
        const SampleView sv = sample_at(batch, m, sample_base(r, t.micro_batch) + i);
        g_y.resize(m.out_dim());
        for (int o = 0; o < m.out_dim(); ++o) g_y[o] = rec.outputs[i][o] - sv.target[o];
      } else {
        auto git = grad_in.find({r, t.pipeline_id, t.micro_batch, t.stage});
        if (git == grad_in.end())
          throw MissingActivationError("missing upstream gradient, micro " +
                                       std::to_string(t.micro_batch));
        g_y = git->second[i];
      }
      down[i] = stage_backward(w, rec.inputs[i], rec.outputs[i], g_y, m.dims[t.stage + 1],
                               m.dims[t.stage], scale, gw[r][t.pipeline_id][t.stage],
                               gb[r][t.pipeline_id][t.stage]);
    }
    if (t.stage == D - 1) {
      // nothing stored above the loss
    } else {
      grad_in.erase({r, t.pipeline_id, t.micro_batch, t.stage});
    }
    if (t.stage > 0)
      grad_in[{r, t.pipeline_id, t.micro_batch, t.stage - 1}] = std::move(down);
  }

  // Sum one stage's accumulated gradients across every replica and apply.
  void apply_stage_update(int stage) {
    const std::size_t nw = copies[0][0].weights[stage].size();
    const std::size_t nb = copies[0][0].biases[stage].size();
    Vec tw(nw, 0.0), tb(nb, 0.0);
    for (int r = 0; r < cfg.W; ++r)
      for (int p = 0; p < n_pipelines; ++p) {
        for (std::size_t i = 0; i < nw; ++i) tw[i] += gw[r][p][stage].value[i];
        for (std::size_t i = 0; i < nb; ++i) tb[i] += gb[r][p][stage].value[i];
        gw[r][p][stage] = KahanVec(nw);
        gb[r][p][stage] = KahanVec(nb);
      }
    for (int r = 0; r < cfg.W; ++r)
      for (int p = 0; p < n_pipelines; ++p) {
        for (std::size_t i = 0; i < nw; ++i) copies[r][p].weights[stage][i] -= lr * tw[i];
        for (std::size_t i = 0; i < nb; ++i) copies[r][p].biases[stage][i] -= lr * tb[i];
      }
  }
};

}  // namespace

IterationTrace run_iteration_traced(const Schedule& s, const ToyModel& model,
                                    const Batch& batch, double lr) {
  const PipelineConfig& cfg = s.config;
  if (model.stages() != cfg.D)
    throw InvalidConfigError("model stage count must equal D");
  if (batch.size != static_cast<int>(cfg.mini_batch()))
    throw InvalidConfigError("batch size must equal B*N*W");

  CostProfile unit;
  const auto times = detail::tick_schedule(s, unit);
  struct Ordered {
    double start;
    int worker;
    int index;
  };
  std::vector<Ordered> order;
  for (int w = 0; w < static_cast<int>(s.per_worker.size()); ++w)
    for (int i = 0; i < static_cast<int>(s.per_worker[w].size()); ++i)
      order.push_back({times.spans[w][i].start, w, i});
  std::sort(order.begin(), order.end(), [](const Ordered& a, const Ordered& b) {
    if (a.start != b.start) return a.start < b.start;
    if (a.worker != b.worker) return a.worker < b.worker;
    return a.index < b.index;
  });

  Engine eng(s, model, batch, lr);
  const double scale = 1.0 / static_cast<double>(batch.size);
  const double pd_scale =
      1.0 / (static_cast<double>(cfg.B) * cfg.W);  // per-micro-batch update

  for (const Ordered& o : order) {
    const Task& t = s.per_worker[o.worker][o.index];
    if (t.kind == TaskKind::Forward) {
      for (int r = 0; r < cfg.W; ++r) eng.forward(t, r);
    } else if (t.kind == TaskKind::Backward) {
      const double sc = cfg.scheme == Scheme::PipeDream ? pd_scale : scale;
      for (int r = 0; r < cfg.W; ++r) eng.backward(t, r, sc);
      if (cfg.scheme == Scheme::PipeDream) eng.apply_stage_update(t.stage);
    }
  }
  if (cfg.scheme != Scheme::PipeDream)
    for (int stage = 0; stage < cfg.D; ++stage) eng.apply_stage_update(stage);

  IterationTrace trace;
  trace.model = eng.copies[0][0];
  trace.peak_stash_per_worker = eng.peak_per_worker;
  return trace;
}

ToyModel run_iteration(const Schedule& s, const ToyModel& model, const Batch& batch,
                       double lr) {
  return run_iteration_traced(s, model, batch, lr).model;
}

double check_gradients(const ToyModel& model, const Batch& batch, double step) {
  const int D = model.stages();
  std::vector<KahanVec> gw, gb;
  for (int s = 0; s < D; ++s) {
    gw.emplace_back(model.weights[s].size());
    gb.emplace_back(model.biases[s].size());
  }
  const double scale = 1.0 / batch.size;
  auto loss_of = [&](const ToyModel& m) {
    double loss = 0;
    for (int i = 0; i < batch.size; ++i) {
      const SampleView sv = sample_at(batch, m, i);
      Vec y = sv.input;
      for (int s = 0; s < D; ++s) y = stage_forward(m, s, y);
      for (int o = 0; o < m.out_dim(); ++o) {
        const double d = y[o] - sv.target[o];
        loss += 0.5 * d * d;
      }
    }
    return loss * scale;
  };
  for (int i = 0; i < batch.size; ++i) {
    const SampleView sv = sample_at(batch, model, i);
    std::vector<Vec> acts{sv.input};
    for (int s = 0; s < D; ++s) acts.push_back(stage_forward(model, s, acts.back()));
    Vec g(model.out_dim());
    for (int o = 0; o < model.out_dim(); ++o) g[o] = acts.back()[o] - sv.target[o];
    for (int s = D - 1; s >= 0; --s)
      g = stage_backward(model.weights[s], acts[s], acts[s + 1], g, model.dims[s + 1],
                         model.dims[s], scale, gw[s], gb[s]);
  }

  double worst = 0;
  ToyModel probe = model;
  auto fd_check = [&](double* slot, double analytic) {
    const double keep = *slot;
    *slot = keep + step;
    const double up = loss_of(probe);
    *slot = keep - step;
    const double down = loss_of(probe);
    *slot = keep;
    const double fd = (up - down) / (2.0 * step);
    const double denom = std::max({1.0, std::abs(fd), std::abs(analytic)});
    worst = std::max(worst, std::abs(fd - analytic) / denom);
  };
  for (int s = 0; s < D; ++s) {
    for (std::size_t i = 0; i < probe.weights[s].size(); ++i)
      fd_check(&probe.weights[s][i], gw[s].value[i]);
    for (std::size_t i = 0; i < probe.biases[s].size(); ++i)
      fd_check(&probe.biases[s][i], gb[s].value[i]);
  }
  return worst;
}

double max_relative_diff(const ToyModel& a, const ToyModel& b) {
  double worst = 0;
  for (int s = 0; s < a.stages(); ++s) {
    for (std::size_t i = 0; i < a.weights[s].size(); ++i) {
      const double x = a.weights[s][i], y = b.weights[s][i];
      worst = std::max(worst, std::abs(x - y) / std::max({1e-9, std::abs(x), std::abs(y)}));
    }
    for (std::size_t i = 0; i < a.biases[s].size(); ++i) {
      const double x = a.biases[s][i], y = b.biases[s][i];
      worst = std::max(worst, std::abs(x - y) / std::max({1e-9, std::abs(x), std::abs(y)}));
    }
  }
  return worst;
}

}  // namespace pipesim::oracle
