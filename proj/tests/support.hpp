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

#ifndef PIPESIM_TESTS_SUPPORT_HPP
#define PIPESIM_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pipesim/analysis.hpp"
#include "pipesim/core.hpp"
#include "pipesim/dessim.hpp"
#include "pipesim/schedgen.hpp"

namespace pipesim::testsupport {

inline PipelineConfig chimera(int D, int N, int f = 1, int W = 1, int B = 1,
                              ScalingStrategy scaling = ScalingStrategy::Direct) {
  PipelineConfig c;
  c.scheme = Scheme::Chimera;
  c.D = D;
  c.N = N;
  c.f = f;
  c.W = W;
  c.B = B;
  c.scaling = scaling;
  return c;
}

inline PipelineConfig baseline(Scheme scheme, int D, int N, int W = 1, int B = 1) {
  PipelineConfig c;
  c.scheme = scheme;
  c.D = D;
  c.N = N;
  c.W = W;
  c.B = B;
  return c;
}

inline CostProfile unit_profile() { return CostProfile{}; }

// Compute-only timing with the defaults (F_t = 1, backward twice as long).
inline dessim::SimResult timed(const Schedule& s,
                               const CostProfile& profile = CostProfile{}) {
  dessim::SimOptions opts;
  opts.zero_comm = true;
  return dessim::simulate(s, profile, opts);
}

inline Rational measured_bubble(const PipelineConfig& config,
                                const CostProfile& profile = CostProfile{}) {
  const Schedule s = schedgen::generate(config, profile);
  auto sim = timed(s, profile);
  return analysis::bubble_ratio(sim.timed, profile);
}

// Brute-force longest weighted path over explicit dependency + worker edges;
// independent of the scheduling engine.
inline double brute_force_longest_path(const Schedule& s, double f_dur, double b_dur) {
  struct Node {
    int w, i;
    double dur;
  };
  std::vector<Node> nodes;
  std::map<std::array<int, 4>, int> id;
  for (int w = 0; w < static_cast<int>(s.per_worker.size()); ++w)
    for (int i = 0; i < static_cast<int>(s.per_worker[w].size()); ++i) {
      const Task& t = s.per_worker[w][i];
      const double dur = t.kind == TaskKind::Backward ? b_dur : f_dur;
      id[{t.kind == TaskKind::Backward ? 1 : 0, t.pipeline_id, t.micro_batch, t.stage}] =
          static_cast<int>(nodes.size());
      nodes.push_back({w, i, dur});
    }
  const int n = static_cast<int>(nodes.size());
  std::vector<std::vector<int>> preds(n);
  for (int w = 0; w < static_cast<int>(s.per_worker.size()); ++w)
    for (int i = 0; i < static_cast<int>(s.per_worker[w].size()); ++i) {
      const Task& t = s.per_worker[w][i];
      const int me = id.at({t.kind == TaskKind::Backward ? 1 : 0, t.pipeline_id,
                            t.micro_batch, t.stage});
      if (i > 0) {
        const Task& prev = s.per_worker[w][i - 1];
        preds[me].push_back(id.at({prev.kind == TaskKind::Backward ? 1 : 0,
                                   prev.pipeline_id, prev.micro_batch, prev.stage}));
      }
      auto link = [&](std::array<int, 4> key) {
        auto it = id.find(key);
        if (it != id.end()) preds[me].push_back(it->second);
      };
      if (t.kind == TaskKind::Forward && t.stage > 0)
        link({0, t.pipeline_id, t.micro_batch, t.stage - 1});
      if (t.kind == TaskKind::Backward) {
        link({1, t.pipeline_id, t.micro_batch, t.stage + 1});
        link({0, t.pipeline_id, t.micro_batch, t.stage});
      }
    }
  // Longest path by repeated relaxation (graphs are small and acyclic).
  std::vector<double> finish(n, -1);
  bool changed = true;
  int guard = 0;
  while (changed && guard++ <= n + 2) {
    changed = false;
    for (int v = 0; v < n; ++v) {
      double start = 0;
      for (int p : preds[v]) start = std::max(start, finish[p]);
      if (start + nodes[v].dur > finish[v]) {
        finish[v] = start + nodes[v].dur;
        changed = true;
      }
    }
  }
  double best = 0;
  for (double f : finish) best = std::max(best, f);
  return best;
}

inline std::string golden_dir() {
  const char* dir = std::getenv("PIPESIM_GOLDEN_DIR");
  return dir ? dir : "tests/golden";
}

inline std::optional<std::string> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace pipesim::testsupport

#endif  // PIPESIM_TESTS_SUPPORT_HPP
