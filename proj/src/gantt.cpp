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

#include "pipesim/gantt.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pipesim::gantt {

namespace {

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759",
                          "#b07aa1", "#76b7b2", "#edc948", "#ff9da7"};

std::string color_of(int pipeline_id) {
  return kPalette[pipeline_id % (sizeof(kPalette) / sizeof(kPalette[0]))];
}

}  // namespace

std::string render_svg(const dessim::SimResult& result, const CostProfile& profile) {
  const Schedule& s = result.timed;
  if (!s.timed()) throw UntimedScheduleError("svg rendering requires a timed schedule");
  const int workers = static_cast<int>(s.per_worker.size());
  const double px_per_unit = std::max(4.0, 640.0 / std::max(1.0, result.makespan));
  const int row_h = 26, row_gap = 6, left = 46, top = 26;
  const int width = left + static_cast<int>(result.makespan * px_per_unit) + 20;
  const int height = top + workers * (row_h + row_gap) + 30;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" font-family=\"monospace\" font-size=\"11\">\n";
  svg << "  <defs>\n"
         "    <pattern id=\"hatch\" width=\"5\" height=\"5\" "
      "patternTransform=\"rotate(45)\" patternUnits=\"userSpaceOnUse\">\n"
      "      <line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"5\" stroke=\"#00000055\" "
      "stroke-width=\"2\"/>\n"
      "    </pattern>\n"
      "  </defs>\n";

  // Time axis.
  const double tick = std::max(1.0, std::floor(result.makespan / 16.0));
  for (double t = 0; t <= result.makespan + 1e-9; t += tick) {
    const double x = left + t * px_per_unit;
    svg << "  <line x1=\"" << x << "\" y1=\"" << top - 6 << "\" x2=\"" << x << "\" y2=\""
        << height - 24 << "\" stroke=\"#dddddd\"/>\n";
    svg << "  <text x=\"" << x + 2 << "\" y=\"" << top - 10 << "\" fill=\"#666666\">"
        << t << "</text>\n";
  }

  for (int w = 0; w < workers; ++w) {
    const int y = top + w * (row_h + row_gap);
    svg << "  <text x=\"4\" y=\"" << y + row_h - 8 << "\">P" << w << "</text>\n";
    for (std::size_t i = 0; i < s.per_worker[w].size(); ++i) {
      const Task& t = s.per_worker[w][i];
      const TimeSpan& ts = (*s.timing)[w][i];
      const double x = left + ts.start * px_per_unit;
      const double wd = std::max(1.0, (ts.end - ts.start) * px_per_unit - 0.5);
      svg << "  <rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << wd
          << "\" height=\"" << row_h << "\" fill=\"" << color_of(t.pipeline_id)
          << "\" stroke=\"#333333\" stroke-width=\"0.5\"/>\n";
      if (t.kind == TaskKind::Backward)
        svg << "  <rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << wd
            << "\" height=\"" << row_h << "\" fill=\"url(#hatch)\"/>\n";
      if (wd > 11)
        svg << "  <text x=\"" << x + wd / 2 - 3 << "\" y=\"" << y + row_h - 8
            << "\" fill=\"#ffffff\">" << t.micro_batch << "</text>\n";
    }
  }
  for (const auto& ev : result.allreduce_events) {
    const int y = top + ev.worker * (row_h + row_gap) + row_h - 5;
    const double x = left + ev.start * px_per_unit;
    const double wd = std::max(1.0, (ev.end - ev.start) * px_per_unit);
    svg << "  <rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << wd
        << "\" height=\"5\" fill=\"none\" stroke=\"" << (ev.eager ? "#d62728" : "#555555")
        << "\" stroke-width=\"1\"/>\n";
  }
  svg << "  <text x=\"4\" y=\"" << height - 8 << "\" fill=\"#666666\">makespan "
      << result.makespan << " (F_t=" << profile.F_t << ")</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

std::string render_ascii(const dessim::SimResult& result, const CostProfile& profile) {
  const Schedule& s = result.timed;
  if (!s.timed()) throw UntimedScheduleError("ascii rendering requires a timed schedule");
  const double unit = profile.F_t;
  const int cols = static_cast<int>(std::llround(result.compute_makespan / unit));
  std::ostringstream out;
  for (int w = 0; w < static_cast<int>(s.per_worker.size()); ++w) {
    std::string row(static_cast<std::size_t>(std::max(cols, 1)), '.');
    for (std::size_t i = 0; i < s.per_worker[w].size(); ++i) {
      const Task& t = s.per_worker[w][i];
      const TimeSpan& ts = (*s.timing)[w][i];
      const int lo = static_cast<int>(std::llround(ts.start / unit));
      const int hi = std::max(lo + 1, static_cast<int>(std::llround(ts.end / unit)));
      const char c = t.kind == TaskKind::Backward
                         ? static_cast<char>('A' + t.micro_batch % 26)
                         : static_cast<char>('0' + t.micro_batch % 10);
      for (int col = lo; col < hi && col < cols; ++col) row[col] = c;
    }
    out << 'P' << w << (w < 10 ? " " : "") << '|' << row << "|\n";
  }
  return out.str();
}

}  // namespace pipesim::gantt
