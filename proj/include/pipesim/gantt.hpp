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

#ifndef PIPESIM_GANTT_HPP
#define PIPESIM_GANTT_HPP

#include <string>

#include "pipesim/dessim.hpp"

namespace pipesim::gantt {

/// One row per worker, time left to right, colored by pipeline id, hatched
/// for backward passes. Allreduce events render as outlined bars.
std::string render_svg(const dessim::SimResult& result, const CostProfile& profile);

/// Text rendering with one column per F_t: digits are micro-batch ids
/// (mod 10), lowercase for forwards, uppercase for backwards, '.' idle.
std::string render_ascii(const dessim::SimResult& result, const CostProfile& profile);

}  // namespace pipesim::gantt

#endif  // PIPESIM_GANTT_HPP
