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

#include <cstdlib>
#include <fstream>
#include <string>

#include "pipesim/core.hpp"
#include "pipesim/schedgen.hpp"
#include "support.hpp"

using namespace pipesim;
namespace ts = pipesim::testsupport;

namespace {

std::string tool() {
  const char* bin = std::getenv("PIPESIM_BIN");
  REQUIRE(bin != nullptr);
  return bin;
}

int run(const std::string& args, const std::string& tag) {
  const std::string cmd =
      tool() + " " + args + " > cli_" + tag + ".out 2> cli_" + tag + ".err";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  auto text = ts::read_file(path);
  return text ? *text : std::string{};
}

}  // namespace

TEST_CASE("schedule command writes json and svg") {
  CHECK(run("schedule --scheme chimera -D 4 -N 4 -o cli_sched", "sched") == 0);
  const std::string json = slurp("cli_sched.json");
  REQUIRE_FALSE(json.empty());
  const Schedule parsed = schedule_from_json(json);
  const Schedule expected = schedgen::generate(ts::chimera(4, 4), CostProfile{});
  CHECK(parsed == expected);
  CHECK(slurp("cli_sched.svg").find("<svg") == 0);
}

TEST_CASE("schedule command rejects an odd depth with exit code 2") {
  CHECK(run("schedule --scheme chimera -D 5 -N 4 -o cli_bad", "bad") == 2);
  CHECK(slurp("cli_bad.err").find("even") != std::string::npos);
}

TEST_CASE("ascii rendering shows the gpipe staircase") {
  CHECK(run("schedule --scheme gpipe -D 4 -N 4 --ascii -o cli_gp", "gp") == 0);
  const std::string out = slurp("cli_gp.out");
  CHECK(out.find("P0 |0123") == 0);
  CHECK(out.find("AAB") != std::string::npos);  // ratio-2 backwards
}

TEST_CASE("compare prints one row per scheme with the closed-form bubbles") {
  CHECK(run("compare -D 4 -N 4", "cmp") == 0);
  const std::string out = slurp("cli_cmp.out");
  for (const char* scheme : {"gpipe", "dapple", "gems", "pipedream", "pipedream-2bw",
                             "chimera"})
    CHECK(out.find(scheme) != std::string::npos);
  CHECK(out.find("3/7") != std::string::npos);
  CHECK(out.find("1/4") != std::string::npos);
}

TEST_CASE("compare flags recomputation when capacity forces it") {
  // Plain activations overflow, checkpointed ones fit.
  std::ofstream profile("cli_tight.json");
  profile << R"({"F_t":1,"backward_ratio":2,"alpha":0,"beta":0,"L_grad":1,"L_act":1,)"
          << R"("M_theta":1,"M_a":10,"M_a_ckpt":1,"mem_capacity":40,)"
          << R"("embed_surcharge":false})";
  profile.close();
  CHECK(run("compare -D 4 -N 4 --profile cli_tight.json", "cmpR") == 0);
  const std::string out = slurp("cli_cmpR.out");
  CHECK(out.find('R') != std::string::npos);
}

TEST_CASE("plan output is deterministic") {
  CHECK(run("plan -P 4 --bhat 64 --json", "plan1") == 0);
  CHECK(run("plan -P 4 --bhat 64 --json", "plan2") == 0);
  const std::string a = slurp("cli_plan1.out");
  CHECK_FALSE(a.empty());
  CHECK(a == slurp("cli_plan2.out"));
}

TEST_CASE("simulate honors the sync policy flag") {
  REQUIRE(run("simulate --scheme chimera -D 4 -N 4 -W 2 --policy eager-sync-opt --json",
              "simopt") == 0);
  REQUIRE(run("simulate --scheme chimera -D 4 -N 4 -W 2 --policy eager-sync --json",
              "simeager") == 0);
  const auto opt = slurp("cli_simopt.out");
  const auto eager = slurp("cli_simeager.out");
  CHECK(opt.find("eager-sync-opt") != std::string::npos);
  CHECK(eager.find("\"policy\": \"eager-sync\"") != std::string::npos);
}

TEST_CASE("verify passes for a synchronous scheme") {
  CHECK(run("verify --scheme chimera -D 4 -W 2 -N 4", "verify") == 0);
  CHECK(slurp("cli_verify.out").find("PASS") == 0);
}

TEST_CASE("verify reports expected divergence for pipedream") {
  CHECK(run("verify --scheme pipedream -D 4 -W 2 -N 4", "verifypd") == 0);
  CHECK(slurp("cli_verifypd.out").find("DIVERGED (expected)") == 0);
}
