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

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "pipesim/analysis.hpp"
#include "pipesim/dessim.hpp"
#include "pipesim/gantt.hpp"
#include "pipesim/oracle.hpp"
#include "pipesim/perfmodel.hpp"
#include "pipesim/schedgen.hpp"

using namespace pipesim;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitInternal = 3;

struct ConfigFlags {
  std::string scheme = "chimera";
  int D = 4, W = 1, N = 4, B = 1, f = 1;
  std::string scaling = "direct";
  bool recompute = false;

  void attach(CLI::App* app) {
    app->add_option("--scheme", scheme,
                    "gpipe|dapple|gems|pipedream|pipedream-2bw|chimera");
    app->add_option("-D,--stages", D, "pipeline stages per replica");
    app->add_option("-W,--width", W, "replicated pipelines (data parallelism)");
    app->add_option("-N,--micro-batches", N, "micro-batches per worker per iteration");
    app->add_option("-B,--micro-batch-size", B, "micro-batch size in samples");
    app->add_option("-f,--pipeline-pairs", f, "down/up pipeline pairs (chimera)");
    app->add_option("--scaling", scaling, "direct|forward-doubling|backward-halving");
    app->add_flag("--recompute", recompute, "assume activation recomputation");
  }

  PipelineConfig to_config() const {
    PipelineConfig c;
    const auto s = scheme_from_string(scheme);
    if (!s) throw InvalidConfigError("unknown scheme: " + scheme);
    c.scheme = *s;
    const auto sc = scaling_from_string(scaling);
    if (!sc) throw InvalidConfigError("unknown scaling strategy: " + scaling);
    c.scaling = *sc;
    c.D = D;
    c.W = W;
    c.N = N;
    c.B = B;
    c.f = f;
    c.recompute = recompute;
    return c;
  }
};

struct ProfileFile {
  std::string model_name = "unnamed";
  long long layers = 0;
  long long parameters = 0;
  CostProfile cost;
};

// Empty path falls back to $PIPESIM_PROFILE, then to built-in defaults.
std::string resolve_profile_path(const std::string& path) {
  if (!path.empty()) return path;
  const char* env = std::getenv("PIPESIM_PROFILE");
  return env ? env : "";
}

ProfileFile load_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfigError("cannot open profile file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const ojson j = ojson::parse(buf.str());
  ProfileFile pf;
  if (j.contains("cost")) {
    if (j.contains("model")) {
      const auto& m = j.at("model");
      if (m.contains("name")) pf.model_name = m.at("name").get<std::string>();
      if (m.contains("layers")) pf.layers = m.at("layers").get<long long>();
      if (m.contains("parameters")) pf.parameters = m.at("parameters").get<long long>();
      for (auto it = m.begin(); it != m.end(); ++it)
        if (it.key() != "name" && it.key() != "layers" && it.key() != "parameters")
          throw InvalidConfigError("unknown model metadata field: " + it.key());
    }
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() != "cost" && it.key() != "model")
        throw InvalidConfigError("unknown profile file field: " + it.key());
    pf.cost = profile_from_json(j.at("cost").dump());
  } else {
    pf.cost = profile_from_json(buf.str());
  }
  if (pf.cost.F_t <= 0 || pf.cost.backward_ratio <= 0 || pf.cost.alpha < 0 ||
      pf.cost.beta < 0 || pf.cost.L_grad <= 0 || pf.cost.L_act <= 0 ||
      pf.cost.M_theta <= 0 || pf.cost.M_a <= 0 || pf.cost.M_a_ckpt <= 0 ||
      pf.cost.mem_capacity <= 0)
    throw InvalidConfigError("profile scalars must be positive");
  if (pf.cost.M_a_ckpt > pf.cost.M_a)
    throw InvalidConfigError("M_a_ckpt must not exceed M_a");
  return pf;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

int fail_invalid(const std::vector<std::string>& violations) {
  for (const auto& v : violations) std::cerr << "invalid configuration: " << v << "\n";
  return kExitInvalid;
}

ojson timeline_json(const dessim::SimResult& result, dessim::SyncPolicy policy) {
  ojson j;
  j["policy"] = dessim::to_string(policy);
  j["makespan"] = result.makespan;
  j["compute_makespan"] = result.compute_makespan;
  j["allreduce_exposed"] = result.allreduce_exposed;
  j["per_worker_idle"] = result.per_worker_idle;
  ojson events = ojson::array();
  const Schedule& s = result.timed;
  for (std::size_t w = 0; w < s.per_worker.size(); ++w)
    for (std::size_t i = 0; i < s.per_worker[w].size(); ++i) {
      const Task& t = s.per_worker[w][i];
      const TimeSpan& ts = (*s.timing)[w][i];
      ojson e;
      e["worker"] = t.worker;
      e["kind"] = to_string(t.kind);
      e["pipeline_id"] = t.pipeline_id;
      e["micro_batch"] = t.micro_batch;
      e["stage"] = t.stage;
      e["start"] = ts.start;
      e["end"] = ts.end;
      events.push_back(std::move(e));
    }
  j["events"] = std::move(events);
  ojson ar = ojson::array();
  for (const auto& ev : result.allreduce_events) {
    ojson e;
    e["worker"] = ev.worker;
    e["stage"] = ev.stage;
    e["eager"] = ev.eager;
    e["start"] = ev.start;
    e["end"] = ev.end;
    ar.push_back(std::move(e));
  }
  j["allreduce"] = std::move(ar);
  return j;
}

// --- subcommands -------------------------------------------------------------

int cmd_schedule(const ConfigFlags& flags, const std::string& profile_path,
                 const std::string& out_prefix, bool ascii) {
  CostProfile profile;
  const std::string path = resolve_profile_path(profile_path);
  if (!path.empty()) profile = load_profile(path).cost;
  const PipelineConfig config = flags.to_config();
  const auto violations = validate_config(config, profile);
  if (!violations.empty()) return fail_invalid(violations);

  const Schedule sched = schedgen::generate(config, profile);
  write_file(out_prefix + ".json", to_json(sched, 2));

  dessim::SimOptions opts;
  opts.zero_comm = true;
  const auto sim = dessim::simulate(sched, profile, opts);
  write_file(out_prefix + ".svg", gantt::render_svg(sim, profile));
  if (ascii) std::cout << gantt::render_ascii(sim, profile);
  std::cout << "wrote " << out_prefix << ".json and " << out_prefix << ".svg"
            << " (makespan " << sim.compute_makespan << " time units, compute only)\n";
  return kExitOk;
}

int cmd_compare(const std::string& profile_path, int D, int N, int W, int B,
                bool as_json) {
  ProfileFile pf;
  const std::string path = resolve_profile_path(profile_path);
  if (!path.empty()) pf = load_profile(path);
  const Scheme schemes[] = {Scheme::GPipe,     Scheme::Gems,         Scheme::Dapple,
                            Scheme::PipeDream, Scheme::PipeDream2BW, Scheme::Chimera};
  ojson rows = ojson::array();
  for (Scheme scheme : schemes) {
    PipelineConfig c;
    c.scheme = scheme;
    c.D = D;
    c.N = N;
    c.W = W;
    c.B = B;
    // Beyond N = D the bidirectional schedule equalizes chunk workloads.
    if (scheme == Scheme::Chimera && N > D && N % D == 0)
      c.scaling = B % 2 == 0 ? ScalingStrategy::BackwardHalving
                             : ScalingStrategy::ForwardDoubling;
    ojson row;
    row["scheme"] = to_string(scheme);
    if (!validate_config_shape(c).empty()) {
      row["status"] = "invalid";
      rows.push_back(std::move(row));
      continue;
    }
    bool recompute_forced = false;
    if (!analysis::fits_memory(c, pf.cost)) {
      c.recompute = true;
      recompute_forced = true;
      if (!analysis::fits_memory(c, pf.cost)) {
        row["status"] = "OOM";
        rows.push_back(std::move(row));
        continue;
      }
    }
    const Schedule sched = schedgen::generate(c, pf.cost);
    dessim::SimOptions so;
    so.zero_comm = true;
    const auto sim = dessim::simulate(sched, pf.cost, so);
    Schedule timed = sim.timed;
    Rational ratio = analysis::bubble_ratio(timed, pf.cost);
    // Flush-free schemes are judged by their steady state, not the window.
    const bool flush_free =
        scheme == Scheme::PipeDream || scheme == Scheme::PipeDream2BW;
    if (flush_free) {
      PipelineConfig wide = c;
      wide.N = std::max(c.N, 6 * c.D);
      if (analysis::steady_state_idle(schedgen::generate(wide, pf.cost), pf.cost) == 0.0)
        ratio = Rational(0);
    }
    const auto mem = analysis::memory_profile(sched, pf.cost);
    CostProfile prof = pf.cost;
    if (c.recompute) prof.backward_ratio = pf.cost.backward_ratio + 1.0;
    const double T = perfmodel::predict_T(c, prof);
    row["status"] = recompute_forced ? "R" : "ok";
    row["bubble_ratio"] = ratio.str();
    row["bubble_ratio_value"] = ratio.to_double();
    row["peak_mem"] = mem.peak_bytes;
    row["T_predicted"] = T;
    row["throughput"] = static_cast<double>(c.mini_batch()) / T;
    if (as_json) {
      AnalysisReport report;
      report.bubble_ratio = ratio;
      report.weight_mem = mem.weight_bytes;
      report.act_mem = mem.act_bytes;
      report.peak_mem = mem.peak_bytes;
      const auto cp = perfmodel::critical_path(sched, prof);
      report.C_f = cp.C_f;
      report.C_b = cp.C_b;
      report.T_predicted = T;
      dessim::SimOptions sim_opts;
      sim_opts.policy = dessim::SyncPolicy::EagerSyncOpt;
      report.T_simulated = dessim::simulate(sched, prof, sim_opts).makespan;
      row["report"] = ojson::parse(to_json(report));
    }
    rows.push_back(std::move(row));
  }
  if (as_json) {
    ojson out;
    out["model"] = pf.model_name;
    out["D"] = D;
    out["N"] = N;
    out["W"] = W;
    out["B"] = B;
    out["rows"] = rows;
    std::cout << out.dump(2) << "\n";
    return kExitOk;
  }
  std::cout << "scheme         bubble      peak-mem      T-pred     samples/unit  flags\n";
  for (const auto& row : rows) {
    char line[160];
    if (row.at("status") == "invalid" || row.at("status") == "OOM") {
      std::snprintf(line, sizeof line, "%-14s %s", row.at("scheme").get<std::string>().c_str(),
                    row.at("status").get<std::string>().c_str());
      std::cout << line << "\n";
      continue;
    }
    std::snprintf(line, sizeof line, "%-14s %-11s %-13.4g %-10.4g %-13.4g %s",
                  row.at("scheme").get<std::string>().c_str(),
                  row.at("bubble_ratio").get<std::string>().c_str(),
                  row.at("peak_mem").get<double>(), row.at("T_predicted").get<double>(),
                  row.at("throughput").get<double>(),
                  row.at("status") == "R" ? "R" : "");
    std::cout << line << "\n";
  }
  return kExitOk;
}

int cmd_plan(int P, long long bhat, const std::string& profile_path,
             const std::string& scheme_name, bool as_json, const std::string& out_path) {
  ProfileFile pf;
  const std::string path = resolve_profile_path(profile_path);
  if (!path.empty()) pf = load_profile(path);
  const auto scheme = scheme_from_string(scheme_name);
  if (!scheme) throw InvalidConfigError("unknown scheme: " + scheme_name);
  const auto entries = perfmodel::plan(P, bhat, pf.cost, *scheme);

  ojson out = ojson::array();
  for (const auto& e : entries) {
    ojson row;
    row["W"] = e.W;
    row["D"] = e.D;
    row["B"] = e.B;
    row["N"] = e.N;
    row["scaling"] = to_string(e.scaling);
    row["recompute"] = e.recompute;
    row["T_predicted"] = e.T_predicted;
    out.push_back(std::move(row));
  }
  if (!out_path.empty()) write_file(out_path, out.dump(2) + "\n");
  if (as_json) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << "rank  W     D     B     N     scaling            R  T-pred\n";
    int rank = 1;
    for (const auto& e : entries) {
      char line[160];
      std::snprintf(line, sizeof line, "%-5d %-5d %-5d %-5d %-5d %-18s %s  %.6g", rank++,
                    e.W, e.D, e.B, e.N, to_string(e.scaling).c_str(),
                    e.recompute ? "R" : "-", e.T_predicted);
      std::cout << line << "\n";
    }
  }
  return kExitOk;
}

int cmd_simulate(const ConfigFlags& flags, const std::string& profile_path,
                 const std::string& policy_name, double eps, const std::string& out_prefix,
                 bool as_json, bool ascii) {
  CostProfile profile;
  const std::string path = resolve_profile_path(profile_path);
  if (!path.empty()) profile = load_profile(path).cost;
  const auto policy = dessim::sync_policy_from_string(policy_name);
  if (!policy) throw InvalidConfigError("unknown sync policy: " + policy_name);
  const PipelineConfig config = flags.to_config();
  const auto violations = validate_config(config, profile);
  if (!violations.empty()) return fail_invalid(violations);

  const int replicas = perfmodel::replicas_per_stage(config);
  if (replicas > 1 && !perfmodel::is_power_of_two(replicas))
    std::cerr << "warning: " << replicas
              << " stage replicas is not a power of two; the allreduce cost "
                 "formula is evaluated with a real-valued log2\n";

  const Schedule sched = schedgen::generate(config, profile);
  dessim::SimOptions opts;
  opts.policy = *policy;
  opts.eager_overhead = eps;
  const auto sim = dessim::simulate(sched, profile, opts);

  if (!out_prefix.empty()) {
    write_file(out_prefix + ".json", timeline_json(sim, *policy).dump(2) + "\n");
    write_file(out_prefix + ".svg", gantt::render_svg(sim, profile));
  }
  if (ascii) std::cout << gantt::render_ascii(sim, profile);
  if (as_json) {
    std::cout << timeline_json(sim, *policy).dump(2) << "\n";
  } else {
    std::cout << "policy           " << dessim::to_string(*policy) << "\n"
              << "makespan         " << sim.makespan << "\n"
              << "compute span     " << sim.compute_makespan << "\n"
              << "sync exposed     " << sim.allreduce_exposed << "\n";
  }
  return kExitOk;
}

int cmd_verify(const ConfigFlags& flags, std::uint64_t seed, int iterations, double lr,
               bool as_json) {
  const PipelineConfig config = flags.to_config();
  CostProfile profile;
  const auto violations = validate_config(config, profile);
  if (!violations.empty()) return fail_invalid(violations);

  std::vector<int> dims{4};
  for (int s = 1; s < config.D; ++s) dims.push_back(3 + (s % 3));
  dims.push_back(3);

  const Schedule sched = schedgen::generate(config, profile);
  oracle::ToyModel pipelined = oracle::make_model(dims, seed);
  oracle::ToyModel reference = pipelined;
  double deviation = 0;
  for (int it = 0; it < iterations; ++it) {
    const auto batch = oracle::make_batch(
        pipelined, static_cast<int>(config.mini_batch()), seed + 17 * it);
    pipelined = oracle::run_iteration(sched, pipelined, batch, lr);
    reference = oracle::sequential_sgd(reference, batch, lr);
    deviation = std::max(deviation, oracle::max_relative_diff(pipelined, reference));
  }
  const bool async_scheme =
      config.scheme == Scheme::PipeDream || config.scheme == Scheme::PipeDream2BW;
  const bool pass = deviation <= 1e-6;
  if (as_json) {
    ojson j;
    j["scheme"] = to_string(config.scheme);
    j["iterations"] = iterations;
    j["max_relative_deviation"] = deviation;
    j["matches_minibatch_sgd"] = pass;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << (pass ? "PASS" : (async_scheme ? "DIVERGED (expected)" : "FAIL"))
              << "  max relative deviation " << deviation << " after " << iterations
              << " iterations\n";
  }
  if (!pass && !async_scheme) return kExitInternal;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pipeline-parallel schedule synthesizer, analyzer and planner"};
  app.require_subcommand(1);

  ConfigFlags sched_flags, sim_flags, verify_flags;
  std::string profile_path, out_prefix = "schedule", policy = "end-of-iteration";
  std::string plan_scheme = "chimera", plan_out, compare_profile, sim_profile;
  bool ascii = false, as_json = false, sim_ascii = false, sim_json = false;
  bool verify_json = false;
  int plan_P = 4, cmp_D = 4, cmp_N = 4, cmp_W = 1, cmp_B = 1;
  long long plan_bhat = 64;
  double eps = -1.0, lr = 0.05;
  std::uint64_t seed = 0;
  int iterations = 3;
  std::string sim_out;

  auto* sc_schedule = app.add_subcommand("schedule", "generate a schedule and Gantt chart");
  sched_flags.attach(sc_schedule);
  sc_schedule->add_option("--profile", profile_path, "cost profile JSON");
  sc_schedule->add_option("-o,--out", out_prefix, "output file prefix");
  sc_schedule->add_flag("--ascii", ascii, "print an ASCII Gantt to stdout");

  auto* sc_compare = app.add_subcommand("compare", "tabulate all schemes side by side");
  sc_compare->add_option("--profile", compare_profile, "cost profile JSON");
  sc_compare->add_option("-D,--stages", cmp_D);
  sc_compare->add_option("-N,--micro-batches", cmp_N);
  sc_compare->add_option("-W,--width", cmp_W);
  sc_compare->add_option("-B,--micro-batch-size", cmp_B);
  sc_compare->add_flag("--json", as_json, "machine-readable output");

  auto* sc_plan = app.add_subcommand("plan", "rank (W, D, B) configurations");
  sc_plan->add_option("-P,--workers", plan_P, "total worker count")->required();
  sc_plan->add_option("--bhat", plan_bhat, "mini-batch size")->required();
  sc_plan->add_option("--profile", profile_path, "cost profile JSON");
  sc_plan->add_option("--scheme", plan_scheme, "scheme to plan for");
  sc_plan->add_option("-o,--out", plan_out, "write the ranking as JSON");
  sc_plan->add_flag("--json", as_json, "machine-readable output");

  auto* sc_simulate = app.add_subcommand("simulate", "discrete-event simulation");
  sim_flags.attach(sc_simulate);
  sc_simulate->add_option("--profile", sim_profile, "cost profile JSON");
  sc_simulate->add_option("--policy", policy,
                          "end-of-iteration|eager-sync|eager-sync-opt");
  sc_simulate->add_option("--eps", eps, "eager-start overhead (default 0.02*F_t)");
  sc_simulate->add_option("-o,--out", sim_out, "timeline output prefix");
  sc_simulate->add_flag("--ascii", sim_ascii, "print an ASCII Gantt");
  sc_simulate->add_flag("--json", sim_json, "machine-readable output");

  auto* sc_verify = app.add_subcommand("verify", "check equivalence with mini-batch SGD");
  verify_flags.attach(sc_verify);
  sc_verify->add_option("--seed", seed, "rng seed");
  sc_verify->add_option("--iters", iterations, "training iterations");
  sc_verify->add_option("--lr", lr, "learning rate");
  sc_verify->add_flag("--json", verify_json, "machine-readable output");

  try {
    app.parse(argc, argv);
    if (sc_schedule->parsed())
      return cmd_schedule(sched_flags, profile_path, out_prefix, ascii);
    if (sc_compare->parsed())
      return cmd_compare(compare_profile, cmp_D, cmp_N, cmp_W, cmp_B, as_json);
    if (sc_plan->parsed())
      return cmd_plan(plan_P, plan_bhat, profile_path, plan_scheme, as_json, plan_out);
    if (sc_simulate->parsed())
      return cmd_simulate(sim_flags, sim_profile, policy, eps, sim_out, sim_json,
                          sim_ascii);
    if (sc_verify->parsed())
      return cmd_verify(verify_flags, seed, iterations, lr, verify_json);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitInvalid;
  } catch (const InvalidConfigError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const NoFeasibleConfigError& e) {
    std::cerr << "no feasible configuration: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}
