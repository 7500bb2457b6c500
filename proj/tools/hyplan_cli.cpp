/* Copyright 2026 The hyplan Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// hyplan command line: synth-profile, search, simulate, report, validate.
//
// Exit codes: 0 ok, 2 usage/parse/validation, 3 I/O, 4 no feasible plan,
// 5 invalid plan.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "hyplan/error.hpp"
#include "hyplan/json_io.hpp"
#include "hyplan/pipesim.hpp"
#include "hyplan/plan.hpp"
#include "hyplan/profiles.hpp"
#include "hyplan/report.hpp"
#include "hyplan/search.hpp"

namespace {

using namespace hyplan;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitInfeasible = 4;
constexpr int kExitInvalidPlan = 5;

struct InputOptions {
  std::string cluster;
  std::string model;
  std::string training;
  bool lenient = false;
  std::string transitions = "on";
};

struct Inputs {
  ClusterProfile cluster;
  ModelProfile model;
  TrainingConfig training;
};

void add_input_options(CLI::App* cmd, InputOptions& o) {
  cmd->add_option("--cluster", o.cluster, "cluster profile JSON")->required();
  cmd->add_option("--model", o.model, "model profile JSON")->required();
  cmd->add_option("--training", o.training,
                  "training config JSON (default: the \"training\" section of "
                  "the model or cluster file)");
  cmd->add_flag("--lenient", o.lenient, "ignore unknown keys in profiles");
  cmd->add_option("--transitions", o.transitions,
                  "charge layout transitions between layers")
      ->check(CLI::IsMember({"on", "off"}));
}

Inputs load_inputs(const InputOptions& o) {
  Inputs in;
  const ProfileFile cluster_file = load_profile_file(o.cluster, o.lenient);
  if (!cluster_file.cluster) {
    throw ValidationError(o.cluster + ": no \"cluster\" section");
  }
  const ProfileFile model_file = load_profile_file(o.model, o.lenient);
  if (!model_file.model) {
    throw ValidationError(o.model + ": no \"model\" section");
  }
  in.cluster = *cluster_file.cluster;
  in.model = *model_file.model;
  if (!o.training.empty()) {
    in.training = load_training_config(o.training, o.lenient);
  } else if (model_file.training) {
    in.training = *model_file.training;
  } else if (cluster_file.training) {
    in.training = *cluster_file.training;
  } else {
    throw ValidationError(
        "no training config: pass --training or add a \"training\" section to "
        "the model file");
  }
  return in;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
  } else {
    write_text_file(path, text);
  }
}

// synth-profile

struct SynthOptions {
  bool model = false;
  bool cluster = false;
  int layers = 0;
  int hidden = 0;
  int seq = 0;
  int global_batch = 0;
  ClusterSynthOptions c;
  std::string output;
};

int run_synth(const SynthOptions& o, CLI::App* cmd) {
  if (!o.model && !o.cluster) {
    std::cerr << "synth-profile: pass --model and/or --cluster\n"
              << cmd->help();
    return kExitUsage;
  }
  ProfileFile f;
  if (o.model) {
    if (o.layers <= 0 || o.hidden <= 0 || o.seq <= 0) {
      std::cerr << "synth-profile --model requires --layers, --hidden and "
                   "--seq\n"
                << cmd->help();
      return kExitUsage;
    }
    f.model = synth_transformer_profile(o.layers, o.hidden, o.seq);
  }
  if (o.global_batch > 0) {
    TrainingConfig t;
    t.global_batch = o.global_batch;
    validate(t);
    f.training = t;
  }
  if (o.cluster) f.cluster = synth_cluster_profile(o.c);
  emit(o.output, to_profile_text(f));
  return kExitOk;
}

// search

struct SearchOptions {
  InputOptions in;
  std::string output;
  int jobs = 1;
  int memory_buckets = 1024;
  int max_pp = 0;
  bool allow_internode_tp = false;
  double time_limit = 0.0;
};

int run_search(const SearchOptions& o) {
  const Inputs in = load_inputs(o.in);
  SearchConfig cfg;
  cfg.memory_buckets = o.memory_buckets;
  cfg.transitions = o.in.transitions == "on";
  cfg.jobs = o.jobs;
  cfg.constraints.allow_internode_tp = o.allow_internode_tp;
  if (o.max_pp > 0) cfg.max_pp = o.max_pp;
  if (o.time_limit > 0.0) cfg.time_limit_s = o.time_limit;

  const SearchResult res =
      optimize_detailed(in.model, in.cluster, in.training, cfg);
  emit(o.output, to_plan_text(res.plan));
  // Keep stdout clean for the plan when no output file is given.
  std::ostream& summary = o.output.empty() ? std::cerr : std::cout;
  summary << "time=" << format_double(res.plan.predicted_iteration_time)
          << " pp=" << res.plan.pp << " microbatch=" << res.plan.microbatch
          << "\n";
  if (!res.completed) {
    std::cerr << "warning: time limit reached; plan is the best found so far\n";
  }
  return kExitOk;
}

// simulate / report / validate

struct PlanOptions {
  InputOptions in;
  std::string plan;
  std::string output;
  std::string trace;
  std::string csv;
  bool overlap_p2p = false;
};

// Prints violations and returns true when the plan is invalid.
bool report_violations(const Plan& plan, const Inputs& in, bool transitions) {
  const auto v =
      validate_plan(plan, in.model, in.cluster, in.training, transitions);
  for (const auto& msg : v) std::cerr << "violation: " << msg << "\n";
  return !v.empty();
}

int run_simulate(const PlanOptions& o) {
  const Inputs in = load_inputs(o.in);
  const Plan plan = load_plan(o.plan);
  SimOptions opts;
  opts.overlap_p2p = o.overlap_p2p;
  opts.transitions = o.in.transitions == "on";
  if (report_violations(plan, in, opts.transitions)) return kExitInvalidPlan;
  const SimResult r = simulate(plan, in.model, in.cluster, in.training, opts);
  AnalyticComparison c;
  c.sim_makespan = r.makespan;
  c.analytic_time =
      cost_plan(plan, in.model, in.cluster, in.training, opts.transitions)
          .iteration_time;
  c.relative_gap = c.analytic_time > 0.0
                       ? (c.sim_makespan - c.analytic_time) / c.analytic_time
                       : 0.0;
  emit(o.output, to_canonical_string(to_json(r, c)));
  if (!o.trace.empty()) write_text_file(o.trace, to_trace_jsonl(r));
  return kExitOk;
}

std::string default_csv_path(const std::string& json_path) {
  const std::string ext = ".json";
  if (json_path.size() > ext.size() &&
      json_path.compare(json_path.size() - ext.size(), ext.size(), ext) == 0) {
    return json_path.substr(0, json_path.size() - ext.size()) + ".csv";
  }
  return json_path + ".csv";
}

int run_report(const PlanOptions& o) {
  const Inputs in = load_inputs(o.in);
  const Plan plan = load_plan(o.plan);
  SimOptions opts;
  opts.overlap_p2p = o.overlap_p2p;
  opts.transitions = o.in.transitions == "on";
  if (report_violations(plan, in, opts.transitions)) return kExitInvalidPlan;
  const ReportBundle r =
      build_report(plan, in.model, in.cluster, in.training, opts);
  write_text_file(o.output, to_canonical_string(to_json(r)));
  write_text_file(o.csv.empty() ? default_csv_path(o.output) : o.csv,
                  to_csv(r));
  return kExitOk;
}

int run_validate(const PlanOptions& o) {
  const Inputs in = load_inputs(o.in);
  const Plan plan = load_plan(o.plan);
  if (report_violations(plan, in, o.in.transitions == "on")) {
    return kExitInvalidPlan;
  }
  std::cout << "ok\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hyplan: hybrid-parallel training planner"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* synth_cmd =
      app.add_subcommand("synth-profile", "write synthetic profile JSON");
  synth_cmd->add_flag("--model", synth.model, "emit a transformer model");
  synth_cmd->add_flag("--cluster", synth.cluster, "emit a two-tier cluster");
  synth_cmd->add_option("--layers", synth.layers, "number of layers");
  synth_cmd->add_option("--hidden", synth.hidden, "hidden size");
  synth_cmd->add_option("--seq", synth.seq, "sequence length");
  synth_cmd->add_option("--global-batch", synth.global_batch,
                        "also emit a training section with this batch");
  synth_cmd->add_option("--devices", synth.c.n_devices, "cluster size");
  synth_cmd->add_option("--devices-per-node", synth.c.devices_per_node);
  synth_cmd->add_option("--device-flops", synth.c.device_flops);
  synth_cmd->add_option("--device-memory", synth.c.device_memory_bytes,
                        "bytes per device");
  synth_cmd->add_option("--reserve", synth.c.memory_reserve_fraction);
  synth_cmd->add_option("--intra-bw", synth.c.intra_bandwidth, "bytes/s");
  synth_cmd->add_option("--intra-latency", synth.c.intra_latency, "s");
  synth_cmd->add_option("--inter-bw", synth.c.inter_bandwidth, "bytes/s");
  synth_cmd->add_option("--inter-latency", synth.c.inter_latency, "s");
  synth_cmd->add_option("-o,--output", synth.output, "output path");

  SearchOptions search;
  auto* search_cmd = app.add_subcommand("search", "find a plan");
  add_input_options(search_cmd, search.in);
  search_cmd->add_option("-o,--output", search.output, "plan JSON path");
  search_cmd->add_option("--jobs", search.jobs, "worker threads")
      ->check(CLI::PositiveNumber);
  search_cmd->add_option("--memory-buckets", search.memory_buckets)
      ->check(CLI::Range(16, 1 << 20));
  search_cmd->add_option("--max-pp", search.max_pp)
      ->check(CLI::PositiveNumber);
  search_cmd->add_flag("--allow-internode-tp", search.allow_internode_tp);
  search_cmd->add_option("--time-limit", search.time_limit, "seconds")
      ->check(CLI::PositiveNumber);

  PlanOptions sim;
  auto* sim_cmd = app.add_subcommand("simulate", "run the 1F1B simulator");
  add_input_options(sim_cmd, sim.in);
  sim_cmd->add_option("--plan", sim.plan, "plan JSON")->required();
  sim_cmd->add_option("-o,--output", sim.output, "result JSON path");
  sim_cmd->add_option("--trace", sim.trace, "JSON-lines event trace path");
  sim_cmd->add_flag("--overlap-p2p", sim.overlap_p2p);

  PlanOptions rep;
  auto* rep_cmd = app.add_subcommand("report", "write cost breakdown");
  add_input_options(rep_cmd, rep.in);
  rep_cmd->add_option("--plan", rep.plan, "plan JSON")->required();
  rep_cmd->add_option("-o,--output", rep.output, "report JSON path")
      ->required();
  rep_cmd->add_option("--csv", rep.csv,
                      "report CSV path (default: output with .csv)");
  rep_cmd->add_flag("--overlap-p2p", rep.overlap_p2p);

  PlanOptions val;
  auto* val_cmd = app.add_subcommand("validate", "check a plan");
  add_input_options(val_cmd, val.in);
  val_cmd->add_option("--plan", val.plan, "plan JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth_cmd) return run_synth(synth, synth_cmd);
    if (*search_cmd) return run_search(search);
    if (*sim_cmd) return run_simulate(sim);
    if (*rep_cmd) return run_report(rep);
    if (*val_cmd) return run_validate(val);
  } catch (const NoFeasiblePlan& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
