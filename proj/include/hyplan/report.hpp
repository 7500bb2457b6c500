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

// Machine-readable cost breakdown of a plan, for plotting and inspection.

#ifndef HYPLAN_REPORT_HPP_
#define HYPLAN_REPORT_HPP_

#include <algorithm>
#include <string>
#include <vector>

#include "hyplan/costmodel.hpp"
#include "hyplan/json_io.hpp"
#include "hyplan/pipesim.hpp"
#include "hyplan/plan.hpp"

namespace hyplan {

struct LayerReport {
  int layer = 0;
  int stage = 0;
  ParallelStrategy strategy;
  TimeBreakdown time;
  double transition_in = 0.0;  // layout change entering this layer
  double dp_sync = 0.0;
  MemoryBreakdown memory;  // with the stage's in-flight multiplier

  double total_time() const { return time.total() + transition_in; }
};

struct StageReport {
  int stage = 0;
  LayerRange range;
  double compute = 0.0;  // forward + backward + recompute
  double tp_comm = 0.0;
  double zero3 = 0.0;
  StageCost cost;
  MemoryBreakdown memory;
  double sim_peak_memory = 0.0;
};

struct ReportBundle {
  Plan plan;
  double memory_budget = 0.0;
  std::vector<LayerReport> layers;
  std::vector<StageReport> stages;
  SimResult sim;
  AnalyticComparison gap;
};

inline ReportBundle build_report(const Plan& plan, const ModelProfile& model,
                                 const ClusterProfile& cluster,
                                 const TrainingConfig& training,
                                 const SimOptions& options = {}) {
  ReportBundle r;
  r.plan = plan;
  r.memory_budget = cluster.memory_budget();
  r.sim = simulate(plan, model, cluster, training, options);
  r.gap.sim_makespan = r.sim.makespan;
  const PlanCosts costs =
      cost_plan(plan, model, cluster, training, options.transitions);
  r.gap.analytic_time = costs.iteration_time;
  r.gap.relative_gap = costs.iteration_time > 0.0
                           ? (r.sim.makespan - costs.iteration_time) /
                                 costs.iteration_time
                           : 0.0;

  const CommGroup stage_group =
      make_group(plan.devices_per_stage(cluster), 1, cluster);
  for (int i = 0; i < plan.pp; ++i) {
    StageReport sr;
    sr.stage = i;
    sr.range = plan.stage_ranges[i];
    sr.cost = costs.stages[i];
    sr.sim_peak_memory = r.sim.stage_peak_memory[i];
    const int in_flight =
        in_flight_microbatches(i, plan.pp, plan.n_microbatches);
    for (int l = sr.range.begin; l < sr.range.end; ++l) {
      LayerReport lr;
      lr.layer = l;
      lr.stage = i;
      lr.strategy = plan.layer_strategies[l];
      lr.time = layer_time(model.layers[l], lr.strategy, plan.microbatch,
                           model.seq_len, model.hidden_size, cluster, training);
      if (options.transitions && l > sr.range.begin) {
        lr.transition_in = transition_time(
            plan.layer_strategies[l - 1], lr.strategy,
            boundary_tensor_bytes(model.layers[l], plan.microbatch,
                                  model.seq_len),
            stage_group, cluster);
      }
      lr.dp_sync = layer_dp_sync_time(model.layers[l], lr.strategy, cluster,
                                      training);
      lr.memory = layer_memory(model.layers[l], lr.strategy, plan.microbatch,
                               model.seq_len, in_flight, training);
      sr.compute += lr.time.fwd_compute + lr.time.bwd_compute +
                    lr.time.recompute_extra;
      sr.tp_comm += lr.time.tp_comm;
      sr.zero3 += lr.time.zero3_param_gather;
      sr.memory.param_bytes += lr.memory.param_bytes;
      sr.memory.grad_bytes += lr.memory.grad_bytes;
      sr.memory.optimizer_bytes += lr.memory.optimizer_bytes;
      sr.memory.activation_bytes += lr.memory.activation_bytes;
      r.layers.push_back(lr);
    }
    r.stages.push_back(sr);
  }
  return r;
}

inline OrderedJson to_json(const ReportBundle& r) {
  OrderedJson j;
  OrderedJson summary;
  summary["pp"] = r.plan.pp;
  summary["microbatch"] = r.plan.microbatch;
  summary["n_microbatches"] = r.plan.n_microbatches;
  summary["predicted_iteration_time"] = r.plan.predicted_iteration_time;
  summary["memory_budget_bytes"] = r.memory_budget;
  j["summary"] = std::move(summary);

  OrderedJson layers = OrderedJson::array();
  for (const auto& l : r.layers) {
    OrderedJson o;
    o["layer"] = l.layer;
    o["stage"] = l.stage;
    o["strategy"] = to_json(l.strategy);
    o["fwd_compute"] = l.time.fwd_compute;
    o["bwd_compute"] = l.time.bwd_compute;
    o["recompute_extra"] = l.time.recompute_extra;
    o["tp_comm"] = l.time.tp_comm;
    o["zero3_param_gather"] = l.time.zero3_param_gather;
    o["transition_in"] = l.transition_in;
    o["total_time"] = l.total_time();
    o["dp_sync"] = l.dp_sync;
    o["param_bytes"] = l.memory.param_bytes;
    o["grad_bytes"] = l.memory.grad_bytes;
    o["optimizer_bytes"] = l.memory.optimizer_bytes;
    o["activation_bytes"] = l.memory.activation_bytes;
    layers.push_back(std::move(o));
  }
  j["layers"] = std::move(layers);

  OrderedJson stages = OrderedJson::array();
  for (const auto& s : r.stages) {
    OrderedJson o;
    o["stage"] = s.stage;
    o["layers"] = {s.range.begin, s.range.end};
    o["compute"] = s.compute;
    o["tp_comm"] = s.tp_comm;
    o["zero3_param_gather"] = s.zero3;
    o["transition"] = s.cost.transition_time;
    o["p2p"] = s.cost.p2p_time;
    o["dp_sync"] = s.cost.dp_sync_time;
    o["per_microbatch_time"] = s.cost.per_microbatch_time;
    o["param_bytes"] = s.memory.param_bytes;
    o["grad_bytes"] = s.memory.grad_bytes;
    o["optimizer_bytes"] = s.memory.optimizer_bytes;
    o["activation_bytes"] = s.memory.activation_bytes;
    o["recompute_transient_bytes"] = s.cost.recompute_transient_bytes;
    o["peak_memory_bytes"] = s.cost.peak_memory_bytes;
    o["sim_peak_memory_bytes"] = s.sim_peak_memory;
    stages.push_back(std::move(o));
  }
  j["stages"] = std::move(stages);

  OrderedJson sim;
  sim["makespan"] = r.sim.makespan;
  sim["analytic_time"] = r.gap.analytic_time;
  sim["relative_gap"] = r.gap.relative_gap;
  sim["bubble_fraction"] = r.sim.bubble_fraction;
  j["simulation"] = std::move(sim);
  return j;
}

// Header plus one row per layer, one per stage and a final total row.
inline std::string to_csv(const ReportBundle& r) {
  std::string out =
      "row,index,stage,tp,dp,zero_stage,sp,recompute,compute_time,"
      "tp_comm_time,zero3_time,transition_time,p2p_time,dp_sync_time,"
      "total_time,memory_bytes\n";
  auto num = [](double v) { return format_double(v); };
  for (const auto& l : r.layers) {
    const auto& s = l.strategy;
    out += "layer," + std::to_string(l.layer) + "," + std::to_string(l.stage) +
           "," + std::to_string(s.tp) + "," + std::to_string(s.dp) + "," +
           std::to_string(s.zero_stage) + "," + (s.sp ? "1" : "0") + "," +
           (s.recompute ? "1" : "0") + "," +
           num(l.time.fwd_compute + l.time.bwd_compute + l.time.recompute_extra) +
           "," + num(l.time.tp_comm) + "," + num(l.time.zero3_param_gather) +
           "," + num(l.transition_in) + ",0.0," + num(l.dp_sync) + "," +
           num(l.total_time()) + "," + num(l.memory.total()) + "\n";
  }
  for (const auto& s : r.stages) {
    out += "stage," + std::to_string(s.stage) + "," + std::to_string(s.stage) +
           ",,,,,," + num(s.compute) + "," + num(s.tp_comm) + "," +
           num(s.zero3) + "," + num(s.cost.transition_time) + "," +
           num(s.cost.p2p_time) + "," + num(s.cost.dp_sync_time) + "," +
           num(s.cost.per_microbatch_time) + "," +
           num(s.cost.peak_memory_bytes) + "\n";
  }
  double peak = 0.0;
  for (const auto& s : r.stages) peak = std::max(peak, s.cost.peak_memory_bytes);
  out += "total" + std::string(14, ',') + num(r.plan.predicted_iteration_time) + "," +
         num(peak) + "\n";
  return out;
}

}  // namespace hyplan

#endif  // HYPLAN_REPORT_HPP_
