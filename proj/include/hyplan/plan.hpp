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

// A complete hybrid-parallel plan: pipeline degree, microbatching, stage
// layer ranges and one strategy per layer, together with its predicted cost.

#ifndef HYPLAN_PLAN_HPP_
#define HYPLAN_PLAN_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hyplan/costmodel.hpp"
#include "hyplan/error.hpp"
#include "hyplan/json_io.hpp"
#include "hyplan/profiles.hpp"
#include "hyplan/strategy.hpp"

namespace hyplan {

constexpr int kPlanVersion = 1;

struct Plan {
  int pp = 1;
  int microbatch = 1;
  int n_microbatches = 1;
  std::vector<LayerRange> stage_ranges;
  std::vector<ParallelStrategy> layer_strategies;
  double predicted_iteration_time = 0.0;
  std::vector<std::int64_t> predicted_stage_peak_memory;
  std::vector<StageCost> cost_breakdown;

  int devices_per_stage(const ClusterProfile& c) const {
    return c.n_devices / pp;
  }
  std::span<const ParallelStrategy> stage_strategies(int stage) const {
    const LayerRange r = stage_ranges[stage];
    return std::span<const ParallelStrategy>(layer_strategies)
        .subspan(r.begin, r.size());
  }
};

// Contiguous near-equal split: floor(L/pp) layers per stage, the first
// L mod pp stages take one more.
inline std::vector<LayerRange> split_stages(int n_layers, int pp) {
  if (pp < 1 || pp > n_layers) {
    throw ValidationError("pp must be in [1, n_layers]");
  }
  std::vector<LayerRange> out;
  const int base = n_layers / pp;
  const int extra = n_layers % pp;
  int begin = 0;
  for (int i = 0; i < pp; ++i) {
    const int size = base + (i < extra ? 1 : 0);
    out.push_back({begin, begin + size});
    begin += size;
  }
  return out;
}

struct PlanCosts {
  std::vector<StageCost> stages;
  double iteration_time = 0.0;
};

// Re-costs the plan's structure from scratch. Throws on structural errors
// that make costing impossible.
inline PlanCosts cost_plan(const Plan& plan, const ModelProfile& model,
                           const ClusterProfile& cluster,
                           const TrainingConfig& training,
                           bool transitions = true) {
  if (static_cast<int>(plan.stage_ranges.size()) != plan.pp) {
    throw ValidationError("plan needs one stage range per pipeline stage");
  }
  if (static_cast<int>(plan.layer_strategies.size()) != model.n_layers) {
    throw ValidationError("plan needs one strategy per layer");
  }
  const int devices = plan.devices_per_stage(cluster);
  PlanCosts out;
  for (int i = 0; i < plan.pp; ++i) {
    StageCost sc = stage_cost(model, plan.stage_ranges[i],
                              plan.stage_strategies(i), i, plan.pp,
                              plan.microbatch, plan.n_microbatches, cluster,
                              training, transitions);
    if (i + 1 < plan.pp) {
      sc.p2p_time = 2.0 * stage_send_time(model, plan.stage_ranges[i + 1].begin,
                                          plan.microbatch, i, devices, cluster);
    }
    out.stages.push_back(sc);
  }
  out.iteration_time = iteration_time(out.stages, plan.n_microbatches);
  return out;
}

inline std::int64_t peak_to_bytes(double peak) {
  return static_cast<std::int64_t>(std::ceil(peak));
}

// Fills n_microbatches and every predicted field from the cost model.
inline void finalize_plan(Plan& plan, const ModelProfile& model,
                          const ClusterProfile& cluster,
                          const TrainingConfig& training,
                          bool transitions = true) {
  if (plan.microbatch < 1 || training.global_batch % plan.microbatch != 0) {
    throw ValidationError("microbatch must divide global_batch");
  }
  plan.n_microbatches = training.global_batch / plan.microbatch;
  PlanCosts costs = cost_plan(plan, model, cluster, training, transitions);
  plan.predicted_iteration_time = costs.iteration_time;
  plan.predicted_stage_peak_memory.clear();
  for (const auto& s : costs.stages) {
    plan.predicted_stage_peak_memory.push_back(
        peak_to_bytes(s.peak_memory_bytes));
  }
  plan.cost_breakdown = std::move(costs.stages);
}

namespace detail {

inline bool close_rel(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

}  // namespace detail

// Re-derives every plan invariant and re-costs the plan. Empty iff the plan
// is consistent with the given profiles.
inline std::vector<std::string> validate_plan(const Plan& plan,
                                              const ModelProfile& model,
                                              const ClusterProfile& cluster,
                                              const TrainingConfig& training,
                                              bool transitions = true) {
  std::vector<std::string> v;
  bool structural = true;
  auto fail = [&](std::string msg) {
    v.push_back(std::move(msg));
    structural = false;
  };

  if (!is_power_of_two(plan.pp) || plan.pp > cluster.n_devices ||
      plan.pp > model.n_layers) {
    fail("pp " + std::to_string(plan.pp) +
         " must be a power of two <= min(n_devices, n_layers)");
  }
  if (plan.microbatch < 1 ||
      static_cast<std::int64_t>(plan.microbatch) * plan.n_microbatches !=
          training.global_batch) {
    fail("microbatch * n_microbatches = " +
         std::to_string(static_cast<std::int64_t>(plan.microbatch) *
                        plan.n_microbatches) +
         " != global_batch " + std::to_string(training.global_batch));
  }

  bool partition = static_cast<int>(plan.stage_ranges.size()) == plan.pp;
  int expect = 0;
  for (const auto& r : plan.stage_ranges) {
    if (r.begin != expect || r.end <= r.begin) partition = false;
    expect = r.end;
  }
  if (expect != model.n_layers) partition = false;
  if (!partition) fail("stage_ranges not a partition of [0, n_layers)");

  if (static_cast<int>(plan.layer_strategies.size()) != model.n_layers) {
    fail("layer_strategies has " + std::to_string(plan.layer_strategies.size()) +
         " entries, expected " + std::to_string(model.n_layers));
  } else if (structural) {
    const int devices = plan.devices_per_stage(cluster);
    for (std::size_t i = 0; i < plan.layer_strategies.size(); ++i) {
      const auto& s = plan.layer_strategies[i];
      for (const auto& msg : strategy_violations(s, devices)) {
        fail("layer " + std::to_string(i) + " strategy " + to_string(s) +
             ": " + msg);
      }
      if (s.dp >= 1 && plan.microbatch % s.dp != 0) {
        fail("layer " + std::to_string(i) + ": dp " + std::to_string(s.dp) +
             " does not divide microbatch " + std::to_string(plan.microbatch));
      }
    }
  }
  if (!structural) return v;

  PlanCosts costs;
  try {
    costs = cost_plan(plan, model, cluster, training, transitions);
  } catch (const Error& e) {
    v.push_back(std::string("cannot cost plan: ") + e.what());
    return v;
  }

  const double budget = cluster.memory_budget();
  if (static_cast<int>(plan.predicted_stage_peak_memory.size()) != plan.pp) {
    v.push_back("predicted_stage_peak_memory needs one entry per stage");
  }
  if (static_cast<int>(plan.cost_breakdown.size()) != plan.pp) {
    v.push_back("cost_breakdown needs one entry per stage");
  }
  for (int i = 0; i < plan.pp; ++i) {
    const StageCost& sc = costs.stages[i];
    if (sc.peak_memory_bytes > budget) {
      v.push_back("stage " + std::to_string(i) + " peak memory " +
                  format_double(sc.peak_memory_bytes) + " exceeds budget " +
                  format_double(budget));
    }
    if (i < static_cast<int>(plan.predicted_stage_peak_memory.size()) &&
        plan.predicted_stage_peak_memory[i] !=
            peak_to_bytes(sc.peak_memory_bytes)) {
      v.push_back("stale memory: stage " + std::to_string(i) + " records " +
                  std::to_string(plan.predicted_stage_peak_memory[i]) +
                  ", re-cost gives " +
                  std::to_string(peak_to_bytes(sc.peak_memory_bytes)));
    }
    if (i < static_cast<int>(plan.cost_breakdown.size())) {
      const StageCost& rec = plan.cost_breakdown[i];
      const bool same =
          detail::close_rel(rec.per_microbatch_time, sc.per_microbatch_time, 1e-9) &&
          detail::close_rel(rec.dp_sync_time, sc.dp_sync_time, 1e-9) &&
          detail::close_rel(rec.peak_memory_bytes, sc.peak_memory_bytes, 1e-9) &&
          detail::close_rel(rec.transition_time, sc.transition_time, 1e-9) &&
          detail::close_rel(rec.recompute_transient_bytes,
                            sc.recompute_transient_bytes, 1e-9) &&
          detail::close_rel(rec.p2p_time, sc.p2p_time, 1e-9);
      if (!same) {
        v.push_back("stale cost: cost_breakdown of stage " + std::to_string(i) +
                    " differs from re-cost");
      }
    }
  }
  if (!detail::close_rel(plan.predicted_iteration_time, costs.iteration_time,
                         1e-9)) {
    v.push_back("stale cost: predicted_iteration_time " +
                format_double(plan.predicted_iteration_time) +
                " != re-cost " + format_double(costs.iteration_time));
  }
  return v;
}

// ---------------------------------------------------------------------------
// Plan JSON (keys in the documented order).

inline OrderedJson to_json(const StageCost& s) {
  OrderedJson j;
  j["per_microbatch_time"] = s.per_microbatch_time;
  j["dp_sync_time"] = s.dp_sync_time;
  j["peak_memory_bytes"] = s.peak_memory_bytes;
  j["transition_time"] = s.transition_time;
  j["recompute_transient_bytes"] = s.recompute_transient_bytes;
  j["p2p_time"] = s.p2p_time;
  return j;
}

inline OrderedJson to_json(const Plan& p) {
  OrderedJson j;
  j["version"] = kPlanVersion;
  j["pp"] = p.pp;
  j["microbatch"] = p.microbatch;
  j["n_microbatches"] = p.n_microbatches;
  OrderedJson ranges = OrderedJson::array();
  for (const auto& r : p.stage_ranges) ranges.push_back({r.begin, r.end});
  j["stage_ranges"] = std::move(ranges);
  OrderedJson strategies = OrderedJson::array();
  for (const auto& s : p.layer_strategies) strategies.push_back(to_json(s));
  j["layer_strategies"] = std::move(strategies);
  j["predicted_iteration_time"] = p.predicted_iteration_time;
  j["predicted_stage_peak_memory"] = p.predicted_stage_peak_memory;
  OrderedJson costs = OrderedJson::array();
  for (const auto& s : p.cost_breakdown) costs.push_back(to_json(s));
  j["cost_breakdown"] = std::move(costs);
  return j;
}

inline std::string to_plan_text(const Plan& p) {
  return to_canonical_string(to_json(p));
}

inline Plan plan_from_json(const Json& j) {
  FieldReader r(j, "plan", false);
  if (r.integer("version") != kPlanVersion) {
    throw ValidationError("plan: unsupported version");
  }
  Plan p;
  p.pp = static_cast<int>(r.integer("pp"));
  p.microbatch = static_cast<int>(r.integer("microbatch"));
  p.n_microbatches = static_cast<int>(r.integer("n_microbatches"));
  for (const auto& e : r.array("stage_ranges")) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
        !e[1].is_number_integer()) {
      throw ValidationError("plan: stage_ranges entries must be [int, int]");
    }
    p.stage_ranges.push_back({e[0].get<int>(), e[1].get<int>()});
  }
  const Json& strategies = r.array("layer_strategies");
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    p.layer_strategies.push_back(strategy_from_json(
        strategies[i], "plan.layer_strategies[" + std::to_string(i) + "]"));
  }
  p.predicted_iteration_time = r.number("predicted_iteration_time");
  for (const auto& e : r.array("predicted_stage_peak_memory")) {
    if (!e.is_number_integer()) {
      throw ValidationError(
          "plan: predicted_stage_peak_memory entries must be integers");
    }
    p.predicted_stage_peak_memory.push_back(e.get<std::int64_t>());
  }
  const Json& costs = r.array("cost_breakdown");
  for (std::size_t i = 0; i < costs.size(); ++i) {
    FieldReader cr(costs[i], "plan.cost_breakdown[" + std::to_string(i) + "]",
                   false);
    StageCost s;
    s.per_microbatch_time = cr.number("per_microbatch_time");
    s.dp_sync_time = cr.number("dp_sync_time");
    s.peak_memory_bytes = cr.number("peak_memory_bytes");
    s.transition_time = cr.number("transition_time");
    s.recompute_transient_bytes = cr.number("recompute_transient_bytes");
    s.p2p_time = cr.number("p2p_time");
    cr.finish();
    p.cost_breakdown.push_back(s);
  }
  r.finish();
  return p;
}

inline Plan load_plan(const std::string& path) {
  return plan_from_json(read_json_file(path));
}

inline void save_plan(const std::string& path, const Plan& p) {
  write_text_file(path, to_plan_text(p));
}

}  // namespace hyplan

#endif  // HYPLAN_PLAN_HPP_
