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

// Discrete-event simulation of a plan under the non-interleaved 1F1B
// pipeline schedule. Durations come from the cost model; the simulator adds
// only the ordering and dependency structure, so comparing its makespan with
// iteration_time() checks the closed-form schedule estimate.

#ifndef HYPLAN_PIPESIM_HPP_
#define HYPLAN_PIPESIM_HPP_

#include <algorithm>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

#include "hyplan/costmodel.hpp"
#include "hyplan/error.hpp"
#include "hyplan/json_io.hpp"
#include "hyplan/plan.hpp"

namespace hyplan {

// Declaration order is the tie-break order for simultaneous events.
enum class EventKind { kFwd, kBwd, kRecompute, kP2pSend, kP2pRecv, kDpSync };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::kFwd: return "fwd";
    case EventKind::kBwd: return "bwd";
    case EventKind::kRecompute: return "recompute";
    case EventKind::kP2pSend: return "p2p_send";
    case EventKind::kP2pRecv: return "p2p_recv";
    case EventKind::kDpSync: return "dp_sync";
  }
  return "?";
}

struct SimEvent {
  double time = 0.0;
  int device_stage = 0;
  EventKind kind = EventKind::kFwd;
  int microbatch_id = -1;  // -1 for dp_sync
  double duration = 0.0;

  double end() const { return time + duration; }
};

struct SimResult {
  double makespan = 0.0;
  std::vector<double> stage_peak_memory;
  std::vector<SimEvent> trace;
  double bubble_fraction = 0.0;
};

struct SimOptions {
  // Let p2p sends proceed concurrently with the sender's compute.
  bool overlap_p2p = false;
  bool transitions = true;
};

// Per-stage, per-microbatch durations and memory figures fed to the event
// loop.
struct StageProgram {
  double forward = 0.0;    // includes layout transitions
  double recompute = 0.0;
  double backward = 0.0;
  double send_next = 0.0;  // one-way transfer to stage + 1
  double dp_sync = 0.0;
  double static_bytes = 0.0;
  double activation_bytes = 0.0;  // per microbatch
  double transient_bytes = 0.0;
};

inline std::vector<StageProgram> build_stage_programs(
    const Plan& plan, const ModelProfile& model, const ClusterProfile& cluster,
    const TrainingConfig& training, bool transitions) {
  const PlanCosts costs =
      cost_plan(plan, model, cluster, training, transitions);
  const int devices = plan.devices_per_stage(cluster);
  std::vector<StageProgram> out(plan.pp);
  for (int i = 0; i < plan.pp; ++i) {
    StageProgram& p = out[i];
    const LayerRange r = plan.stage_ranges[i];
    for (int l = r.begin; l < r.end; ++l) {
      const auto& s = plan.layer_strategies[l];
      const TimeBreakdown t =
          layer_time(model.layers[l], s, plan.microbatch, model.seq_len,
                     model.hidden_size, cluster, training);
      p.forward += t.forward_part();
      p.recompute += t.recompute_extra;
      p.backward += t.backward_part();
      const MemoryBreakdown m = layer_memory(
          model.layers[l], s, plan.microbatch, model.seq_len, 1, training);
      p.static_bytes += m.model_state_bytes();
      p.activation_bytes += m.activation_bytes;
    }
    p.forward += costs.stages[i].transition_time;
    p.dp_sync = costs.stages[i].dp_sync_time;
    p.transient_bytes = costs.stages[i].recompute_transient_bytes;
    if (i + 1 < plan.pp) {
      p.send_next = stage_send_time(model, plan.stage_ranges[i + 1].begin,
                                    plan.microbatch, i, devices, cluster);
    }
  }
  return out;
}

// Core event loop over explicit stage programs. Exposed separately so that
// schedules can be checked on hand-built durations.
inline SimResult simulate_programs(const std::vector<StageProgram>& stages,
                                   int n_microbatches, bool overlap_p2p) {
  const int pp = static_cast<int>(stages.size());
  const int m = n_microbatches;
  if (pp < 1 || m < 1) throw ValidationError("simulation needs pp, m >= 1");
  constexpr double kUnknown = std::numeric_limits<double>::infinity();

  struct Op {
    bool forward;
    int mb;
  };
  std::vector<std::vector<Op>> ops(pp);
  for (int i = 0; i < pp; ++i) {
    const int warmup = in_flight_microbatches(i, pp, m);
    for (int k = 0; k < warmup; ++k) ops[i].push_back({true, k});
    for (int k = 0; k < m; ++k) {
      ops[i].push_back({false, k});
      if (warmup + k < m) ops[i].push_back({true, warmup + k});
    }
  }

  // Arrival time of the activation (fwd) / gradient (bwd) for microbatch k
  // at stage i.
  std::vector<std::vector<double>> fwd_ready(pp, std::vector<double>(m, kUnknown));
  std::vector<std::vector<double>> bwd_ready(pp, std::vector<double>(m, kUnknown));
  std::fill(fwd_ready[0].begin(), fwd_ready[0].end(), 0.0);
  std::vector<double> free_at(pp, 0.0);
  std::vector<std::size_t> next(pp, 0);

  struct MemDelta {
    double time;
    double bytes;
  };
  std::vector<std::vector<MemDelta>> mem(pp);
  SimResult res;
  double compute_total = 0.0;

  auto ready_time = [&](int i) {
    const Op& op = ops[i][next[i]];
    if (op.forward) return fwd_ready[i][op.mb];
    if (i == pp - 1) return 0.0;  // own forward precedes it on this stage
    return bwd_ready[i][op.mb];
  };
  auto emit = [&](double t, int stage, EventKind kind, int mb, double d) {
    res.trace.push_back({t, stage, kind, mb, d});
  };

  std::size_t remaining = 0;
  for (const auto& o : ops) remaining += o.size();
  while (remaining > 0) {
    int pick = -1;
    double pick_start = kUnknown;
    for (int i = 0; i < pp; ++i) {
      if (next[i] >= ops[i].size()) continue;
      const double ready = ready_time(i);
      if (ready == kUnknown) continue;
      const double start = std::max(free_at[i], ready);
      if (start < pick_start) {
        pick_start = start;
        pick = i;
      }
    }
    if (pick < 0) {
      throw SchedulingDeadlock("1F1B simulation made no progress with " +
                               std::to_string(remaining) + " ops pending");
    }
    const int i = pick;
    const StageProgram& p = stages[i];
    const Op op = ops[i][next[i]++];
    --remaining;
    double t = pick_start;

    // Both transfers across the boundary (i, i+1) are timed on stage i: the
    // activation as a send, the returning gradient as a receive.
    if (op.forward && i > 0) emit(t, i, EventKind::kP2pRecv, op.mb, 0.0);
    if (!op.forward && i < pp - 1) {
      const double recv = overlap_p2p ? 0.0 : p.send_next;
      emit(t, i, EventKind::kP2pRecv, op.mb, recv);
      t += recv;
    }

    if (op.forward) {
      mem[i].push_back({t, p.activation_bytes});
      emit(t, i, EventKind::kFwd, op.mb, p.forward);
      t += p.forward;
      compute_total += p.forward;
      if (i + 1 < pp) {
        emit(t, i, EventKind::kP2pSend, op.mb, p.send_next);
        fwd_ready[i + 1][op.mb] = t + p.send_next;
        if (!overlap_p2p) t += p.send_next;
      }
    } else {
      mem[i].push_back({t, p.transient_bytes});
      if (p.recompute > 0.0) {
        emit(t, i, EventKind::kRecompute, op.mb, p.recompute);
        t += p.recompute;
        compute_total += p.recompute;
      }
      emit(t, i, EventKind::kBwd, op.mb, p.backward);
      t += p.backward;
      compute_total += p.backward;
      mem[i].push_back({t, -(p.activation_bytes + p.transient_bytes)});
      if (i > 0) {
        const double send = overlap_p2p ? stages[i - 1].send_next : 0.0;
        emit(t, i, EventKind::kP2pSend, op.mb, send);
        bwd_ready[i - 1][op.mb] = t + send;
      }
      if (next[i] == ops[i].size()) {
        emit(t, i, EventKind::kDpSync, -1, p.dp_sync);
        t += p.dp_sync;
      }
    }
    free_at[i] = t;
  }

  for (const auto& e : res.trace) res.makespan = std::max(res.makespan, e.end());

  for (int i = 0; i < pp; ++i) {
    auto& d = mem[i];
    // Releases before charges at equal times.
    std::stable_sort(d.begin(), d.end(), [](const MemDelta& a, const MemDelta& b) {
      return a.time < b.time || (a.time == b.time && a.bytes < b.bytes);
    });
    double cur = stages[i].static_bytes;
    double peak = cur;
    for (const auto& x : d) {
      cur += x.bytes;
      peak = std::max(peak, cur);
    }
    res.stage_peak_memory.push_back(peak);
  }

  std::stable_sort(res.trace.begin(), res.trace.end(),
                   [](const SimEvent& a, const SimEvent& b) {
                     return std::tie(a.time, a.device_stage, a.kind,
                                     a.microbatch_id) <
                            std::tie(b.time, b.device_stage, b.kind,
                                     b.microbatch_id);
                   });
  res.bubble_fraction =
      res.makespan > 0.0 ? 1.0 - compute_total / (pp * res.makespan) : 0.0;
  return res;
}

inline SimResult simulate(const Plan& plan, const ModelProfile& model,
                          const ClusterProfile& cluster,
                          const TrainingConfig& training,
                          const SimOptions& options = {}) {
  const auto violations =
      validate_plan(plan, model, cluster, training, options.transitions);
  if (!violations.empty()) {
    throw ValidationError("cannot simulate an invalid plan: " +
                          violations.front());
  }
  return simulate_programs(
      build_stage_programs(plan, model, cluster, training, options.transitions),
      plan.n_microbatches, options.overlap_p2p);
}

struct AnalyticComparison {
  double sim_makespan = 0.0;
  double analytic_time = 0.0;
  double relative_gap = 0.0;  // (sim - analytic) / analytic
};

inline AnalyticComparison compare_with_analytic(const Plan& plan,
                                                const ModelProfile& model,
                                                const ClusterProfile& cluster,
                                                const TrainingConfig& training,
                                                const SimOptions& options = {}) {
  AnalyticComparison c;
  c.sim_makespan = simulate(plan, model, cluster, training, options).makespan;
  c.analytic_time =
      cost_plan(plan, model, cluster, training, options.transitions)
          .iteration_time;
  c.relative_gap = c.analytic_time > 0.0
                       ? (c.sim_makespan - c.analytic_time) / c.analytic_time
                       : 0.0;
  return c;
}

inline OrderedJson to_json(const SimEvent& e) {
  OrderedJson j;
  j["time"] = e.time;
  j["device_stage"] = e.device_stage;
  j["kind"] = to_string(e.kind);
  j["microbatch_id"] = e.microbatch_id;
  j["duration"] = e.duration;
  return j;
}

// One event per line, fields in declaration order.
inline std::string to_trace_jsonl(const SimResult& r) {
  std::string out;
  for (const auto& e : r.trace) {
    out += to_compact_string(to_json(e));
    out += "\n";
  }
  return out;
}

inline OrderedJson to_json(const SimResult& r, const AnalyticComparison& c) {
  OrderedJson j;
  j["makespan"] = r.makespan;
  j["analytic_time"] = c.analytic_time;
  j["relative_gap"] = c.relative_gap;
  j["bubble_fraction"] = r.bubble_fraction;
  j["stage_peak_memory"] = r.stage_peak_memory;
  j["n_events"] = r.trace.size();
  return j;
}

}  // namespace hyplan

#endif  // HYPLAN_PIPESIM_HPP_
