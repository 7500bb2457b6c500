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

// Time and memory cost model for one layer, one pipeline stage, and one
// training iteration under a 1F1B schedule.
//
// Times are seconds per microbatch unless the name says otherwise; memory is
// bytes per device. All functions are pure.

#ifndef HYPLAN_COSTMODEL_HPP_
#define HYPLAN_COSTMODEL_HPP_

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "hyplan/collectives.hpp"
#include "hyplan/error.hpp"
#include "hyplan/profiles.hpp"
#include "hyplan/strategy.hpp"

namespace hyplan {

// Backward pass costs this many forward passes.
constexpr double kBackwardForwardRatio = 2.0;

struct TimeBreakdown {
  double fwd_compute = 0.0;
  double bwd_compute = 0.0;
  double recompute_extra = 0.0;
  double tp_comm = 0.0;  // two forward and two backward collectives
  double zero3_param_gather = 0.0;

  double total() const {
    return fwd_compute + bwd_compute + recompute_extra + tp_comm +
           zero3_param_gather;
  }
  // Share of the microbatch spent in the forward pass.
  double forward_part() const {
    return fwd_compute + 0.5 * tp_comm + 0.5 * zero3_param_gather;
  }
  double backward_part() const {
    return bwd_compute + 0.5 * tp_comm + 0.5 * zero3_param_gather;
  }
};

struct MemoryBreakdown {
  double param_bytes = 0.0;
  double grad_bytes = 0.0;
  double optimizer_bytes = 0.0;
  double activation_bytes = 0.0;  // includes the in-flight multiplier

  double model_state_bytes() const {
    return param_bytes + grad_bytes + optimizer_bytes;
  }
  double total() const { return model_state_bytes() + activation_bytes; }
};

struct StageCost {
  double per_microbatch_time = 0.0;
  double dp_sync_time = 0.0;  // per iteration
  double peak_memory_bytes = 0.0;
  double transition_time = 0.0;  // per microbatch, already in per_microbatch_time
  // Largest activation re-materialized by one recomputed layer during a
  // backward pass; already in peak_memory_bytes.
  double recompute_transient_bytes = 0.0;
  // Stage-boundary activation send plus gradient receive per microbatch.
  // Zero for the last stage and for a stage costed in isolation.
  double p2p_time = 0.0;
};

namespace detail {

inline void check_divisible(int microbatch, const ParallelStrategy& s) {
  if (microbatch < 1 || s.dp < 1 || microbatch % s.dp != 0) {
    throw IndivisibleMicrobatch("microbatch " + std::to_string(microbatch) +
                                " is not divisible by dp " +
                                std::to_string(s.dp));
  }
}

// Per-microbatch activation bytes of one layer on one device.
inline double activation_per_microbatch(const LayerProfile& layer,
                                        const ParallelStrategy& s,
                                        int microbatch, int seq_len,
                                        bool recompute) {
  const double tokens =
      static_cast<double>(microbatch) * seq_len / static_cast<double>(s.dp);
  const double full =
      tokens * (layer.act_shardable_bytes_per_token / s.tp +
                layer.act_replicated_bytes_per_token / (s.sp ? s.tp : 1));
  // A recomputed layer never keeps more than its full activation.
  if (recompute) return std::min(full, tokens * layer.boundary_bytes_per_token);
  return full;
}

}  // namespace detail

inline TimeBreakdown layer_time(const LayerProfile& layer,
                                const ParallelStrategy& s, int microbatch,
                                int seq_len, int hidden_size,
                                const ClusterProfile& cluster,
                                const TrainingConfig& training) {
  detail::check_divisible(microbatch, s);
  const double mb = microbatch;
  const double seq = seq_len;
  const double tokens = mb * seq;

  TimeBreakdown t;
  t.fwd_compute =
      (layer.flops_per_token * tokens + layer.flops_per_token_sq * mb * seq * seq) /
      (static_cast<double>(s.tp) * s.dp * cluster.device_flops);
  t.bwd_compute = kBackwardForwardRatio * t.fwd_compute;

  const CommGroup tp_group = make_group(s.tp, 1, cluster);
  const double hidden_bytes = training.bytes_per_param * hidden_size;
  t.tp_comm = 4.0 * all_reduce_time(tp_group, 2.0 * tokens * hidden_bytes / s.dp,
                                    cluster);
  if (s.recompute) t.recompute_extra = t.fwd_compute + 0.5 * t.tp_comm;

  if (s.zero_stage == 3) {
    const CommGroup dp_group = make_group(s.dp, s.tp, cluster);
    t.zero3_param_gather =
        2.0 * all_gather_time(dp_group,
                              training.bytes_per_param *
                                  static_cast<double>(layer.param_count) / s.tp,
                              cluster);
  }
  return t;
}

inline MemoryBreakdown layer_memory(const LayerProfile& layer,
                                    const ParallelStrategy& s, int microbatch,
                                    int seq_len, int in_flight,
                                    const TrainingConfig& training) {
  if (in_flight < 1) throw ValidationError("in_flight must be >= 1");
  detail::check_divisible(microbatch, s);
  const double sharded_params = static_cast<double>(layer.param_count) / s.tp;
  MemoryBreakdown m;
  m.param_bytes = training.bytes_per_param * sharded_params /
                  (s.zero_stage >= 3 ? s.dp : 1);
  m.grad_bytes = training.bytes_per_grad * sharded_params /
                 (s.zero_stage >= 2 ? s.dp : 1);
  m.optimizer_bytes = training.optimizer_bytes_per_param * sharded_params /
                      (s.zero_stage >= 1 ? s.dp : 1);
  m.activation_bytes =
      in_flight * detail::activation_per_microbatch(layer, s, microbatch,
                                                    seq_len, s.recompute);
  return m;
}

// Extra bytes held while a recomputed layer's activations are rebuilt for
// its backward pass: the full activation minus the retained boundary.
inline double recompute_transient_bytes(const LayerProfile& layer,
                                        const ParallelStrategy& s,
                                        int microbatch, int seq_len) {
  if (!s.recompute) return 0.0;
  detail::check_divisible(microbatch, s);
  const double full =
      detail::activation_per_microbatch(layer, s, microbatch, seq_len, false);
  const double kept =
      detail::activation_per_microbatch(layer, s, microbatch, seq_len, true);
  return std::max(0.0, full - kept);
}

// Gradient (and, with ZeRO, parameter) synchronization of one layer per
// iteration, after overlap with compute.
inline double layer_dp_sync_time(const LayerProfile& layer,
                                 const ParallelStrategy& s,
                                 const ClusterProfile& cluster,
                                 const TrainingConfig& training) {
  const CommGroup dp_group = make_group(s.dp, s.tp, cluster);
  const double sharded_params = static_cast<double>(layer.param_count) / s.tp;
  double t = 0.0;
  if (s.zero_stage == 0) {
    t = all_reduce_time(dp_group, training.bytes_per_grad * sharded_params,
                        cluster);
  } else {
    t = reduce_scatter_time(dp_group, training.bytes_per_grad * sharded_params,
                            cluster) +
        all_gather_time(dp_group, training.bytes_per_param * sharded_params,
                        cluster);
  }
  return t * (1.0 - training.comm_overlap_fraction);
}

// Redistribution between adjacent layers with different tensor layouts,
// bounded by an all-gather of the boundary tensor over the stage.
inline double transition_time(const ParallelStrategy& prev,
                              const ParallelStrategy& next,
                              double layer_boundary_bytes,
                              const CommGroup& stage_group,
                              const ClusterProfile& cluster) {
  if (layer_boundary_bytes < 0) {
    throw ValidationError("layer boundary bytes must be >= 0");
  }
  if (prev.same_layout(next)) return 0.0;
  return all_gather_time(stage_group, layer_boundary_bytes, cluster);
}

// Bytes of the tensor entering `layer` for one microbatch.
inline double boundary_tensor_bytes(const LayerProfile& layer, int microbatch,
                                    int seq_len) {
  return layer.boundary_bytes_per_token * static_cast<double>(microbatch) *
         seq_len;
}

// In-flight microbatches held by a stage under 1F1B (warmup depth).
inline int in_flight_microbatches(int stage_index, int pp, int n_microbatches) {
  return std::min(n_microbatches, pp - stage_index);
}

struct LayerRange {
  int begin = 0;
  int end = 0;  // exclusive

  int size() const { return end - begin; }
  bool operator==(const LayerRange&) const = default;
};

// Aggregates the layers [range.begin, range.end) of `model` executed with
// `strategies` (one per layer of the range).
inline StageCost stage_cost(const ModelProfile& model, LayerRange range,
                            std::span<const ParallelStrategy> strategies,
                            int stage_index, int pp, int microbatch,
                            int n_microbatches, const ClusterProfile& cluster,
                            const TrainingConfig& training,
                            bool transitions = true) {
  if (range.size() < 1 || range.begin < 0 || range.end > model.n_layers) {
    throw ValidationError("stage layer range is empty or out of bounds");
  }
  if (static_cast<int>(strategies.size()) != range.size()) {
    throw ValidationError("stage needs one strategy per layer");
  }
  if (n_microbatches < 1) throw ValidationError("n_microbatches must be >= 1");
  if (stage_index < 0 || stage_index >= pp) {
    throw ValidationError("stage_index out of range");
  }
  const int devices = strategies.front().devices();
  for (const auto& s : strategies) {
    if (s.devices() != devices) {
      throw InconsistentStrategy("strategies of one stage use different "
                                 "device counts");
    }
  }
  const int in_flight = in_flight_microbatches(stage_index, pp, n_microbatches);
  const CommGroup stage_group = make_group(devices, 1, cluster);

  StageCost out;
  double layer_sum = 0.0;
  double state_and_act = 0.0;
  for (int i = 0; i < range.size(); ++i) {
    const LayerProfile& layer = model.layers[range.begin + i];
    const ParallelStrategy& s = strategies[i];
    layer_sum += layer_time(layer, s, microbatch, model.seq_len,
                            model.hidden_size, cluster, training)
                     .total();
    if (transitions && i > 0) {
      out.transition_time += transition_time(
          strategies[i - 1], s,
          boundary_tensor_bytes(layer, microbatch, model.seq_len), stage_group,
          cluster);
    }
    out.dp_sync_time += layer_dp_sync_time(layer, s, cluster, training);
    state_and_act +=
        layer_memory(layer, s, microbatch, model.seq_len, in_flight, training)
            .total();
    out.recompute_transient_bytes =
        std::max(out.recompute_transient_bytes,
                 recompute_transient_bytes(layer, s, microbatch, model.seq_len));
  }
  out.per_microbatch_time = layer_sum + out.transition_time;
  out.peak_memory_bytes = state_and_act + out.recompute_transient_bytes;
  return out;
}

// One-way send of the boundary tensor from stage `stage_index` to the next
// stage, whose first layer is `next_first_layer`. Neighbours sit on
// different nodes when the boundary between them is a node boundary.
inline double stage_send_time(const ModelProfile& model, int next_first_layer,
                              int microbatch, int stage_index,
                              int devices_per_stage,
                              const ClusterProfile& cluster) {
  const std::int64_t boundary_rank =
      static_cast<std::int64_t>(stage_index + 1) * devices_per_stage;
  const Span span = boundary_rank % cluster.devices_per_node == 0
                        ? Span::kInterNode
                        : Span::kIntraNode;
  return p2p_time(boundary_tensor_bytes(model.layers[next_first_layer],
                                        microbatch, model.seq_len),
                  cluster, span);
}

// 1F1B makespan estimate: (m - 1) * slowest stage + sum of stages + the
// slowest data-parallel synchronization.
inline double iteration_time(std::span<const StageCost> stages,
                             int n_microbatches) {
  double slowest = 0.0;
  double sum = 0.0;
  double sync = 0.0;
  for (const auto& s : stages) {
    const double x = s.per_microbatch_time + s.p2p_time;
    slowest = std::max(slowest, x);
    sum += x;
    sync = std::max(sync, s.dp_sync_time);
  }
  return (n_microbatches - 1) * slowest + sum + sync;
}

}  // namespace hyplan

#endif  // HYPLAN_COSTMODEL_HPP_
