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

// Exhaustive reference search over (pp, microbatch, strategy per layer) with
// exact memory. Only usable on toy instances; it exists to check optimize().

#ifndef HYPLAN_ORACLE_HPP_
#define HYPLAN_ORACLE_HPP_

#include <algorithm>
#include <limits>
#include <vector>

#include "hyplan/costmodel.hpp"
#include "hyplan/error.hpp"
#include "hyplan/plan.hpp"
#include "hyplan/search.hpp"

namespace hyplan {

struct OracleLimits {
  int max_layers = 4;
  int max_devices = 8;
};

inline Plan brute_force_optimize(const ModelProfile& model,
                                 const ClusterProfile& cluster,
                                 const TrainingConfig& training,
                                 const SearchConfig& cfg,
                                 OracleLimits limits = {}) {
  const int max_layers = std::min(limits.max_layers, 4);
  const int max_devices = std::min(limits.max_devices, 8);
  if (model.n_layers > max_layers || cluster.n_devices > max_devices) {
    throw OracleTooLarge("brute force is limited to " +
                         std::to_string(max_layers) + " layers and " +
                         std::to_string(max_devices) + " devices");
  }
  validate(model);
  validate(cluster);
  validate(training);

  const double budget = cluster.memory_budget();
  const int n_layers = model.n_layers;
  double best_time = std::numeric_limits<double>::infinity();
  Plan best;

  for (int pp : pipeline_degrees(model, cluster, cfg)) {
    const int devices = cluster.n_devices / pp;
    const auto ranges = split_stages(n_layers, pp);
    std::vector<int> stage_of(n_layers);
    for (int i = 0; i < pp; ++i) {
      for (int l = ranges[i].begin; l < ranges[i].end; ++l) stage_of[l] = i;
    }
    const CommGroup stage_group = make_group(devices, 1, cluster);

    for (int mb : microbatch_sizes(training)) {
      const int m = training.global_batch / mb;
      const auto cand = stage_candidates(devices, mb, cluster, cfg.constraints);
      const int n = static_cast<int>(cand.size());
      if (n == 0) continue;

      // Per-(layer, strategy) costs straight from the cost model.
      std::vector<double> time(n_layers * n), mem(n_layers * n),
          transient(n_layers * n), sync(n_layers * n);
      for (int l = 0; l < n_layers; ++l) {
        const int in_flight = in_flight_microbatches(stage_of[l], pp, m);
        for (int s = 0; s < n; ++s) {
          const auto& layer = model.layers[l];
          time[l * n + s] = layer_time(layer, cand[s], mb, model.seq_len,
                                       model.hidden_size, cluster, training)
                                .total();
          mem[l * n + s] =
              layer_memory(layer, cand[s], mb, model.seq_len, in_flight,
                           training)
                  .total();
          transient[l * n + s] =
              recompute_transient_bytes(layer, cand[s], mb, model.seq_len);
          sync[l * n + s] = layer_dp_sync_time(layer, cand[s], cluster, training);
        }
      }
      // trans[(l * n + prev) * n + next]: entering layer l.
      std::vector<double> trans(static_cast<std::size_t>(n_layers) * n * n, 0.0);
      if (cfg.transitions) {
        for (int l = 1; l < n_layers; ++l) {
          if (stage_of[l] != stage_of[l - 1]) continue;
          const double bytes =
              boundary_tensor_bytes(model.layers[l], mb, model.seq_len);
          for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) {
              trans[(static_cast<std::size_t>(l) * n + a) * n + b] =
                  transition_time(cand[a], cand[b], bytes, stage_group, cluster);
            }
          }
        }
      }
      std::vector<double> p2p(pp, 0.0);
      for (int i = 0; i + 1 < pp; ++i) {
        p2p[i] = 2.0 * stage_send_time(model, ranges[i + 1].begin, mb, i,
                                       devices, cluster);
      }

      std::vector<int> pick(n_layers, 0);
      for (;;) {
        bool fits = true;
        double slowest = 0.0, sum = 0.0, slowest_sync = 0.0;
        for (int i = 0; i < pp && fits; ++i) {
          double t = 0.0, mm = 0.0, peak_transient = 0.0, y = 0.0;
          for (int l = ranges[i].begin; l < ranges[i].end; ++l) {
            const int s = pick[l];
            t += time[l * n + s];
            if (l > ranges[i].begin) {
              t += trans[(static_cast<std::size_t>(l) * n + pick[l - 1]) * n + s];
            }
            mm += mem[l * n + s];
            peak_transient = std::max(peak_transient, transient[l * n + s]);
            y += sync[l * n + s];
          }
          if (mm + peak_transient > budget) fits = false;
          const double x = t + p2p[i];
          slowest = std::max(slowest, x);
          sum += x;
          slowest_sync = std::max(slowest_sync, y);
        }
        if (fits) {
          const double total = (m - 1) * slowest + sum + slowest_sync;
          if (total < best_time) {
            best_time = total;
            best.pp = pp;
            best.microbatch = mb;
            best.stage_ranges = ranges;
            best.layer_strategies.clear();
            for (int l = 0; l < n_layers; ++l) {
              best.layer_strategies.push_back(cand[pick[l]]);
            }
          }
        }
        int l = n_layers - 1;
        while (l >= 0 && ++pick[l] == n) pick[l--] = 0;
        if (l < 0) break;
      }
    }
  }
  if (best.layer_strategies.empty()) {
    throw NoFeasiblePlan("brute force: no assignment fits the memory budget");
  }
  finalize_plan(best, model, cluster, training, cfg.transitions);
  return best;
}

}  // namespace hyplan

#endif  // HYPLAN_ORACLE_HPP_
