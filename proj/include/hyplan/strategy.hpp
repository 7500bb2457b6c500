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

// Per-layer hybrid-parallel strategy and the decision-tree enumeration of the
// strategy space for one pipeline stage.

#ifndef HYPLAN_STRATEGY_HPP_
#define HYPLAN_STRATEGY_HPP_

#include <optional>
#include <string>
#include <vector>

#include "hyplan/error.hpp"
#include "hyplan/json_io.hpp"
#include "hyplan/profiles.hpp"

namespace hyplan {

struct ParallelStrategy {
  int tp = 1;
  int dp = 1;
  int zero_stage = 0;  // 3 is fully sharded data parallelism
  bool sp = false;
  bool recompute = false;

  bool operator==(const ParallelStrategy&) const = default;

  // Tensor layout seen by the neighbouring layers; recompute and the ZeRO
  // stage do not change it.
  bool same_layout(const ParallelStrategy& o) const {
    return tp == o.tp && dp == o.dp && sp == o.sp;
  }

  int devices() const { return tp * dp; }
};

inline std::string to_string(const ParallelStrategy& s) {
  return "(tp=" + std::to_string(s.tp) + ",dp=" + std::to_string(s.dp) +
         ",z=" + std::to_string(s.zero_stage) + ",sp=" + (s.sp ? "1" : "0") +
         ",rc=" + (s.recompute ? "1" : "0") + ")";
}

struct StrategyConstraints {
  bool allow_internode_tp = false;
  std::vector<int> allowed_zero_stages{0, 1, 2, 3};
  std::optional<bool> force_recompute;

  bool zero_allowed(int z) const {
    for (int a : allowed_zero_stages) {
      if (a == z) return true;
    }
    return false;
  }
};

inline void validate(const StrategyConstraints& c) {
  for (int z : c.allowed_zero_stages) {
    if (z < 0 || z > 3) {
      throw ValidationError("allowed_zero_stages must be a subset of {0,1,2,3}");
    }
  }
  if (!c.zero_allowed(0)) {
    throw ValidationError("allowed_zero_stages must contain 0");
  }
}

// Returns the list of violated invariants; empty when the strategy is valid
// for a stage of `devices_per_stage` devices.
inline std::vector<std::string> strategy_violations(const ParallelStrategy& s,
                                                    int devices_per_stage) {
  std::vector<std::string> out;
  if (!is_power_of_two(s.tp)) out.push_back("tp must be a power of two");
  if (!is_power_of_two(s.dp)) out.push_back("dp must be a power of two");
  if (s.tp * s.dp != devices_per_stage) {
    out.push_back("tp*dp = " + std::to_string(s.tp * s.dp) +
                  " != devices_per_stage " + std::to_string(devices_per_stage));
  }
  if (s.zero_stage < 0 || s.zero_stage > 3) {
    out.push_back("zero_stage must be in {0,1,2,3}");
  }
  if (s.sp && s.tp <= 1) out.push_back("sp requires tp > 1");
  if (s.zero_stage > 0 && s.dp <= 1) out.push_back("zero_stage > 0 requires dp > 1");
  return out;
}

// Decision tree: tp ascending, then zero stage ascending, then sp
// false-before-true, then recompute false-before-true. Pruned branches are
// never expanded.
inline std::vector<ParallelStrategy> enumerate_strategies(
    int devices_per_stage, const ClusterProfile& cluster,
    const StrategyConstraints& constraints) {
  if (!is_power_of_two(devices_per_stage)) {
    throw InvalidDeviceCount("devices_per_stage must be a power of two >= 1, got " +
                             std::to_string(devices_per_stage));
  }
  if (devices_per_stage > cluster.n_devices) {
    throw InvalidDeviceCount("devices_per_stage exceeds n_devices");
  }
  validate(constraints);

  std::vector<bool> recompute_choices{false, true};
  if (constraints.force_recompute) {
    recompute_choices = {*constraints.force_recompute};
  }

  std::vector<ParallelStrategy> out;
  for (int tp = 1; tp <= devices_per_stage; tp *= 2) {
    if (tp > cluster.devices_per_node && !constraints.allow_internode_tp) {
      break;
    }
    const int dp = devices_per_stage / tp;
    for (int z = 0; z <= 3; ++z) {
      if (!constraints.zero_allowed(z)) continue;
      if (z > 0 && dp == 1) continue;
      for (bool sp : {false, true}) {
        if (sp && tp == 1) continue;
        for (bool rc : recompute_choices) {
          out.push_back({tp, dp, z, sp, rc});
        }
      }
    }
  }
  return out;
}

inline int strategy_dp_degree(const ParallelStrategy& s,
                              int devices_per_stage) {
  if (s.tp < 1 || devices_per_stage % s.tp != 0) {
    throw InconsistentStrategy("tp " + std::to_string(s.tp) +
                               " does not divide devices_per_stage " +
                               std::to_string(devices_per_stage));
  }
  const int dp = devices_per_stage / s.tp;
  if (dp != s.dp) {
    throw InconsistentStrategy("strategy dp " + std::to_string(s.dp) +
                               " != devices_per_stage / tp = " +
                               std::to_string(dp));
  }
  return dp;
}

inline OrderedJson to_json(const ParallelStrategy& s) {
  OrderedJson j;
  j["tp"] = s.tp;
  j["dp"] = s.dp;
  j["zero_stage"] = s.zero_stage;
  j["sp"] = s.sp;
  j["recompute"] = s.recompute;
  return j;
}

inline ParallelStrategy strategy_from_json(const Json& j,
                                           const std::string& where) {
  FieldReader r(j, where, false);
  ParallelStrategy s;
  s.tp = static_cast<int>(r.integer("tp"));
  s.dp = static_cast<int>(r.integer("dp"));
  s.zero_stage = static_cast<int>(r.integer("zero_stage"));
  s.sp = r.boolean("sp");
  s.recompute = r.boolean("recompute");
  r.finish();
  return s;
}

}  // namespace hyplan

#endif  // HYPLAN_STRATEGY_HPP_
