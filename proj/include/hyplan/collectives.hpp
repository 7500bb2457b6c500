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

// Alpha-beta time estimates for ring collectives and point-to-point sends.

#ifndef HYPLAN_COLLECTIVES_HPP_
#define HYPLAN_COLLECTIVES_HPP_

#include "hyplan/error.hpp"
#include "hyplan/profiles.hpp"

namespace hyplan {

struct CommGroup {
  int size = 1;
  Span span = Span::kIntraNode;
};

// Group of `size` ranks spaced `stride` apart on a contiguous rank layout
// that starts at a node boundary. Tensor-parallel and stage groups have
// stride 1; a data-parallel group has stride tp.
inline CommGroup make_group(int size, int stride, const ClusterProfile& c) {
  if (size < 1 || !is_power_of_two(size)) {
    throw InvalidDeviceCount("group size must be a power of two >= 1, got " +
                             std::to_string(size));
  }
  CommGroup g;
  g.size = size;
  g.span = (size > 1 && static_cast<std::int64_t>(size) * stride >
                            c.devices_per_node)
               ? Span::kInterNode
               : Span::kIntraNode;
  return g;
}

namespace detail {

// One ring pass: (g-1) latency hops plus (g-1)/g of the volume per rank.
inline double ring_pass_time(const CommGroup& group, double volume,
                             const ClusterProfile& cluster) {
  if (volume < 0) throw ValidationError("collective volume must be >= 0");
  if (group.size <= 1) return 0.0;
  const Bandwidth bw = lookup_bandwidth(cluster, group.span, group.size);
  const double g = group.size;
  return bw.latency * (g - 1.0) + ((g - 1.0) / g) * volume / bw.bus_bandwidth;
}

}  // namespace detail

inline double all_gather_time(const CommGroup& group, double volume,
                              const ClusterProfile& cluster) {
  return detail::ring_pass_time(group, volume, cluster);
}

inline double reduce_scatter_time(const CommGroup& group, double volume,
                                  const ClusterProfile& cluster) {
  return detail::ring_pass_time(group, volume, cluster);
}

// Ring all-reduce is a reduce-scatter followed by an all-gather.
inline double all_reduce_time(const CommGroup& group, double volume,
                              const ClusterProfile& cluster) {
  return 2.0 * detail::ring_pass_time(group, volume, cluster);
}

inline double p2p_time(double volume, const ClusterProfile& cluster,
                       Span neighbor_span) {
  if (volume < 0) throw ValidationError("p2p volume must be >= 0");
  const Bandwidth bw = lookup_bandwidth(cluster, neighbor_span, 2);
  return bw.latency + volume / bw.bus_bandwidth;
}

}  // namespace hyplan

#endif  // HYPLAN_COLLECTIVES_HPP_
