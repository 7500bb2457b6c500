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

// Hardware and model profiles consumed by the cost model.
//
// Profiles are plain values. They are produced either by parsing a profile
// file (see the JSON helpers at the bottom) or analytically by the
// synth_* functions. Every constructor path ends in validate(), so code that
// holds a profile may rely on its invariants.

#ifndef HYPLAN_PROFILES_HPP_
#define HYPLAN_PROFILES_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hyplan/error.hpp"
#include "hyplan/json_io.hpp"

namespace hyplan {

constexpr bool is_power_of_two(std::int64_t v) {
  return v > 0 && (v & (v - 1)) == 0;
}

enum class Span { kIntraNode, kInterNode };

inline const char* to_string(Span span) {
  return span == Span::kIntraNode ? "intra_node" : "inter_node";
}

inline Span span_from_string(const std::string& s) {
  if (s == "intra_node") return Span::kIntraNode;
  if (s == "inter_node") return Span::kInterNode;
  throw ValidationError("span must be \"intra_node\" or \"inter_node\", got \"" +
                        s + "\"");
}

struct BandwidthEntry {
  Span span = Span::kIntraNode;
  int group_size = 2;
  double bus_bandwidth = 0.0;  // bytes/s
  double latency = 0.0;        // s

  bool operator==(const BandwidthEntry&) const = default;
};

struct ClusterProfile {
  int n_devices = 1;
  int devices_per_node = 1;
  double device_flops = 0.0;
  std::int64_t device_memory_bytes = 0;
  double memory_reserve_fraction = 0.0;
  std::vector<BandwidthEntry> bandwidth_table;

  // Bytes per device available to model states and activations.
  double memory_budget() const {
    return static_cast<double>(device_memory_bytes) *
           (1.0 - memory_reserve_fraction);
  }

  bool operator==(const ClusterProfile&) const = default;
};

struct LayerProfile {
  std::int64_t param_count = 0;
  double flops_per_token = 0.0;
  double flops_per_token_sq = 0.0;
  double act_shardable_bytes_per_token = 0.0;
  double act_replicated_bytes_per_token = 0.0;
  double boundary_bytes_per_token = 0.0;

  bool operator==(const LayerProfile&) const = default;
};

struct ModelProfile {
  int n_layers = 0;
  int hidden_size = 0;
  int seq_len = 0;
  std::vector<LayerProfile> layers;

  bool operator==(const ModelProfile&) const = default;
};

struct TrainingConfig {
  int global_batch = 1;
  double bytes_per_param = 2.0;
  double bytes_per_grad = 2.0;
  double optimizer_bytes_per_param = 12.0;
  double comm_overlap_fraction = 0.0;

  bool operator==(const TrainingConfig&) const = default;
};

struct Bandwidth {
  double bus_bandwidth;
  double latency;
};

// Exact (span, group_size) hit if present, otherwise the entry with the
// largest group_size <= requested for that span.
inline Bandwidth lookup_bandwidth(const ClusterProfile& cluster, Span span,
                                  int group_size) {
  if (group_size < 2 || !is_power_of_two(group_size)) {
    throw ValidationError("lookup_bandwidth: group_size must be a power of "
                          "two >= 2, got " + std::to_string(group_size));
  }
  const BandwidthEntry* best = nullptr;
  for (const auto& e : cluster.bandwidth_table) {
    if (e.span != span || e.group_size > group_size) continue;
    if (best == nullptr || e.group_size > best->group_size) best = &e;
  }
  if (best == nullptr) {
    throw NoBandwidthEntry(std::string("no ") + to_string(span) +
                           " bandwidth entry with group_size <= " +
                           std::to_string(group_size));
  }
  return {best->bus_bandwidth, best->latency};
}

inline void validate(const ClusterProfile& c) {
  if (!is_power_of_two(c.n_devices)) {
    throw ValidationError("n_devices must be a power of two");
  }
  if (!is_power_of_two(c.devices_per_node)) {
    throw ValidationError("devices_per_node must be a power of two");
  }
  if (c.devices_per_node > c.n_devices) {
    throw ValidationError("devices_per_node must be <= n_devices");
  }
  if (!(c.device_flops > 0.0)) {
    throw ValidationError("device_flops must be > 0");
  }
  if (c.device_memory_bytes <= 0) {
    throw ValidationError("device_memory_bytes must be > 0");
  }
  if (!(c.memory_reserve_fraction >= 0.0 && c.memory_reserve_fraction < 1.0)) {
    throw ValidationError("memory_reserve_fraction must be in [0, 1)");
  }
  for (std::size_t i = 0; i < c.bandwidth_table.size(); ++i) {
    const auto& e = c.bandwidth_table[i];
    const std::string at = "bandwidth_table[" + std::to_string(i) + "]";
    if (e.group_size < 2) {
      throw ValidationError(at + ": group_size must be >= 2");
    }
    if (!(e.bus_bandwidth > 0.0)) {
      throw ValidationError(at + ": bus_bandwidth must be > 0");
    }
    if (!(e.latency >= 0.0)) {
      throw ValidationError(at + ": latency must be >= 0");
    }
    for (std::size_t k = 0; k < i; ++k) {
      const auto& o = c.bandwidth_table[k];
      if (o.span == e.span && o.group_size == e.group_size) {
        throw ValidationError(at + ": duplicate entry for (" +
                              to_string(e.span) + ", " +
                              std::to_string(e.group_size) + ")");
      }
    }
  }
  // Fallback resolves every larger size once the size-2 entry of a span
  // exists, so these two lookups cover every group the planner can form.
  try {
    if (c.devices_per_node >= 2) lookup_bandwidth(c, Span::kIntraNode, 2);
    if (c.n_devices > c.devices_per_node) {
      lookup_bandwidth(c, Span::kInterNode, 2);
    }
  } catch (const NoBandwidthEntry& e) {
    throw ValidationError(std::string("bandwidth_table incomplete: ") +
                          e.what());
  }
}

inline void validate(const LayerProfile& l, const std::string& where) {
  if (l.param_count < 0 || l.flops_per_token < 0 ||
      l.flops_per_token_sq < 0 || l.act_shardable_bytes_per_token < 0 ||
      l.act_replicated_bytes_per_token < 0 || l.boundary_bytes_per_token < 0) {
    throw ValidationError(where + ": all layer fields must be >= 0");
  }
  if (l.boundary_bytes_per_token > l.act_shardable_bytes_per_token +
                                       l.act_replicated_bytes_per_token) {
    throw ValidationError(where + ": boundary_bytes_per_token exceeds the "
                          "layer's total activation bytes per token");
  }
}

inline void validate(const ModelProfile& m) {
  if (m.n_layers < 1) throw ValidationError("n_layers must be >= 1");
  if (m.hidden_size < 1) throw ValidationError("hidden_size must be >= 1");
  if (m.seq_len < 1) throw ValidationError("seq_len must be >= 1");
  if (static_cast<int>(m.layers.size()) != m.n_layers) {
    throw ValidationError("layers must have n_layers entries");
  }
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    validate(m.layers[i], "layers[" + std::to_string(i) + "]");
  }
}

inline void validate(const TrainingConfig& t) {
  if (!is_power_of_two(t.global_batch)) {
    throw ValidationError("global_batch must be a power of two >= 1");
  }
  if (!(t.bytes_per_param > 0 && t.bytes_per_grad > 0 &&
        t.optimizer_bytes_per_param > 0)) {
    throw ValidationError("byte multipliers must be > 0");
  }
  if (!(t.comm_overlap_fraction >= 0.0 && t.comm_overlap_fraction <= 1.0)) {
    throw ValidationError("comm_overlap_fraction must be in [0, 1]");
  }
}

// Dense Transformer block with fused QKV, output projection, a 4h MLP, biases
// and two layer norms. Attention scores are not kept (flash attention).
inline LayerProfile synth_transformer_layer(int hidden_size) {
  if (hidden_size < 1) throw ValidationError("hidden_size must be >= 1");
  const auto h = static_cast<std::int64_t>(hidden_size);
  const double hd = static_cast<double>(hidden_size);
  LayerProfile l;
  l.param_count = 12 * h * h + 13 * h;
  l.flops_per_token = 2.0 * static_cast<double>(l.param_count);
  l.flops_per_token_sq = 4.0 * hd;
  l.act_shardable_bytes_per_token = 24.0 * hd;
  l.act_replicated_bytes_per_token = 10.0 * hd;
  l.boundary_bytes_per_token = 2.0 * hd;
  return l;
}

inline ModelProfile synth_transformer_profile(int n_layers, int hidden_size,
                                              int seq_len) {
  if (n_layers < 1 || hidden_size < 1 || seq_len < 1) {
    throw ValidationError(
        "synth_transformer_profile: arguments must be positive");
  }
  ModelProfile m;
  m.n_layers = n_layers;
  m.hidden_size = hidden_size;
  m.seq_len = seq_len;
  m.layers.assign(static_cast<std::size_t>(n_layers),
                  synth_transformer_layer(hidden_size));
  validate(m);
  return m;
}

struct ClusterSynthOptions {
  int n_devices = 8;
  int devices_per_node = 8;
  double device_flops = 1.5e14;
  std::int64_t device_memory_bytes = 80LL << 30;
  double memory_reserve_fraction = 0.1;
  double intra_bandwidth = 2.0e11;
  double intra_latency = 5e-6;
  double inter_bandwidth = 2.5e10;
  double inter_latency = 1e-5;
};

// Two-tier cluster with one entry per power-of-two group size on each tier.
inline ClusterProfile synth_cluster_profile(const ClusterSynthOptions& o) {
  ClusterProfile c;
  c.n_devices = o.n_devices;
  c.devices_per_node = o.devices_per_node;
  c.device_flops = o.device_flops;
  c.device_memory_bytes = o.device_memory_bytes;
  c.memory_reserve_fraction = o.memory_reserve_fraction;
  for (int g = 2; g <= o.devices_per_node; g *= 2) {
    c.bandwidth_table.push_back(
        {Span::kIntraNode, g, o.intra_bandwidth, o.intra_latency});
  }
  if (o.n_devices > o.devices_per_node) {
    for (int g = 2; g <= o.n_devices; g *= 2) {
      c.bandwidth_table.push_back(
          {Span::kInterNode, g, o.inter_bandwidth, o.inter_latency});
    }
  }
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------
// Profile files: one JSON object with any of "cluster", "model", "training".

inline Json to_json(const ClusterProfile& c) {
  Json table = Json::array();
  for (const auto& e : c.bandwidth_table) {
    table.push_back({{"span", to_string(e.span)},
                     {"group_size", e.group_size},
                     {"bus_bandwidth", e.bus_bandwidth},
                     {"latency", e.latency}});
  }
  return {{"n_devices", c.n_devices},
          {"devices_per_node", c.devices_per_node},
          {"device_flops", c.device_flops},
          {"device_memory_bytes", c.device_memory_bytes},
          {"memory_reserve_fraction", c.memory_reserve_fraction},
          {"bandwidth_table", std::move(table)}};
}

inline Json to_json(const LayerProfile& l) {
  return {{"param_count", l.param_count},
          {"flops_per_token", l.flops_per_token},
          {"flops_per_token_sq", l.flops_per_token_sq},
          {"act_shardable_bytes_per_token", l.act_shardable_bytes_per_token},
          {"act_replicated_bytes_per_token", l.act_replicated_bytes_per_token},
          {"boundary_bytes_per_token", l.boundary_bytes_per_token}};
}

inline Json to_json(const ModelProfile& m) {
  Json layers = Json::array();
  for (const auto& l : m.layers) layers.push_back(to_json(l));
  return {{"n_layers", m.n_layers},
          {"hidden_size", m.hidden_size},
          {"seq_len", m.seq_len},
          {"layers", std::move(layers)}};
}

inline Json to_json(const TrainingConfig& t) {
  return {{"global_batch", t.global_batch},
          {"bytes_per_param", t.bytes_per_param},
          {"bytes_per_grad", t.bytes_per_grad},
          {"optimizer_bytes_per_param", t.optimizer_bytes_per_param},
          {"comm_overlap_fraction", t.comm_overlap_fraction}};
}

namespace detail {

inline int checked_int(FieldReader& r, const std::string& key) {
  const std::int64_t v = r.integer(key);
  if (v < INT32_MIN || v > INT32_MAX) {
    throw ValidationError(r.where() + ": '" + key + "' out of range");
  }
  return static_cast<int>(v);
}

}  // namespace detail

inline ClusterProfile cluster_from_json(const Json& j, bool lenient) {
  FieldReader r(j, "cluster", lenient);
  ClusterProfile c;
  c.n_devices = detail::checked_int(r, "n_devices");
  c.devices_per_node = detail::checked_int(r, "devices_per_node");
  c.device_flops = r.number("device_flops");
  c.device_memory_bytes = r.integer("device_memory_bytes");
  c.memory_reserve_fraction = r.number("memory_reserve_fraction");
  const Json& table = r.array("bandwidth_table");
  for (std::size_t i = 0; i < table.size(); ++i) {
    FieldReader er(table[i], "cluster.bandwidth_table[" + std::to_string(i) +
                                 "]", lenient);
    BandwidthEntry e;
    e.span = span_from_string(er.string("span"));
    e.group_size = detail::checked_int(er, "group_size");
    e.bus_bandwidth = er.number("bus_bandwidth");
    e.latency = er.number("latency");
    er.finish();
    c.bandwidth_table.push_back(e);
  }
  r.finish();
  validate(c);
  return c;
}

inline LayerProfile layer_from_json(const Json& j, const std::string& where,
                                    bool lenient) {
  FieldReader r(j, where, lenient);
  LayerProfile l;
  l.param_count = r.integer("param_count");
  l.flops_per_token = r.number("flops_per_token");
  l.flops_per_token_sq = r.number("flops_per_token_sq");
  l.act_shardable_bytes_per_token = r.number("act_shardable_bytes_per_token");
  l.act_replicated_bytes_per_token = r.number("act_replicated_bytes_per_token");
  l.boundary_bytes_per_token = r.number("boundary_bytes_per_token");
  r.finish();
  return l;
}

inline ModelProfile model_from_json(const Json& j, bool lenient) {
  FieldReader r(j, "model", lenient);
  ModelProfile m;
  m.n_layers = detail::checked_int(r, "n_layers");
  m.hidden_size = detail::checked_int(r, "hidden_size");
  m.seq_len = detail::checked_int(r, "seq_len");
  const Json& layers = r.array("layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    m.layers.push_back(layer_from_json(
        layers[i], "model.layers[" + std::to_string(i) + "]", lenient));
  }
  r.finish();
  validate(m);
  return m;
}

inline TrainingConfig training_from_json(const Json& j, bool lenient) {
  FieldReader r(j, "training", lenient);
  TrainingConfig t;
  t.global_batch = detail::checked_int(r, "global_batch");
  t.bytes_per_param = r.number_or("bytes_per_param", t.bytes_per_param);
  t.bytes_per_grad = r.number_or("bytes_per_grad", t.bytes_per_grad);
  t.optimizer_bytes_per_param =
      r.number_or("optimizer_bytes_per_param", t.optimizer_bytes_per_param);
  t.comm_overlap_fraction =
      r.number_or("comm_overlap_fraction", t.comm_overlap_fraction);
  r.finish();
  validate(t);
  return t;
}

// Contents of one profile file. At least one section is present.
struct ProfileFile {
  std::optional<ClusterProfile> cluster;
  std::optional<ModelProfile> model;
  std::optional<TrainingConfig> training;
};

inline ProfileFile profile_file_from_json(const Json& j, bool lenient) {
  FieldReader top(j, "profile file", lenient);
  ProfileFile f;
  if (top.has("cluster")) f.cluster = cluster_from_json(top.at("cluster"), lenient);
  if (top.has("model")) f.model = model_from_json(top.at("model"), lenient);
  if (top.has("training")) {
    f.training = training_from_json(top.at("training"), lenient);
  }
  top.finish();
  if (!f.cluster && !f.model && !f.training) {
    throw ValidationError(
        "profile file has none of \"cluster\", \"model\", \"training\"");
  }
  return f;
}

inline ProfileFile load_profile_file(const std::string& path,
                                     bool lenient = false) {
  return profile_file_from_json(read_json_file(path), lenient);
}

inline ClusterProfile load_cluster_profile(const std::string& path,
                                           bool lenient = false) {
  auto f = load_profile_file(path, lenient);
  if (!f.cluster) throw ValidationError(path + ": no \"cluster\" section");
  return *f.cluster;
}

inline ModelProfile load_model_profile(const std::string& path,
                                       bool lenient = false) {
  auto f = load_profile_file(path, lenient);
  if (!f.model) throw ValidationError(path + ": no \"model\" section");
  return *f.model;
}

inline TrainingConfig load_training_config(const std::string& path,
                                           bool lenient = false) {
  auto f = load_profile_file(path, lenient);
  if (!f.training) throw ValidationError(path + ": no \"training\" section");
  return *f.training;
}

// Canonical text: sorted keys, 17-significant-digit floats.
inline std::string to_profile_text(const ProfileFile& f) {
  Json j = Json::object();
  if (f.cluster) j["cluster"] = to_json(*f.cluster);
  if (f.model) j["model"] = to_json(*f.model);
  if (f.training) j["training"] = to_json(*f.training);
  return to_canonical_string(j);
}

inline void save_profile_file(const std::string& path, const ProfileFile& f) {
  write_text_file(path, to_profile_text(f));
}

}  // namespace hyplan

#endif  // HYPLAN_PROFILES_HPP_
