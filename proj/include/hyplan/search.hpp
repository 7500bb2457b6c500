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

// Plan search: a memory-bucketed dynamic program per pipeline stage and an
// outer enumeration of pipeline degree and microbatch size.
//
// The stage program keeps, for every (layer, memory buckets used, layout of
// the last layer) state, the Pareto frontier of (per-microbatch time,
// data-parallel sync time). Iteration time is monotone in both quantities of
// every stage, so combining per-stage frontiers by enumerating the slowest
// sync value recovers the exact optimum over the bucketed feasible set.
//
// Each point carries its exact memory; buckets of width budget /
// memory_buckets only key the states, and feasibility is checked against the
// exact budget, so every emitted plan fits under exact costing. Points that
// share a state are compared on time alone, which is where bucketing loses
// optimality. The largest recompute transient of a stage is a max rather
// than a sum; it is handled by running the program once per transient cap,
// admitting only recomputed strategies whose transient fits under the cap and
// reserving the cap up front.

#ifndef HYPLAN_SEARCH_HPP_
#define HYPLAN_SEARCH_HPP_

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "hyplan/costmodel.hpp"
#include "hyplan/error.hpp"
#include "hyplan/plan.hpp"
#include "hyplan/profiles.hpp"
#include "hyplan/strategy.hpp"

namespace hyplan {

struct SearchConfig {
  int memory_buckets = 1024;
  StrategyConstraints constraints;
  bool transitions = true;
  std::optional<int> max_pp;
  std::optional<double> time_limit_s;
  int jobs = 1;
  // Upper bound on frontier points kept per DP state.
  int frontier_cap = 64;
};

inline void validate(const SearchConfig& cfg) {
  if (cfg.memory_buckets < 16) {
    throw ValidationError("memory_buckets must be >= 16");
  }
  if (cfg.max_pp && *cfg.max_pp < 1) {
    throw ValidationError("max_pp must be >= 1");
  }
  if (cfg.jobs < 1) throw ValidationError("jobs must be >= 1");
  if (cfg.frontier_cap < 2) throw ValidationError("frontier_cap must be >= 2");
  validate(cfg.constraints);
}

struct StageOption {
  double time = 0.0;     // per microbatch, transitions included
  double dp_sync = 0.0;  // per iteration
  int buckets = 0;       // memory buckets used, recompute transient included
  std::vector<ParallelStrategy> strategies;
};

struct StageFrontier {
  // Time ascending, dp_sync strictly descending.
  std::vector<StageOption> options;
  bool truncated = false;

  const StageOption& fastest() const { return options.front(); }
};

namespace detail {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct DpPoint {
  double time;
  double sync;
  double memory;
  int strategy;
  int prev;  // index into the previous layer's pool, -1 for the first layer
};

// Drops dominated points (ties keep the earliest) and thins the survivors to
// `cap`, always retaining both ends. Returns true if thinning happened.
template <class P>
bool prune_frontier(std::vector<P>& pts, int cap) {
  if (pts.size() <= 1) return false;
  std::stable_sort(pts.begin(), pts.end(), [](const P& a, const P& b) {
    return a.time < b.time || (a.time == b.time && a.sync < b.sync);
  });
  std::size_t n = 0;
  double best_sync = kInf;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].sync < best_sync) {
      best_sync = pts[i].sync;
      pts[n++] = pts[i];
    }
  }
  pts.resize(n);
  if (static_cast<int>(n) <= cap) return false;
  std::vector<P> thin;
  thin.reserve(cap);
  for (int k = 0; k < cap; ++k) {
    const std::size_t idx = static_cast<std::size_t>(
        std::llround(static_cast<double>(k) * (n - 1) / (cap - 1)));
    thin.push_back(pts[idx]);
  }
  pts = std::move(thin);
  return true;
}

struct CellCost {
  double time;
  double memory;
  double transient;
  double sync;
};

class BucketScale {
 public:
  BucketScale(double budget, int buckets)
      : unconstrained_(std::isinf(budget)),
        buckets_(unconstrained_ ? 0 : buckets),
        width_(unconstrained_ ? kInf : budget / buckets) {}

  // Smallest bucket count whose capacity covers `bytes`, at most buckets().
  int to_buckets(double bytes) const {
    if (unconstrained_ || bytes <= 0.0) return 0;
    const double q = bytes / width_;
    if (q >= buckets_) return buckets_;
    int k = static_cast<int>(std::ceil(q));
    while (k < buckets_ && static_cast<double>(k) * width_ < bytes) ++k;
    return k;
  }

  int buckets() const { return buckets_; }
  bool unconstrained() const { return unconstrained_; }

 private:
  bool unconstrained_;
  int buckets_;
  double width_;
};

struct StateRef {
  int j;
  int layout;
  int begin;
  int end;
};

}  // namespace detail

// Chooses one strategy per layer of `range` minimizing stage time under the
// memory budget. Returns the (time, dp sync) Pareto frontier of choices, or
// nullopt when nothing fits. An infinite budget disables memory accounting.
inline std::optional<StageFrontier> dp_optimize_stage(
    const ModelProfile& model, LayerRange range,
    std::span<const ParallelStrategy> strategies, double budget_bytes,
    int stage_index, int pp, int microbatch, int n_microbatches,
    const ClusterProfile& cluster, const TrainingConfig& training,
    const SearchConfig& cfg) {
  using detail::DpPoint;
  using detail::StateRef;
  validate(cfg);
  if (strategies.empty()) throw ValidationError("strategy list is empty");
  if (!(budget_bytes > 0.0)) throw ValidationError("budget_bytes must be > 0");
  if (range.size() < 1) throw ValidationError("stage has no layers");

  const detail::BucketScale scale(budget_bytes, cfg.memory_buckets);
  const int n_layers = range.size();
  const int n_strat = static_cast<int>(strategies.size());
  const int in_flight = in_flight_microbatches(stage_index, pp, n_microbatches);

  std::vector<detail::CellCost> cells(static_cast<std::size_t>(n_layers) *
                                      n_strat);
  for (int l = 0; l < n_layers; ++l) {
    const LayerProfile& layer = model.layers[range.begin + l];
    for (int s = 0; s < n_strat; ++s) {
      const ParallelStrategy& st = strategies[s];
      detail::CellCost& c = cells[l * n_strat + s];
      c.time = layer_time(layer, st, microbatch, model.seq_len,
                          model.hidden_size, cluster, training)
                   .total();
      c.memory = layer_memory(layer, st, microbatch, model.seq_len, in_flight,
                              training)
                     .total();
      c.transient =
          recompute_transient_bytes(layer, st, microbatch, model.seq_len);
      c.sync = layer_dp_sync_time(layer, st, cluster, training);
    }
  }

  std::vector<int> layout_of(n_strat);
  int n_layouts = 0;
  for (int s = 0; s < n_strat; ++s) {
    layout_of[s] = -1;
    for (int p = 0; p < s; ++p) {
      if (strategies[p].same_layout(strategies[s])) {
        layout_of[s] = layout_of[p];
        break;
      }
    }
    if (layout_of[s] < 0) layout_of[s] = n_layouts++;
  }

  // Cost of entering layer l from a layer with a different layout.
  std::vector<double> switch_cost(n_layers, 0.0);
  if (cfg.transitions) {
    const CommGroup stage_group =
        make_group(strategies.front().devices(), 1, cluster);
    ParallelStrategy a = strategies.front();
    ParallelStrategy b = a;
    b.tp = 0;  // any differing layout
    for (int l = 1; l < n_layers; ++l) {
      switch_cost[l] = transition_time(
          a, b,
          boundary_tensor_bytes(model.layers[range.begin + l], microbatch,
                                model.seq_len),
          stage_group, cluster);
    }
  }

  std::vector<double> caps{0.0};
  if (!scale.unconstrained()) {
    for (const auto& c : cells) {
      if (c.transient > 0.0 && c.transient <= budget_bytes) {
        caps.push_back(c.transient);
      }
    }
    std::sort(caps.begin(), caps.end());
    caps.erase(std::unique(caps.begin(), caps.end()), caps.end());
  }

  StageFrontier result;
  struct FinalPoint {
    double time;
    double sync;
    int cap_index;
    int pool_index;
    double memory;
  };
  std::vector<FinalPoint> finals;
  std::vector<std::vector<std::vector<DpPoint>>> pools_per_cap(caps.size());

  for (std::size_t ci = 0; ci < caps.size(); ++ci) {
    const double cap = caps[ci];
    const double room = budget_bytes - cap;
    if (room < 0.0) break;
    auto allowed = [&](int l, int s) {
      const auto& c = cells[l * n_strat + s];
      if (c.memory > room) return false;
      if (scale.unconstrained()) return true;
      return !strategies[s].recompute || c.transient <= cap;
    };

    auto& pools = pools_per_cap[ci];
    pools.assign(n_layers, {});
    std::vector<std::vector<DpPoint>> buf(
        static_cast<std::size_t>(scale.buckets() + 1) * n_layouts);
    std::vector<int> touched;
    std::vector<StateRef> states;

    auto flush = [&](int l) {
      std::sort(touched.begin(), touched.end());
      states.clear();
      for (int key : touched) {
        auto& b = buf[key];
        result.truncated |= detail::prune_frontier(b, cfg.frontier_cap);
        const int begin = static_cast<int>(pools[l].size());
        pools[l].insert(pools[l].end(), b.begin(), b.end());
        states.push_back({key / n_layouts, key % n_layouts, begin,
                          static_cast<int>(pools[l].size())});
        b.clear();
      }
      touched.clear();
    };
    auto push = [&](int layout, const DpPoint& p) {
      if (p.memory > room) return;
      const int key = scale.to_buckets(p.memory) * n_layouts + layout;
      if (buf[key].empty()) touched.push_back(key);
      buf[key].push_back(p);
    };

    for (int s = 0; s < n_strat; ++s) {
      if (!allowed(0, s)) continue;
      const auto& c = cells[s];
      push(layout_of[s], {c.time, c.sync, c.memory, s, -1});
    }
    flush(0);

    for (int l = 1; l < n_layers && !states.empty(); ++l) {
      const auto& prev_pool = pools[l - 1];
      // Group previous states by bucket count; states are sorted by (j, layout).
      struct Group {
        int j;
        std::vector<int> state_of_layout;
        std::vector<DpPoint> any;  // frontier over all layouts
      };
      std::vector<Group> groups;
      for (int si = 0; si < static_cast<int>(states.size()); ++si) {
        const StateRef& st = states[si];
        if (groups.empty() || groups.back().j != st.j) {
          groups.push_back({st.j, std::vector<int>(n_layouts, -1), {}});
        }
        Group& g = groups.back();
        g.state_of_layout[st.layout] = si;
        for (int idx = st.begin; idx < st.end; ++idx) {
          const DpPoint& p = prev_pool[idx];
          g.any.push_back({p.time, p.sync, p.memory, -1, idx});
        }
      }
      for (auto& g : groups) {
        detail::prune_frontier(g.any, std::numeric_limits<int>::max());
      }

      const double sw = switch_cost[l];
      for (int s = 0; s < n_strat; ++s) {
        if (!allowed(l, s)) continue;
        const auto& c = cells[l * n_strat + s];
        const int lay = layout_of[s];
        for (const Group& g : groups) {
          if (sw > 0.0) {
            const int si = g.state_of_layout[lay];
            if (si >= 0) {
              for (int idx = states[si].begin; idx < states[si].end; ++idx) {
                const DpPoint& p = prev_pool[idx];
                push(lay, {p.time + c.time, p.sync + c.sync,
                           p.memory + c.memory, s, idx});
              }
            }
            for (const DpPoint& p : g.any) {
              push(lay, {(p.time + sw) + c.time, p.sync + c.sync,
                         p.memory + c.memory, s, p.prev});
            }
          } else {
            for (const DpPoint& p : g.any) {
              push(lay, {p.time + c.time, p.sync + c.sync, p.memory + c.memory,
                         s, p.prev});
            }
          }
        }
      }
      flush(l);
    }

    if (states.empty()) continue;
    for (const StateRef& st : states) {
      for (int idx = st.begin; idx < st.end; ++idx) {
        const DpPoint& p = pools[n_layers - 1][idx];
        finals.push_back(
            {p.time, p.sync, static_cast<int>(ci), idx, p.memory + cap});
      }
    }
  }

  if (finals.empty()) return std::nullopt;
  // Ties prefer less memory, then the earlier enumeration path.
  std::stable_sort(finals.begin(), finals.end(),
                   [](const FinalPoint& a, const FinalPoint& b) {
                     return a.memory < b.memory;
                   });
  result.truncated |= detail::prune_frontier(finals, cfg.frontier_cap);

  for (const FinalPoint& f : finals) {
    StageOption opt;
    opt.time = f.time;
    opt.dp_sync = f.sync;
    opt.buckets = scale.to_buckets(f.memory);
    opt.strategies.resize(n_layers);
    const auto& pools = pools_per_cap[f.cap_index];
    int idx = f.pool_index;
    for (int l = n_layers - 1; l >= 0; --l) {
      const DpPoint& p = pools[l][idx];
      opt.strategies[l] = strategies[p.strategy];
      idx = p.prev;
    }
    result.options.push_back(std::move(opt));
  }
  return result;
}

// Smallest exact peak memory any assignment of `strategies` can reach on the
// stage. Used for infeasibility diagnostics.
inline double min_stage_memory(const ModelProfile& model, LayerRange range,
                               std::span<const ParallelStrategy> strategies,
                               int stage_index, int pp, int microbatch,
                               int n_microbatches,
                               const TrainingConfig& training) {
  const int in_flight = in_flight_microbatches(stage_index, pp, n_microbatches);
  std::vector<double> caps{0.0};
  for (int l = range.begin; l < range.end; ++l) {
    for (const auto& s : strategies) {
      caps.push_back(recompute_transient_bytes(model.layers[l], s, microbatch,
                                               model.seq_len));
    }
  }
  double best = detail::kInf;
  for (double cap : caps) {
    double sum = cap;
    for (int l = range.begin; l < range.end && sum < best; ++l) {
      double m = detail::kInf;
      for (const auto& s : strategies) {
        if (recompute_transient_bytes(model.layers[l], s, microbatch,
                                      model.seq_len) > cap) {
          continue;
        }
        m = std::min(m, layer_memory(model.layers[l], s, microbatch,
                                     model.seq_len, in_flight, training)
                            .total());
      }
      sum += m;
    }
    best = std::min(best, sum);
  }
  return best;
}

// Powers of two <= min(n_devices, n_layers, max_pp), ascending.
inline std::vector<int> pipeline_degrees(const ModelProfile& model,
                                         const ClusterProfile& cluster,
                                         const SearchConfig& cfg) {
  int limit = std::min(cluster.n_devices, model.n_layers);
  if (cfg.max_pp) limit = std::min(limit, *cfg.max_pp);
  std::vector<int> out;
  for (int pp = 1; pp <= limit; pp *= 2) out.push_back(pp);
  return out;
}

// Powers of two <= global_batch, descending.
inline std::vector<int> microbatch_sizes(const TrainingConfig& training) {
  std::vector<int> out;
  for (int mb = training.global_batch; mb >= 1; mb /= 2) out.push_back(mb);
  return out;
}

// Strategies for a stage of `devices` devices whose dp divides `microbatch`.
inline std::vector<ParallelStrategy> stage_candidates(
    int devices, int microbatch, const ClusterProfile& cluster,
    const StrategyConstraints& constraints) {
  std::vector<ParallelStrategy> out;
  for (const auto& s : enumerate_strategies(devices, cluster, constraints)) {
    if (microbatch % s.dp == 0) out.push_back(s);
  }
  return out;
}

struct CombinationResult {
  std::optional<Plan> plan;
  bool truncated = false;
  bool evaluated = false;
  // Per-stage minimum achievable memory when infeasible.
  std::vector<double> min_memory;
};

// Best plan for one (pp, microbatch) choice.
inline CombinationResult optimize_combination(
    int pp, int microbatch, double budget, const ModelProfile& model,
    const ClusterProfile& cluster, const TrainingConfig& training,
    const SearchConfig& cfg) {
  CombinationResult out;
  out.evaluated = true;
  const int devices = cluster.n_devices / pp;
  const int n_microbatches = training.global_batch / microbatch;
  const auto candidates =
      stage_candidates(devices, microbatch, cluster, cfg.constraints);
  if (candidates.empty()) return out;
  const auto ranges = split_stages(model.n_layers, pp);

  std::vector<StageFrontier> frontiers;
  bool feasible = true;
  for (int i = 0; i < pp; ++i) {
    auto f = dp_optimize_stage(model, ranges[i], candidates, budget, i, pp,
                               microbatch, n_microbatches, cluster, training,
                               cfg);
    if (!f) {
      feasible = false;
      break;
    }
    out.truncated |= f->truncated;
    frontiers.push_back(std::move(*f));
  }
  if (!feasible) {
    for (int i = 0; i < pp; ++i) {
      out.min_memory.push_back(min_stage_memory(model, ranges[i], candidates,
                                                i, pp, microbatch,
                                                n_microbatches, training));
    }
    return out;
  }

  std::vector<double> p2p(pp, 0.0);
  for (int i = 0; i + 1 < pp; ++i) {
    p2p[i] = 2.0 * stage_send_time(model, ranges[i + 1].begin, microbatch, i,
                                   devices, cluster);
  }

  // The slowest sync is one of the frontier sync values; for each, every
  // stage takes its fastest option not exceeding it.
  std::vector<double> sync_caps;
  for (const auto& f : frontiers) {
    for (const auto& o : f.options) sync_caps.push_back(o.dp_sync);
  }
  std::sort(sync_caps.begin(), sync_caps.end());
  sync_caps.erase(std::unique(sync_caps.begin(), sync_caps.end()),
                  sync_caps.end());

  double best = detail::kInf;
  std::vector<int> best_pick;
  std::vector<int> pick(pp);
  for (double cap : sync_caps) {
    bool ok = true;
    double slowest = 0.0, sum = 0.0, sync = 0.0;
    for (int i = 0; i < pp && ok; ++i) {
      const auto& opts = frontiers[i].options;
      int k = 0;
      while (k < static_cast<int>(opts.size()) && opts[k].dp_sync > cap) ++k;
      if (k == static_cast<int>(opts.size())) {
        ok = false;
        break;
      }
      pick[i] = k;
      const double x = opts[k].time + p2p[i];
      slowest = std::max(slowest, x);
      sum += x;
      sync = std::max(sync, opts[k].dp_sync);
    }
    if (!ok) continue;
    const double t = (n_microbatches - 1) * slowest + sum + sync;
    if (t < best) {
      best = t;
      best_pick = pick;
    }
  }

  Plan plan;
  plan.pp = pp;
  plan.microbatch = microbatch;
  plan.stage_ranges = ranges;
  for (int i = 0; i < pp; ++i) {
    const auto& chosen = frontiers[i].options[best_pick[i]].strategies;
    plan.layer_strategies.insert(plan.layer_strategies.end(), chosen.begin(),
                                 chosen.end());
  }
  finalize_plan(plan, model, cluster, training, cfg.transitions);
  out.plan = std::move(plan);
  return out;
}

struct SearchResult {
  Plan plan;
  // The memory budget excluded a faster plan.
  bool memory_binding = false;
  // False when time_limit_s stopped the search early.
  bool completed = true;
  bool frontier_truncated = false;
  double unconstrained_time = 0.0;
};

namespace detail {

struct Combination {
  int pp;
  int microbatch;
};

// Runs optimize_combination for every combination, on `jobs` threads, and
// returns results in input order.
inline std::vector<CombinationResult> run_combinations(
    const std::vector<Combination>& combos, double budget,
    const ModelProfile& model, const ClusterProfile& cluster,
    const TrainingConfig& training, const SearchConfig& cfg,
    std::chrono::steady_clock::time_point start, bool& completed) {
  std::vector<CombinationResult> results(combos.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> timed_out{false};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= combos.size()) return;
      // The first combination always runs so a time limit still yields a
      // best-so-far plan.
      if (cfg.time_limit_s && i > 0) {
        const double elapsed = std::chrono::duration<double>(
                                   std::chrono::steady_clock::now() - start)
                                   .count();
        if (elapsed > *cfg.time_limit_s) {
          timed_out = true;
          continue;
        }
      }
      results[i] = optimize_combination(combos[i].pp, combos[i].microbatch,
                                        budget, model, cluster, training, cfg);
    }
  };
  const int jobs = std::min<int>(cfg.jobs, static_cast<int>(combos.size()));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (timed_out) completed = false;
  return results;
}

// Minimal predicted time; combinations are ordered (pp ascending, microbatch
// descending), so keeping the first minimum breaks ties as required.
inline const Plan* pick_best(const std::vector<CombinationResult>& results) {
  const Plan* best = nullptr;
  for (const auto& r : results) {
    if (!r.plan) continue;
    if (best == nullptr ||
        r.plan->predicted_iteration_time < best->predicted_iteration_time) {
      best = &*r.plan;
    }
  }
  return best;
}

}  // namespace detail

inline SearchResult optimize_detailed(const ModelProfile& model,
                                      const ClusterProfile& cluster,
                                      const TrainingConfig& training,
                                      const SearchConfig& cfg) {
  validate(model);
  validate(cluster);
  validate(training);
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();

  std::vector<detail::Combination> combos;
  for (int pp : pipeline_degrees(model, cluster, cfg)) {
    for (int mb : microbatch_sizes(training)) combos.push_back({pp, mb});
  }

  SearchResult out;
  const double budget = cluster.memory_budget();
  auto results = detail::run_combinations(combos, budget, model, cluster,
                                          training, cfg, start, out.completed);
  const Plan* best = detail::pick_best(results);
  for (const auto& r : results) out.frontier_truncated |= r.truncated;

  if (best == nullptr) {
    std::string msg = "no feasible plan within the per-device budget of " +
                      format_double(budget) + " bytes";
    double tightest = detail::kInf;
    std::string where;
    for (std::size_t i = 0; i < combos.size(); ++i) {
      const auto& mm = results[i].min_memory;
      if (mm.empty()) continue;
      const auto it = std::max_element(mm.begin(), mm.end());
      if (*it < tightest) {
        tightest = *it;
        where = "stage " + std::to_string(it - mm.begin()) + " (pp=" +
                std::to_string(combos[i].pp) +
                ", microbatch=" + std::to_string(combos[i].microbatch) + ")";
      }
    }
    if (!where.empty()) {
      msg += "; tightest stage is " + where +
             " with minimum achievable memory " + format_double(tightest) +
             " bytes";
    }
    if (!out.completed) msg += " (search stopped by time limit)";
    throw NoFeasiblePlan(msg);
  }
  out.plan = *best;

  bool unconstrained_done = true;
  auto free_results =
      detail::run_combinations(combos, detail::kInf, model, cluster, training,
                               cfg, start, unconstrained_done);
  const Plan* free_best = detail::pick_best(free_results);
  out.unconstrained_time =
      free_best ? free_best->predicted_iteration_time : detail::kInf;
  for (const auto& r : free_results) out.frontier_truncated |= r.truncated;
  out.memory_binding =
      out.plan.predicted_iteration_time >
      out.unconstrained_time * (1.0 + 1e-12);
  return out;
}

inline Plan optimize(const ModelProfile& model, const ClusterProfile& cluster,
                     const TrainingConfig& training, const SearchConfig& cfg) {
  return optimize_detailed(model, cluster, training, cfg).plan;
}

}  // namespace hyplan

#endif  // HYPLAN_SEARCH_HPP_
