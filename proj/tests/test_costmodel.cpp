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

#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "hyplan/costmodel.hpp"
#include "test_util.hpp"

namespace hyplan {
namespace {

using testing::make_cluster;
using testing::make_training;

ParallelStrategy S(int tp, int dp, int z = 0, bool sp = false, bool rc = false) {
  return {tp, dp, z, sp, rc};
}

TEST(LayerTimeTest, SingleDeviceHasNoCommunication) {
  auto c = make_cluster(8, 8, 1e12, 1LL << 30, 1e11, 1e10, 1e-5);
  auto t = layer_time(synth_transformer_layer(64), S(1, 1), 4, 128, 64, c,
                      make_training(8));
  EXPECT_EQ(t.tp_comm, 0.0);
  EXPECT_EQ(t.zero3_param_gather, 0.0);
  EXPECT_EQ(t.recompute_extra, 0.0);
}

TEST(LayerTimeTest, TinyLayerComputeTerms) {
  auto c = make_cluster(1, 1, 1e6);
  auto l = synth_transformer_layer(2);
  ASSERT_EQ(l.flops_per_token, 148.0);
  ASSERT_EQ(l.flops_per_token_sq, 8.0);
  auto t = layer_time(l, S(1, 1), 4, 8, 2, c, make_training(4));
  EXPECT_DOUBLE_EQ(t.fwd_compute, 6.784e-3);
  EXPECT_DOUBLE_EQ(t.bwd_compute, 1.3568e-2);
}

TEST(LayerTimeTest, RecomputeAddsForwardAndHalfTpComm) {
  auto c = make_cluster(8, 8, 1e13, 1LL << 30, 1e11, 1e10, 1e-6);
  auto tr = make_training(8);
  auto l = synth_transformer_layer(256);
  for (int tp : {1, 2, 4}) {
    auto off = layer_time(l, S(tp, 8 / tp), 8, 64, 256, c, tr);
    auto on = layer_time(l, S(tp, 8 / tp, 0, false, true), 8, 64, 256, c, tr);
    EXPECT_EQ(on.recompute_extra, off.fwd_compute + 0.5 * off.tp_comm);
    EXPECT_EQ(on.total() - on.recompute_extra, off.total());
    if (tp == 1) {
      EXPECT_EQ(on.recompute_extra, off.fwd_compute);
    }
  }
}

TEST(LayerTimeTest, CommunicationTermsMatchFormulas) {
  auto c = make_cluster(16, 4, 1e13, 1LL << 30, 2e11, 2e10, 3e-6);
  auto tr = make_training(16);
  auto l = synth_transformer_layer(128);
  const int mb = 8, seq = 32, h = 128;
  for (int tp : {1, 2, 4}) {
    const int dp = 8 / tp;
    auto t = layer_time(l, S(tp, dp, 3), mb, seq, h, c, tr);
    // Independent evaluation of the ring model.
    auto ring = [&](int g, Span span, double v) {
      if (g == 1) return 0.0;
      auto bw = lookup_bandwidth(c, span, g);
      return bw.latency * (g - 1) + (g - 1.0) / g * v / bw.bus_bandwidth;
    };
    const double tokens = mb * seq;
    const double tp_vol = 2.0 * tokens * 2.0 * h / dp;
    EXPECT_DOUBLE_EQ(t.tp_comm, 4.0 * 2.0 * ring(tp, Span::kIntraNode, tp_vol));
    const Span dp_span = tp * dp > 4 ? Span::kInterNode : Span::kIntraNode;
    EXPECT_DOUBLE_EQ(t.zero3_param_gather,
                     2.0 * ring(dp, dp_span, 2.0 * l.param_count / tp));
  }
}

TEST(LayerTimeTest, IndivisibleMicrobatchThrows) {
  auto c = make_cluster(4, 4);
  EXPECT_THROW(layer_time(synth_transformer_layer(8), S(1, 4), 2, 8, 8, c,
                          make_training(4)),
               IndivisibleMicrobatch);
  EXPECT_THROW(layer_memory(synth_transformer_layer(8), S(1, 4), 6, 8, 1,
                            make_training(8)),
               IndivisibleMicrobatch);
}

TEST(LayerMemoryTest, ModelStatesH1024) {
  auto l = synth_transformer_layer(1024);
  auto tr = make_training(8);
  auto z0 = layer_memory(l, S(2, 2, 0), 2, 1024, 1, tr);
  EXPECT_EQ(z0.param_bytes, 12596224.0);
  EXPECT_EQ(z0.grad_bytes, 12596224.0);
  EXPECT_EQ(z0.optimizer_bytes, 75577344.0);
  auto z1 = layer_memory(l, S(2, 2, 1), 2, 1024, 1, tr);
  EXPECT_EQ(z1.param_bytes, 12596224.0);
  EXPECT_EQ(z1.grad_bytes, 12596224.0);
  EXPECT_EQ(z1.optimizer_bytes, 37788672.0);
}

TEST(LayerMemoryTest, ActivationsH1024) {
  auto l = synth_transformer_layer(1024);
  auto tr = make_training(8);
  EXPECT_EQ(layer_memory(l, S(2, 1, 0, true), 2, 1024, 1, tr).activation_bytes,
            35651584.0);
  EXPECT_EQ(
      layer_memory(l, S(2, 1, 0, true, true), 2, 1024, 1, tr).activation_bytes,
      4194304.0);
  EXPECT_EQ(layer_memory(l, S(2, 1, 0, true), 2, 1024, 3, tr).activation_bytes,
            3.0 * 35651584.0);
}

TEST(LayerMemoryTest, ZeroRecomputeSpMonotone) {
  std::mt19937 rng(17);
  auto tr = make_training(64);
  for (int trial = 0; trial < 200; ++trial) {
    auto l = synth_transformer_layer(1 + rng() % 4096);
    l.boundary_bytes_per_token = l.act_shardable_bytes_per_token *
                                 (rng() % 100) / 100.0;
    const int tp = 1 << (rng() % 4);
    const int dp = 1 << (1 + rng() % 3);
    const int mb = dp * (1 + rng() % 4);
    const int seq = 1 + rng() % 2048;
    const int inflight = 1 + rng() % 4;
    const bool sp = tp > 1 && rng() % 2;
    const bool rc = rng() % 2;
    for (int z = 0; z < 3; ++z) {
      auto lo = layer_memory(l, S(tp, dp, z, sp, rc), mb, seq, inflight, tr);
      auto hi = layer_memory(l, S(tp, dp, z + 1, sp, rc), mb, seq, inflight, tr);
      EXPECT_LE(hi.param_bytes, lo.param_bytes);
      EXPECT_LE(hi.grad_bytes, lo.grad_bytes);
      EXPECT_LE(hi.optimizer_bytes, lo.optimizer_bytes);
      EXPECT_LE(hi.activation_bytes, lo.activation_bytes);
    }
    auto base = layer_memory(l, S(tp, dp, 0, sp, false), mb, seq, inflight, tr);
    auto with_rc = layer_memory(l, S(tp, dp, 0, sp, true), mb, seq, inflight, tr);
    EXPECT_LE(with_rc.activation_bytes, base.activation_bytes);
    if (tp > 1) {
      auto no_sp = layer_memory(l, S(tp, dp, 0, false, rc), mb, seq, inflight, tr);
      auto with_sp = layer_memory(l, S(tp, dp, 0, true, rc), mb, seq, inflight, tr);
      EXPECT_LE(with_sp.activation_bytes, no_sp.activation_bytes);
    }
  }
}

TEST(LayerMemoryTest, ReplicationConservation) {
  // With zero_stage 0 each of the dp replicas of a tp group holds 1/tp of
  // the parameters, so the stage holds dp full copies.
  auto tr = make_training(8);
  auto l = synth_transformer_layer(96);
  for (int tp : {1, 2, 4, 8}) {
    const int dp = 8 / tp;
    auto m = layer_memory(l, S(tp, dp, 0), 8, 16, 1, tr);
    EXPECT_DOUBLE_EQ(m.param_bytes * tp * dp,
                     tr.bytes_per_param * l.param_count * dp);
  }
}

TEST(TransitionTest, Rules) {
  auto c = make_cluster(4, 4, 1e12, 1, 1e11, 1e10, 0.0);
  CommGroup g{4, Span::kIntraNode};
  EXPECT_EQ(transition_time(S(2, 2), S(2, 2), 1e8, g, c), 0.0);
  EXPECT_EQ(transition_time(S(2, 2), S(2, 2, 0, false, true), 1e8, g, c), 0.0);
  EXPECT_EQ(transition_time(S(2, 2, 0), S(2, 2, 1), 1e8, g, c), 0.0);
  EXPECT_DOUBLE_EQ(transition_time(S(2, 2), S(4, 1), 1e8, g, c), 7.5e-4);
  EXPECT_GT(transition_time(S(2, 2), S(2, 2, 0, true), 1e8, g, c), 0.0);
}

ModelProfile uniform_model(int layers, int h, int seq) {
  return synth_transformer_profile(layers, h, seq);
}

TEST(StageCostTest, SingleStageInFlightIsOne) {
  auto c = make_cluster(2, 2);
  auto m = uniform_model(2, 64, 32);
  auto tr = make_training(8);
  std::vector<ParallelStrategy> s{S(1, 2), S(1, 2)};
  auto sc = stage_cost(m, {0, 2}, s, 0, 1, 2, 4, c, tr);
  double expect = 0.0;
  for (int i = 0; i < 2; ++i) {
    expect += layer_memory(m.layers[i], s[i], 2, 32, 1, tr).total();
  }
  EXPECT_EQ(sc.peak_memory_bytes, expect);
}

TEST(StageCostTest, IdenticalLayersAreAdditive) {
  auto c = make_cluster(2, 2, 1e12, 1LL << 30, 1e11, 1e10, 1e-6);
  auto m = uniform_model(2, 64, 32);
  auto tr = make_training(8);
  std::vector<ParallelStrategy> s{S(2, 1, 0, true), S(2, 1, 0, true)};
  auto one = stage_cost(m, {0, 1}, std::span(s).first(1), 0, 1, 2, 4, c, tr);
  auto two = stage_cost(m, {0, 2}, s, 0, 1, 2, 4, c, tr);
  EXPECT_EQ(two.transition_time, 0.0);
  EXPECT_DOUBLE_EQ(two.per_microbatch_time, 2.0 * one.per_microbatch_time);
  EXPECT_DOUBLE_EQ(two.dp_sync_time, 2.0 * one.dp_sync_time);
}

TEST(StageCostTest, TransitionAppearsOnceAndMatchesParts) {
  auto c = make_cluster(2, 2, 1e12, 1LL << 30, 1e11, 1e10, 1e-6);
  auto m = uniform_model(2, 64, 32);
  auto tr = make_training(8);
  std::vector<ParallelStrategy> s{S(1, 2), S(2, 1)};
  auto sc = stage_cost(m, {0, 2}, s, 0, 1, 2, 4, c, tr);
  const double trans = transition_time(
      s[0], s[1], boundary_tensor_bytes(m.layers[1], 2, 32),
      CommGroup{2, Span::kIntraNode}, c);
  EXPECT_GT(trans, 0.0);
  EXPECT_EQ(sc.transition_time, trans);
  const double parts =
      layer_time(m.layers[0], s[0], 2, 32, 64, c, tr).total() +
      layer_time(m.layers[1], s[1], 2, 32, 64, c, tr).total() + trans;
  EXPECT_DOUBLE_EQ(sc.per_microbatch_time, parts);
  auto off = stage_cost(m, {0, 2}, s, 0, 1, 2, 4, c, tr, false);
  EXPECT_EQ(off.transition_time, 0.0);
  EXPECT_DOUBLE_EQ(off.per_microbatch_time, parts - trans);
}

TEST(StageCostTest, DpSyncFollowsZeroStageAndOverlap) {
  auto c = make_cluster(4, 4, 1e12, 1LL << 30, 1e11, 1e10, 2e-6);
  auto m = uniform_model(1, 64, 32);
  auto tr = make_training(8);
  const double p = m.layers[0].param_count / 2.0;
  CommGroup dp{2, Span::kIntraNode};
  std::vector<ParallelStrategy> z0{S(2, 2, 0)};
  EXPECT_EQ(stage_cost(m, {0, 1}, z0, 0, 1, 2, 4, c, tr).dp_sync_time,
            all_reduce_time(dp, 2.0 * p, c));
  std::vector<ParallelStrategy> z2{S(2, 2, 2)};
  EXPECT_EQ(stage_cost(m, {0, 1}, z2, 0, 1, 2, 4, c, tr).dp_sync_time,
            reduce_scatter_time(dp, 2.0 * p, c) + all_gather_time(dp, 2.0 * p, c));
  tr.comm_overlap_fraction = 0.25;
  EXPECT_DOUBLE_EQ(stage_cost(m, {0, 1}, z0, 0, 1, 2, 4, c, tr).dp_sync_time,
                   0.75 * all_reduce_time(dp, 2.0 * p, c));
}

TEST(StageCostTest, WarmupDepthSetsInFlight) {
  auto c = make_cluster(8, 8);
  auto m = uniform_model(4, 64, 32);
  auto tr = make_training(16);
  std::vector<ParallelStrategy> s{S(1, 2)};
  for (int stage = 0; stage < 4; ++stage) {
    auto sc = stage_cost(m, {stage, stage + 1}, s, stage, 4, 2, 8, c, tr);
    const int inflight = 4 - stage;
    EXPECT_EQ(sc.peak_memory_bytes,
              layer_memory(m.layers[stage], s[0], 2, 32, inflight, tr).total());
  }
  auto few = stage_cost(m, {0, 1}, s, 0, 4, 2, 2, c, tr);
  EXPECT_EQ(few.peak_memory_bytes,
            layer_memory(m.layers[0], s[0], 2, 32, 2, tr).total());
}

TEST(StageCostTest, RecomputeTransientAddedToPeak) {
  auto c = make_cluster(2, 2);
  auto m = uniform_model(2, 64, 32);
  auto tr = make_training(8);
  std::vector<ParallelStrategy> s{S(1, 2, 0, false, true), S(1, 2)};
  auto sc = stage_cost(m, {0, 2}, s, 0, 1, 2, 4, c, tr);
  const double full = (2.0 * 32 / 2) * (24.0 * 64 + 10.0 * 64);
  const double kept = (2.0 * 32 / 2) * (2.0 * 64);
  EXPECT_EQ(sc.recompute_transient_bytes, full - kept);
  double states = 0.0;
  for (int i = 0; i < 2; ++i) {
    states += layer_memory(m.layers[i], s[i], 2, 32, 1, tr).total();
  }
  EXPECT_EQ(sc.peak_memory_bytes, states + full - kept);
}

TEST(StageCostTest, MixedDeviceCountsRejected) {
  auto c = make_cluster(4, 4);
  auto m = uniform_model(2, 64, 32);
  std::vector<ParallelStrategy> s{S(1, 2), S(1, 4)};
  EXPECT_THROW(stage_cost(m, {0, 2}, s, 0, 1, 4, 1, c, make_training(4)),
               InconsistentStrategy);
}

StageCost timed(double t, double sync = 0.0, double p2p = 0.0) {
  StageCost s;
  s.per_microbatch_time = t;
  s.dp_sync_time = sync;
  s.p2p_time = p2p;
  return s;
}

TEST(IterationTimeTest, SingleStage) {
  std::vector<StageCost> one{timed(1.5, 0.25)};
  EXPECT_EQ(iteration_time(one, 4), 4 * 1.5 + 0.25);
}

TEST(IterationTimeTest, BalancedTwoStages) {
  std::vector<StageCost> two{timed(2.0), timed(2.0)};
  EXPECT_EQ(iteration_time(two, 4), 10.0);
}

TEST(IterationTimeTest, BalancedClosedFormAndMonotoneInMicrobatches) {
  for (int pp : {1, 2, 4, 8}) {
    std::vector<StageCost> st(pp, timed(0.75));
    for (int m : {1, 2, 4, 8, 16}) {
      EXPECT_EQ(iteration_time(st, m), (m + pp - 1) * 0.75);
      EXPECT_LT(iteration_time(st, m), iteration_time(st, 2 * m));
    }
  }
}

TEST(IterationTimeTest, P2pAndSyncTerms) {
  std::vector<StageCost> st{timed(1.0, 0.5, 0.25), timed(2.0, 0.75, 0.0)};
  EXPECT_EQ(iteration_time(st, 3), 2 * 2.0 + (1.25 + 2.0) + 0.75);
}

TEST(MonotonicityTest, LayerTimeInHardwareAndShape) {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double flops = 1e12 * (1 + 10 * u(rng));
    const double bw = 1e10 * (1 + 10 * u(rng));
    const double lat = 1e-5 * u(rng);
    auto base = make_cluster(8, 4, flops, 1, bw, bw / 4, lat);
    auto fast = make_cluster(8, 4, 2 * flops, 1, 10 * bw, 10 * bw / 4, lat);
    auto l = synth_transformer_layer(16 + rng() % 512);
    const int tp = 1 << (rng() % 3);
    const int dp = 8 / tp;
    const ParallelStrategy s = S(tp, dp, dp > 1 ? rng() % 4 : 0, false, rng() % 2);
    const int mb = dp * (1 + rng() % 4);
    const int seq = 1 + rng() % 512;
    auto tr = make_training(64);
    auto a = layer_time(l, s, mb, seq, 64, base, tr);
    auto b = layer_time(l, s, mb, seq, 64, fast, tr);
    EXPECT_LE(b.fwd_compute, a.fwd_compute);
    EXPECT_LE(b.bwd_compute, a.bwd_compute);
    EXPECT_LE(b.recompute_extra, a.recompute_extra);
    EXPECT_LE(b.tp_comm, a.tp_comm);
    EXPECT_LE(b.zero3_param_gather, a.zero3_param_gather);
    auto bigger = layer_time(l, s, 2 * mb, seq + 1, 64, base, tr);
    EXPECT_GE(bigger.fwd_compute, a.fwd_compute);
    EXPECT_GE(bigger.tp_comm, a.tp_comm);
    EXPECT_GE(bigger.total(), a.total());
  }
}

}  // namespace
}  // namespace hyplan
