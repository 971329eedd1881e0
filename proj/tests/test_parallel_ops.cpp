// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "dompar/activation_tape.hpp"
#include "dompar/parallel_ops.hpp"
#include "dompar/vit.hpp"
#include "test_util.hpp"

using namespace dompar;
using Extents = std::vector<std::size_t>;

namespace {

template <Real T>
ShardTensor<T> scatter_along(RankContext& ctx, const Tensor<T>& t, std::size_t dim, const Extents& e) {
  return scatter_global(ctx, t, {Placement::shard(dim)}, ShardingShapes::single(e));
}

}  // namespace

TEST(Elementwise, UnevenShardsMatchDense) {
  auto rng = testutil::rng(1);
  const auto a = Tensor<double>::random({10, 3}, rng);
  const auto b = Tensor<double>::random({10, 3}, rng);
  spawn_mesh(DeviceMesh::line(4), [&](RankContext& ctx) {
    const Extents e{5, 0, 4, 1};
    const auto sa = scatter_along(ctx, a, 0, e), sb = scatter_along(ctx, b, 0, e);
    EXPECT_TRUE(bitwise_equal(full_tensor(sharded_elementwise(ElementwiseOp::kAdd, sa, sb)), add(a, b)));
    EXPECT_TRUE(bitwise_equal(full_tensor(sharded_elementwise(ElementwiseOp::kMul, sa, 3.0)),
                              elementwise(ElementwiseOp::kMul, a, 3.0)));
    EXPECT_TRUE(bitwise_equal(full_tensor(sharded_unary(UnaryOp::kGelu, sa)), unary(UnaryOp::kGelu, a)));
    EXPECT_EQ(ctx.stats().count(CollectiveKind::kAllReduce), 0u);
  });
}

TEST(Elementwise, LayoutMismatchNamesBothLayouts) {
  const auto a = Tensor<double>::arange(8);
  spawn_mesh(DeviceMesh::line(2), [&](RankContext& ctx) {
    const auto x = scatter_along(ctx, a, 0, {4, 4});
    const auto y = scatter_along(ctx, a, 0, {5, 3});
    try {
      sharded_elementwise(ElementwiseOp::kAdd, x, y);
      FAIL();
    } catch (const MetadataError& e) {
      const std::string msg = e.what();
      EXPECT_NE(msg.find("[[4,4]]"), std::string::npos);
      EXPECT_NE(msg.find("[[5,3]]"), std::string::npos);
    }
  });
}

TEST(Linear, ShardedBatchMatchesDense) {
  auto rng = testutil::rng(2);
  const auto x = Tensor<double>::random({9, 6}, rng);
  const auto w = Tensor<double>::random({4, 6}, rng);
  const auto b = Tensor<double>::random({4}, rng);
  spawn_mesh(DeviceMesh::line(3), [&](RankContext& ctx) {
    const auto y = sharded_linear(scatter_along(ctx, x, 0, {0, 7, 2}), w, b);
    EXPECT_EQ(y.global_shape(), (Shape{9, 4}));
    EXPECT_TRUE(bitwise_equal(full_tensor(y), linear_forward(x, w, b)));
    EXPECT_THROW(sharded_linear(scatter_global(ctx, x, {Placement::shard(1)}), w, b), UnsupportedError);
  });
}

TEST(Softmax, ShardedAxisWithEmptyShard) {
  auto rng = testutil::rng(3);
  const auto x = Tensor<double>::random({3, 11}, rng, -5, 5);
  const auto want = oracle::softmax_rows(testutil::to_vec(x), 3, 11);
  spawn_mesh(DeviceMesh::line(4), [&](RankContext& ctx) {
    const auto y = sharded_softmax(scatter_along(ctx, x, 1, {6, 0, 1, 4}), 1);
    EXPECT_EQ(ctx.stats().count(CollectiveKind::kAllReduce), 2u);
    EXPECT_LE(oracle::max_rel(testutil::to_vec(full_tensor(y)), want), 1e-15);
  });
}

TEST(Softmax, LargeLogitsStayFinite) {
  const Tensor<double> x({1, 4}, std::vector<double>{1e4, 0, -1e4, 1e4});
  spawn_mesh(DeviceMesh::line(2), [&](RankContext& ctx) {
    const auto y = full_tensor(sharded_softmax(scatter_global(ctx, x, {Placement::shard(1)}), 1));
    EXPECT_DOUBLE_EQ(y[0], 0.5);
    EXPECT_EQ(y[1], 0.0);
    EXPECT_DOUBLE_EQ(y[3], 0.5);
  });
}

TEST(LayerNorm, ShardedAxisMatchesOracle) {
  auto rng = testutil::rng(4);
  const auto x = Tensor<double>::random({4, 13}, rng, 100, 101);  // large mean
  const auto want = oracle::layer_norm_rows(testutil::to_vec(x), 4, 13, 1e-5);
  for (const Extents& e : {Extents{13}, Extents{7, 6}, Extents{0, 12, 1}, Extents{4, 3, 3, 3}}) {
    spawn_mesh(DeviceMesh::line(e.size()), [&](RankContext& ctx) {
      const auto y = sharded_layer_norm(scatter_along(ctx, x, 1, e), 1, 1e-5);
      EXPECT_LE(oracle::max_rel(testutil::to_vec(full_tensor(y)), want), 1e-12);
    });
  }
}

TEST(LayerNorm, ZeroExtentIsShapeError) {
  spawn_mesh(DeviceMesh::line(2), [](RankContext& ctx) {
    const auto x = scatter_global(ctx, Tensor<double>({2, 0}), {Placement::shard(0)});
    EXPECT_THROW(sharded_layer_norm(x, 1, 1e-5), ShapeError);
  });
}

TEST(HaloConv, PlanOwnership) {
  const auto plan = plan_halo_conv({5, 5}, 3, 2, 1);
  EXPECT_EQ(plan.output_shapes, (Extents{3, 2}));
  // Output 2 reads inputs 3..5, so rank 0 borrows one element from the right.
  EXPECT_EQ(plan.ranks[0].right_width, 1u);
  EXPECT_EQ(plan.ranks[1].left_width, 0u);
  EXPECT_EQ(plan.ranks[0].pad_lo, 1u);
  EXPECT_EQ(plan.ranks[1].pad_hi, 0u);

  const auto skip = plan_halo_conv({4, 0, 4}, 3, 1, 1);
  EXPECT_EQ(skip.output_shapes, (Extents{5, 0, 3}));  // outputs 0 and 1 both anchor at input 0
  EXPECT_EQ(skip.ranks[0].right_width, 2u);             // inputs 4 and 5, across the empty rank
  EXPECT_THROW(plan_halo_conv({4, 4}, 2, 1, 0), UnsupportedError);
  EXPECT_THROW(plan_halo_conv({1, 1}, 5, 1, 0), ShapeError);
}

TEST(HaloConv, MultiHopIsRejectedOnEveryRank) {
  try {
    plan_halo_conv({8, 1, 8}, 5, 1, 2, {0, 1, 2});
    FAIL();
  } catch (const HaloError& e) {
    EXPECT_NE(std::string(e.what()).find("multi-hop"), std::string::npos);
  }
  const auto x = Tensor<double>::arange(17).reshaped({1, 17});
  const Tensor<double> w({1, 1, 5}, 1.0);
  try {
    spawn_mesh(DeviceMesh::line(3), [&](RankContext& ctx) {
      halo_conv(scatter_along(ctx, x, 1, {8, 1, 8}), w, 1, 2);
    });
    FAIL();
  } catch (const MeshError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("rank 0 failed"), std::string::npos);
    EXPECT_NE(msg.find("rank 2 failed"), std::string::npos);
  }
}

TEST(HaloConv, OneDimensionalExample) {
  const auto x = Tensor<double>::arange(10).reshaped({1, 10});
  const Tensor<double> w({1, 1, 3}, std::vector<double>{0.25, 0.5, 0.25});
  spawn_mesh(DeviceMesh::line(2), [&](RankContext& ctx) {
    const auto y = halo_conv(scatter_global(ctx, x, {Placement::shard(1)}), w, 2, 1);
    EXPECT_EQ(y.sharding_shapes().at(0), (Extents{3, 2}));
    EXPECT_EQ(ctx.stats().count(CollectiveKind::kHaloExchange), 1u);
    EXPECT_TRUE(bitwise_equal(full_tensor(y), conv(x, w, 2, 1)));
  });
}

TEST(HaloConv, TwoDimensionalShardedRowsAndCols) {
  auto rng = testutil::rng(5);
  const auto x = Tensor<double>::random({2, 3, 19, 14}, rng);
  const auto w = Tensor<double>::random({4, 3, 5, 3}, rng);
  for (std::size_t dim : {2, 3}) {
    for (std::size_t stride : {1, 2, 3}) {
      const auto want = conv(x, w, stride, 2);
      spawn_mesh(DeviceMesh::line(3), [&](RankContext& ctx) {
        const auto y = halo_conv(scatter_global(ctx, x, {Placement::shard(dim)}), w, stride, 2);
        EXPECT_LE(max_relative_error(full_tensor(y), want), 1e-15) << dim << ' ' << stride;
      });
    }
  }
}

TEST(HaloConv, ShardedChannelOrTwoSpatialDimsUnsupported) {
  const auto x = Tensor<double>({2, 8, 8});
  const Tensor<double> w({1, 2, 3, 3});
  spawn_mesh(DeviceMesh({2, 2}, {"a", "b"}), [&](RankContext& ctx) {
    EXPECT_THROW(halo_conv(scatter_global(ctx, x, {Placement::shard(0), Placement::replicate()}), w, 1, 1),
                 UnsupportedError);
    EXPECT_THROW(halo_conv(scatter_global(ctx, x, {Placement::shard(1), Placement::shard(2)}), w, 1, 1),
                 UnsupportedError);
  });
}

TEST(RingAttention, MatchesDenseWithRMinusOneShifts) {
  auto rng = testutil::rng(6);
  const auto q = Tensor<double>::random({23, 8}, rng);
  const auto k = Tensor<double>::random({23, 8}, rng);
  const auto v = Tensor<double>::random({23, 8}, rng);
  for (std::size_t heads : {1, 2, 4}) {
    const auto want = multi_head_attention(q, k, v, heads);
    for (std::size_t r : {1, 2, 3, 5}) {
      spawn_mesh(DeviceMesh::line(r), [&](RankContext& ctx) {
        auto sq = scatter_global(ctx, q, {Placement::shard(0)});
        auto sk = scatter_global(ctx, k, {Placement::shard(0)});
        auto sv = scatter_global(ctx, v, {Placement::shard(0)});
        const std::size_t before = ctx.stats().count(CollectiveKind::kRingShift);
        const auto y = ring_attention(sq, sk, sv, heads);
        EXPECT_EQ(ctx.stats().count(CollectiveKind::kRingShift) - before, r - 1);
        EXPECT_LE(max_relative_error(full_tensor(y), want), 1e-14);
      });
    }
  }
}

TEST(RingAttention, ObserverSeesEveryBlockOnceAndStateInvariant) {
  auto rng = testutil::rng(7);
  const auto q = Tensor<double>::random({12, 4}, rng);
  const auto k = Tensor<double>::random({12, 4}, rng);
  const auto v = Tensor<double>::random({12, 4}, rng);
  spawn_mesh(DeviceMesh::line(4), [&](RankContext& ctx) {
    const Extents e{3, 3, 0, 6};
    const auto sq = scatter_along(ctx, q, 0, e);
    const auto sk = scatter_along(ctx, k, 0, e);
    const auto sv = scatter_along(ctx, v, 0, e);
    const auto full_k = k, full_v = v;
    std::vector<std::size_t> blocks;
    ring_attention(sq, sk, sv, 1, [&](std::size_t step, std::size_t block, const RingAttentionState& st) {
      EXPECT_EQ(step, blocks.size());
      blocks.push_back(block);
      // After folding blocks b_0..b_step, acc/l equals attention over those keys only.
      std::size_t kbeg = 0;
      std::vector<std::size_t> rows;
      for (std::size_t b : blocks) {
        kbeg = 0;
        for (std::size_t i = 0; i < b; ++i) kbeg += e[i];
        for (std::size_t j = 0; j < e[b]; ++j) rows.push_back(kbeg + j);
      }
      if (rows.empty()) return;
      Tensor<double> ks({rows.size(), 4}), vs({rows.size(), 4});
      for (std::size_t j = 0; j < rows.size(); ++j)
        for (std::size_t c = 0; c < 4; ++c) {
          ks.at(j, c) = full_k.at(rows[j], c);
          vs.at(j, c) = full_v.at(rows[j], c);
        }
      const auto partial = sdpa_dense(sq.local(), ks, vs);
      for (std::size_t i = 0; i < sq.local().extent(0); ++i) {
        EXPECT_GT(st.l[i], 0.0);
        for (std::size_t c = 0; c < 4; ++c)
          EXPECT_NEAR(st.acc.at(i, c) / st.l[i], partial.at(i, c), 1e-14);
      }
    });
    std::sort(blocks.begin(), blocks.end());
    EXPECT_EQ(blocks, (Extents{0, 1, 2, 3}));
  });
}

TEST(RingAttention, ExtremeLogitsStayFinite) {
  auto rng = testutil::rng(8);
  const auto q = scale(Tensor<double>::random({32, 4}, rng), 1e4);
  const auto k = scale(Tensor<double>::random({32, 4}, rng), 1e4);
  const auto v = Tensor<double>::random({32, 4}, rng);
  const auto want = sdpa_dense(q, k, v);
  spawn_mesh(DeviceMesh::line(4), [&](RankContext& ctx) {
    const auto y = full_tensor(ring_attention(scatter_global(ctx, q, {Placement::shard(0)}),
                                              scatter_global(ctx, k, {Placement::shard(0)}),
                                              scatter_global(ctx, v, {Placement::shard(0)})));
    for (double e : y.data()) EXPECT_TRUE(std::isfinite(e));
    EXPECT_LE(max_relative_error(y, want), 1e-4);
  });
}

TEST(RingAttention, Errors) {
  const auto t = Tensor<double>({6, 6});
  spawn_mesh(DeviceMesh::line(2), [&](RankContext& ctx) {
    const auto a = scatter_global(ctx, t, {Placement::shard(0)});
    EXPECT_THROW(ring_attention(a, a, a, 4), DimensionError);
    const auto b = scatter_along(ctx, t, 0, {1, 5});
    EXPECT_THROW(ring_attention(a, b, a), MetadataError);
    const auto c = scatter_global(ctx, t, {Placement::shard(1)});
    EXPECT_THROW(ring_attention(c, c, c), UnsupportedError);
  });
}

TEST(Ddp, AveragesAcrossReplicas) {
  const auto out = spawn_mesh(DeviceMesh({2, 2}, {"dp", "domain"}), [](RankContext& ctx) {
    std::vector<Tensor<double>> g{Tensor<double>({3}, double(ctx.coords()[0] + 1)),
                                  Tensor<double>({2, 2}, double(ctx.rank()))};
    return ddp_allreduce_grads(ctx, g, "dp");
  });
  EXPECT_EQ(out[0][0][0], 1.5);
  EXPECT_EQ(out[0][1][0], 1.0);  // ranks 0 and 2
  EXPECT_EQ(out[3][1][0], 2.0);  // ranks 1 and 3
}

TEST(Ddp, ShapeMismatchFails) {
  EXPECT_THROW(spawn_mesh(DeviceMesh::line(2), [](RankContext& ctx) {
    ddp_allreduce_grads(ctx, std::vector<Tensor<double>>{Tensor<double>({ctx.rank() + 2})}, std::size_t{0});
  }), MeshError);
}

TEST(ViT, PipelineMatchesDense) {
  ViTConfig cfg;
  const auto w = make_vit_weights<double>(cfg, 11);
  auto rng = testutil::rng(9);
  const auto image = Tensor<double>::random({1, 48, 40}, rng);
  const auto want = vit_forward_dense(image, w, cfg);
  for (std::size_t r : {1, 2, 4}) {
    for (std::size_t dim : {1, 2}) {
      spawn_mesh(DeviceMesh::line(r), [&](RankContext& ctx) {
        const auto y = vit_block_pipeline(scatter_global(ctx, image, {Placement::shard(dim)}), w, cfg);
        EXPECT_EQ(y.global_shape(), want.shape());
        EXPECT_LE(max_relative_error(full_tensor(y), want), 1e-12) << r << ' ' << dim;
      });
    }
  }
}

TEST(ViT, TapeHoldsTenTensorsPerLayer) {
  ViTConfig cfg;
  const auto w = make_vit_weights<float>(cfg, 1);
  const auto image = Tensor<float>({1, 32, 32});
  spawn_mesh(DeviceMesh::line(2), [&](RankContext& ctx) {
    ActivationTape<float> tape;
    vit_block_pipeline(scatter_global(ctx, image, {Placement::shard(1)}), w, cfg, &tape);
    EXPECT_EQ(tape.size(), 1 + 10 * cfg.layers);
    EXPECT_GT(tape.saved_bytes(), 0u);
  });
}

TEST(ViT, ConfigValidation) {
  ViTConfig cfg;
  cfg.kernel = 4;
  EXPECT_THROW(cfg.validate(), UnsupportedError);
  cfg = {};
  cfg.heads = 3;
  EXPECT_THROW(cfg.validate(), DimensionError);
}
