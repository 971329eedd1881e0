// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "dompar/shard_tensor.hpp"
#include "test_util.hpp"

using namespace dompar;
using Extents = std::vector<std::size_t>;

TEST(DefaultChunk, Examples) {
  EXPECT_EQ(default_chunk(8, 4), (Extents{2, 2, 2, 2}));
  EXPECT_EQ(default_chunk(10, 4), (Extents{3, 3, 3, 1}));
  EXPECT_EQ(default_chunk(5, 4), (Extents{2, 2, 1, 0}));
  EXPECT_EQ(default_chunk(0, 3), (Extents{0, 0, 0}));
  EXPECT_THROW(default_chunk(4, 0), MetadataError);
}

TEST(DefaultChunk, SumsToExtentAndIsNonIncreasing) {
  for (std::size_t n = 0; n < 40; ++n) {
    for (std::size_t r = 1; r <= 9; ++r) {
      const auto e = default_chunk(n, r);
      std::size_t sum = 0;
      for (std::size_t i = 0; i < e.size(); ++i) {
        sum += e[i];
        if (i) {
          EXPECT_LE(e[i], e[i - 1]);
        }
      }
      EXPECT_EQ(sum, n);
    }
  }
}

TEST(ShardTensor, ScatterWithExplicitShapes) {
  const auto global = Tensor<double>::arange(256).reshaped({256, 1});
  const auto out = spawn_mesh(DeviceMesh::line(4), [&](RankContext& ctx) {
    const auto st = scatter_global(ctx, global, {Placement::shard(0)},
                                   ShardingShapes::single({100, 73, 50, 33}));
    EXPECT_EQ(st.offset_along(0), (Extents{0, 100, 173, 223})[ctx.rank()]);
    EXPECT_TRUE(bitwise_equal(full_tensor(st), global));
    return st.local().shape();
  });
  EXPECT_EQ(out[0], (Shape{100, 1}));
  EXPECT_EQ(out[1], (Shape{73, 1}));
  EXPECT_EQ(out[2], (Shape{50, 1}));
  EXPECT_EQ(out[3], (Shape{33, 1}));
}

TEST(ShardTensor, BadShapesRejected) {
  const auto global = Tensor<double>::arange(10);
  auto run = [&](ShardingShapes s) {
    spawn_mesh(DeviceMesh::line(2), [&](RankContext& ctx) {
      scatter_global(ctx, global, {Placement::shard(0)}, s);
    });
  };
  auto expect_metadata = [&](ShardingShapes s) {
    try {
      run(std::move(s));
      FAIL();
    } catch (const MeshError& e) {
      EXPECT_NE(std::string(e.what()).find("sum to"), std::string::npos) << e.what();
    }
  };
  expect_metadata(ShardingShapes::single({6, 5}));
  EXPECT_THROW(run(ShardingShapes::single({10})), MeshError);
  EXPECT_THROW(spawn_mesh(DeviceMesh::line(2),
                          [&](RankContext& ctx) { scatter_global(ctx, global, {Placement::shard(1)}); }),
               MeshError);
}

TEST(ShardTensor, LocalMismatchIsIntegrityError) {
  spawn_mesh(DeviceMesh::line(2), [](RankContext& ctx) {
    EXPECT_THROW(ShardTensor<double>(ctx, Tensor<double>({4}), {6}, {Placement::shard(0)},
                                     ShardingShapes::single({3, 3})),
                 IntegrityError);
    EXPECT_THROW(ShardTensor<double>(ctx, Tensor<double>({3}), {6}, {Placement::shard(0)},
                                     ShardingShapes::single({3, 2})),
                 MetadataError);
  });
}

TEST(ShardTensor, RoundTripIsBitwise) {
  auto rng = testutil::rng(3);
  const auto global = Tensor<float>::random({7, 5, 3}, rng);
  for (std::size_t dim = 0; dim < 3; ++dim)
    for (std::size_t r : {1, 2, 3, 8}) {
      spawn_mesh(DeviceMesh::line(r), [&](RankContext& ctx) {
        const auto st = scatter_global(ctx, global, {Placement::shard(dim)});
        EXPECT_TRUE(bitwise_equal(full_tensor(st), global));
        EXPECT_TRUE(bitwise_equal(full_tensor(redistribute(st, {Placement::replicate()})), global));
      });
    }
}

TEST(ShardTensor, ReplicatedRoundTrip) {
  const auto global = Tensor<double>::arange(6);
  spawn_mesh(DeviceMesh::line(3), [&](RankContext& ctx) {
    const auto st = scatter_global(ctx, global, {Placement::replicate()});
    EXPECT_TRUE(st.is_replicated());
    EXPECT_TRUE(bitwise_equal(st.local(), global));
    EXPECT_TRUE(check_replication(st));
    const auto bad = ShardTensor<double>(ctx, scale(global, double(ctx.rank())), {6},
                                         {Placement::replicate()}, ShardingShapes(1));
    EXPECT_FALSE(check_replication(bad));
  });
}

TEST(ShardTensor, RedistributeBetweenDims) {
  auto rng = testutil::rng(8);
  const auto global = Tensor<double>::random({6, 9}, rng);
  spawn_mesh(DeviceMesh::line(4), [&](RankContext& ctx) {
    const auto st = scatter_global(ctx, global, {Placement::shard(0)},
                                   ShardingShapes::single({0, 5, 1, 0}));
    const auto moved = redistribute(st, {Placement::shard(1)});
    EXPECT_EQ(moved.sharding_shapes().at(0), default_chunk(9, 4));
    EXPECT_TRUE(bitwise_equal(full_tensor(moved), global));
    const auto back = redistribute(moved, {Placement::shard(0)});
    EXPECT_EQ(back.sharding_shapes().at(0), default_chunk(6, 4));
    EXPECT_TRUE(bitwise_equal(full_tensor(back), global));
  });
}

TEST(ShardTensor, TwoDimensionalMesh) {
  auto rng = testutil::rng(12);
  const auto global = Tensor<double>::random({5, 7}, rng);
  const DeviceMesh mesh({2, 3}, {"dp", "domain"});
  spawn_mesh(mesh, [&](RankContext& ctx) {
    const auto st = scatter_global(ctx, global, {Placement::shard(0), Placement::shard(1)});
    EXPECT_EQ(st.local().extent(0), default_chunk(5, 2)[ctx.coords()[0]]);
    EXPECT_EQ(st.local().extent(1), default_chunk(7, 3)[ctx.coords()[1]]);
    EXPECT_TRUE(bitwise_equal(full_tensor(st), global));
    const auto half = scatter_global(ctx, global, {Placement::replicate(), Placement::shard(0)});
    EXPECT_TRUE(check_replication(half));
    EXPECT_TRUE(bitwise_equal(full_tensor(half), global));
  });
}

TEST(ShardTensor, RebalanceCheck) {
  const auto global = Tensor<double>::arange(8);
  const std::vector<std::pair<Extents, double>> cases = {
      {{2, 2, 2, 2}, 1.0}, {{3, 3, 1, 1}, 1.5}, {{4, 2, 2, 0}, 2.0}};
  for (const auto& c : cases) {
    spawn_mesh(DeviceMesh::line(4), [&, extents = c.first, ratio = c.second](RankContext& ctx) {
      const auto st = scatter_global(ctx, global, {Placement::shard(0)}, ShardingShapes::single(extents));
      const auto b = rebalance_check(st);
      EXPECT_DOUBLE_EQ(b.imbalance, ratio);
      EXPECT_EQ(b.has_empty_shard, extents.back() == 0);
      EXPECT_EQ(b.extents, extents);
      // Read-only: no collectives and no data movement.
      EXPECT_EQ(ctx.stats().count(CollectiveKind::kAllGather), 0u);
    });
  }
}

TEST(ShardTensor, DebugDump) {
  const auto out = spawn_mesh(DeviceMesh::line(2), [](RankContext& ctx) {
    const auto st = scatter_global(ctx, Tensor<double>::arange(10).reshaped({1, 10}), {Placement::shard(1)});
    return debug_dump(st);
  });
  EXPECT_EQ(out[0], "rank=0 coords=(0) local_shape=[1,5] placements=[Shard(1)] shard_shapes=[[5,5]]");
  EXPECT_NE(out[1].find("rank=1 coords=(1) local_shape=[1,5]"), std::string::npos);
}
