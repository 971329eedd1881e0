// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <atomic>
#include <chrono>

#include "dompar/collectives.hpp"
#include "dompar/mesh.hpp"
#include "test_util.hpp"

using namespace dompar;
using namespace std::chrono_literals;

namespace {

MeshOptions short_timeout() {
  MeshOptions o;
  o.timeout = 300ms;
  return o;
}

Tensor<double> scalar(double v) { return Tensor<double>({1}, v); }

}  // namespace

TEST(DeviceMesh, Validation) {
  EXPECT_THROW(DeviceMesh({}, {}), MetadataError);
  EXPECT_THROW(DeviceMesh({2, 2, 2}, {"a", "b", "c"}), MetadataError);
  EXPECT_THROW(DeviceMesh({2, 2}, {"a", "a"}), MetadataError);
  EXPECT_THROW(DeviceMesh({0}, {"a"}), MetadataError);
  EXPECT_THROW(DeviceMesh({2}, {"a", "b"}), MetadataError);
}

TEST(DeviceMesh, RowMajorCoordinates) {
  const DeviceMesh mesh({2, 3}, {"dp", "domain"});
  EXPECT_EQ(mesh.world_size(), 6u);
  for (std::size_t r = 0; r < 6; ++r) EXPECT_EQ(mesh.rank_of(mesh.coords_of(r)), r);
  EXPECT_EQ(mesh.coords_of(5), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(mesh.group(4, 1).members, (std::vector<std::size_t>{3, 4, 5}));
  EXPECT_EQ(mesh.group(4, 0).members, (std::vector<std::size_t>{1, 4}));
  EXPECT_EQ(mesh.axis_index("domain"), 1u);
  EXPECT_THROW(mesh.axis_index("nope"), MetadataError);
}

TEST(SpawnMesh, ResultsInRankOrder) {
  const DeviceMesh mesh({2, 2}, {"a", "b"});
  const auto coords = spawn_mesh(mesh, [](RankContext& ctx) { return ctx.coords(); });
  EXPECT_EQ(coords.size(), 4u);
  EXPECT_EQ(coords[3], (std::vector<std::size_t>{1, 1}));
  EXPECT_EQ(spawn_mesh(DeviceMesh::line(1), [](RankContext&) { return 7; }).size(), 1u);
}

TEST(SpawnMesh, FailureNamesRankAndUnwindsPeers) {
  const auto start = std::chrono::steady_clock::now();
  try {
    spawn_mesh(DeviceMesh::line(4), [](RankContext& ctx) {
      if (ctx.rank() == 1) throw std::runtime_error("boom");
      barrier(ctx, ctx.group(std::size_t{0}));
    }, MeshOptions{42, 20s});
    FAIL();
  } catch (const MeshError& e) {
    EXPECT_EQ(e.failing_rank(), 1u);
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
  EXPECT_LT(std::chrono::steady_clock::now() - start, 5s);
}

TEST(SpawnMesh, PerRankRngDiffersAndIsSeeded) {
  auto draw = [](std::uint64_t seed) {
    return spawn_mesh(DeviceMesh::line(3), [](RankContext& ctx) { return ctx.rng()(); },
                      MeshOptions{seed, 5s});
  };
  const auto a = draw(1), b = draw(1), c = draw(2);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_NE(a[0], a[1]);
}

TEST(Collectives, AllReduceSumAndMax) {
  spawn_mesh(DeviceMesh::line(4), [](RankContext& ctx) {
    const auto g = ctx.group(std::size_t{0});
    EXPECT_EQ(all_reduce(ctx, g, scalar(double(ctx.rank())), ReduceOp::kSum)[0], 6.0);
    const double vals[] = {-1, 5, 3, 3};
    EXPECT_EQ(all_reduce(ctx, g, scalar(vals[ctx.rank()]), ReduceOp::kMax)[0], 5.0);
    EXPECT_EQ(ctx.stats().count(CollectiveKind::kAllReduce), 2u);
  });
}

TEST(Collectives, AllReduceMatchesSequentialFold) {
  std::vector<Tensor<double>> inputs;
  auto rng = testutil::rng(31);
  for (int r = 0; r < 5; ++r) inputs.push_back(Tensor<double>::random({7}, rng));
  Tensor<double> fold = inputs[0];
  for (int r = 1; r < 5; ++r)
    for (std::size_t i = 0; i < 7; ++i) fold[i] = fold[i] + inputs[r][i];
  const auto out = spawn_mesh(DeviceMesh::line(5), [&](RankContext& ctx) {
    return all_reduce(ctx, ctx.group(std::size_t{0}), inputs[ctx.rank()], ReduceOp::kSum);
  });
  for (const auto& o : out) EXPECT_TRUE(bitwise_equal(o, fold));
}

TEST(Collectives, AllReduceShapeDisagreement) {
  EXPECT_THROW(spawn_mesh(DeviceMesh::line(2), [](RankContext& ctx) {
    all_reduce(ctx, ctx.group(std::size_t{0}), Tensor<double>({ctx.rank() + 1}), ReduceOp::kSum);
  }, short_timeout()), MeshError);
}

TEST(Collectives, AllGatherVarlen) {
  const std::size_t lengths[] = {2, 3, 1, 0};
  const auto out = spawn_mesh(DeviceMesh::line(4), [&](RankContext& ctx) {
    Tensor<double> local({lengths[ctx.rank()], 2}, double(ctx.rank()));
    auto g = all_gather_varlen(ctx, ctx.group(std::size_t{0}), local, 0);
    // Re-slicing by the recorded lengths recovers the local exactly.
    std::size_t off = 0;
    for (std::size_t r = 0; r < ctx.rank(); ++r) off += lengths[r];
    EXPECT_TRUE(bitwise_equal(slice(g, 0, off, lengths[ctx.rank()]), local));
    return g;
  });
  EXPECT_EQ(out[0].shape(), (Shape{6, 2}));
  EXPECT_EQ(out[0].at(0, 0), 0);
  EXPECT_EQ(out[0].at(4, 1), 1);
  EXPECT_EQ(out[0].at(5, 0), 2);
}

TEST(Collectives, BroadcastFromRoot) {
  const auto out = spawn_mesh(DeviceMesh::line(3), [](RankContext& ctx) {
    return broadcast(ctx, ctx.group(std::size_t{0}), scalar(10.0 + double(ctx.rank())), 2)[0];
  });
  EXPECT_EQ(out, (std::vector<double>{12, 12, 12}));
}

TEST(Collectives, RingShift) {
  const auto once = spawn_mesh(DeviceMesh::line(3), [](RankContext& ctx) {
    return ring_shift(ctx, ctx.group(std::size_t{0}), scalar(double(ctx.rank())))[0];
  });
  EXPECT_EQ(once, (std::vector<double>{2, 0, 1}));

  const auto self = spawn_mesh(DeviceMesh::line(1), [](RankContext& ctx) {
    return ring_shift(ctx, ctx.group(std::size_t{0}), scalar(4.0))[0];
  });
  EXPECT_EQ(self[0], 4.0);

  const auto cycled = spawn_mesh(DeviceMesh::line(4), [](RankContext& ctx) {
    auto t = Tensor<double>({ctx.rank()}, double(ctx.rank()));  // uneven payloads
    for (int i = 0; i < 4; ++i) t = ring_shift(ctx, ctx.group(std::size_t{0}), t);
    return t.numel() == ctx.rank() && (t.numel() == 0 || t[0] == double(ctx.rank()));
  });
  for (bool ok : cycled) EXPECT_TRUE(ok);
}

TEST(Collectives, HaloExchange) {
  const auto out = spawn_mesh(DeviceMesh::line(2), [](RankContext& ctx) {
    const auto local = slice(Tensor<double>::arange(8), 0, 4 * ctx.rank(), 4);
    EXPECT_TRUE(bitwise_equal(halo_exchange(ctx, ctx.group(std::size_t{0}), local, 0, 0, 0), local));
    return halo_exchange(ctx, ctx.group(std::size_t{0}), local, 0, 1, 1);
  });
  EXPECT_TRUE(bitwise_equal(out[0], Tensor<double>({5}, std::vector<double>{0, 1, 2, 3, 4})));
  EXPECT_TRUE(bitwise_equal(out[1], Tensor<double>({5}, std::vector<double>{3, 4, 5, 6, 7})));
}

TEST(Collectives, HaloWiderThanNeighborFails) {
  try {
    spawn_mesh(DeviceMesh::line(2), [](RankContext& ctx) {
      const auto local = Tensor<double>::arange(ctx.rank() == 0 ? 4 : 2);
      halo_exchange(ctx, ctx.group(std::size_t{0}), local, 0, 0, ctx.rank() == 0 ? 3 : 0);
    }, short_timeout());
    FAIL();
  } catch (const MeshError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("rank 0"), std::string::npos);
    EXPECT_NE(msg.find("rank 1"), std::string::npos);
    EXPECT_NE(msg.find("multi-hop"), std::string::npos);
  }
}

TEST(Collectives, Barrier) {
  std::atomic<int> counter{0};
  const auto seen = spawn_mesh(DeviceMesh::line(4), [&](RankContext& ctx) {
    ++counter;
    barrier(ctx, ctx.group(std::size_t{0}));
    return counter.load();
  });
  for (int s : seen) EXPECT_EQ(s, 4);
  spawn_mesh(DeviceMesh::line(1), [](RankContext& ctx) { barrier(ctx, ctx.group(std::size_t{0})); });
}

TEST(Collectives, MissingPeerTimesOut) {
  const auto start = std::chrono::steady_clock::now();
  try {
    spawn_mesh(DeviceMesh::line(3), [](RankContext& ctx) {
      if (ctx.rank() != 2) barrier(ctx, ctx.group(std::size_t{0}));
    }, short_timeout());
    FAIL();
  } catch (const MeshError& e) {
    EXPECT_NE(std::string(e.what()).find("timed out"), std::string::npos);
  }
  EXPECT_LT(std::chrono::steady_clock::now() - start, 5s);
}

TEST(Collectives, TwoDimensionalGroups) {
  const DeviceMesh mesh({2, 2}, {"dp", "domain"});
  const auto out = spawn_mesh(mesh, [](RankContext& ctx) {
    const auto along_domain = all_reduce(ctx, ctx.group("domain"), scalar(double(ctx.rank())), ReduceOp::kSum);
    const auto along_dp = all_reduce(ctx, ctx.group("dp"), scalar(double(ctx.rank())), ReduceOp::kSum);
    return std::pair{along_domain[0], along_dp[0]};
  });
  EXPECT_EQ(out[0], (std::pair{1.0, 2.0}));
  EXPECT_EQ(out[3], (std::pair{5.0, 4.0}));
}
