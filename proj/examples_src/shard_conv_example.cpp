// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

// Scatters a 1-D signal over two ranks, runs a strided convolution through
// the dispatcher, and prints each rank's layout and dispatch trace.

#include <iostream>
#include <mutex>
#include <variant>

#include "dompar/parallel_ops.hpp"

int main() {
  using namespace dompar;
  const Tensor<double> signal = Tensor<double>::arange(10).reshaped({1, 10});
  const Tensor<double> kernel({1, 1, 3}, std::vector<double>{0.25, 0.5, 0.25});
  const Dispatcher<double> dispatch = make_default_dispatcher<double>();
  std::mutex io;

  spawn_mesh(DeviceMesh::line(2), [&](RankContext& ctx) {
    const auto x = scatter_global(ctx, signal, {Placement::shard(1)});
    const auto y = std::get<ShardTensor<double>>(dispatch.dispatch(
        "conv", {x, kernel, std::int64_t{2}, std::int64_t{1}}));
    const Tensor<double> full = full_tensor(y);

    std::lock_guard lock(io);
    std::cout << debug_dump(x) << '\n' << debug_dump(y) << '\n' << ctx.trace().dump();
    if (ctx.rank() == 0) {
      std::cout << "gathered:";
      for (double v : full.data()) std::cout << ' ' << v;
      std::cout << '\n';
    }
  });
}
