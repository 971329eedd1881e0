// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

// Strong-scaling micro-benchmarks over the in-process runtime.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dompar/activation_tape.hpp"
#include "dompar/collectives.hpp"
#include "dompar/mesh.hpp"
#include "dompar/parallel_ops.hpp"
#include "dompar/shard_tensor.hpp"
#include "dompar/vit.hpp"

namespace dompar {

struct BenchConfig {
  std::string op;
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> ranks;
  std::size_t repeats = 5;
  std::size_t warmup = 1;
  std::uint64_t seed = 42;
  std::string out;  // empty: stdout

  void validate() const;
};

struct BenchRecord {
  std::string op;
  std::size_t ranks = 1;
  std::size_t global_size = 0;
  double mean_ms = 0;
  double p50_ms = 0;
  double p95_ms = 0;
  std::int64_t peak_bytes_per_rank = 0;
};

// global_size is the sequence length for ring-attention, the square image
// side for halo-conv and vit-block, and the sharded row count otherwise.
inline const std::vector<std::string>& bench_ops() {
  static const std::vector<std::string> ops = {"elementwise", "linear",     "softmax",
                                               "layer-norm",  "halo-conv",  "ring-attention",
                                               "vit-block"};
  return ops;
}

inline void BenchConfig::validate() const {
  const auto& ops = bench_ops();
  if (std::find(ops.begin(), ops.end(), op) == ops.end()) {
    throw UnsupportedError("unknown bench op '" + op + "'");
  }
  if (repeats == 0) throw ShapeError("repeats must be at least 1");
  if (sizes.empty() || ranks.empty()) throw ShapeError("bench needs sizes and rank counts");
  for (auto r : ranks)
    if (r == 0) throw ShapeError("rank counts must be at least 1");
  for (auto s : sizes)
    if (s == 0) throw ShapeError("sizes must be at least 1");
}

namespace detail {

// Nearest-rank percentile of sorted samples.
inline double percentile(const std::vector<double>& sorted, double q) {
  const auto n = static_cast<double>(sorted.size());
  const auto idx = static_cast<std::size_t>(std::max(1.0, std::ceil(q * n))) - 1;
  return sorted[std::min(idx, sorted.size() - 1)];
}

// Builds the rank's inputs and returns the operation to time.
template <Real T>
std::function<void()> bench_body(const std::string& op, RankContext& ctx, std::size_t size,
                                 std::uint64_t seed) {
  const Placements shard0{Placement::shard(0)};
  std::mt19937_64 rng(seed);
  auto scatter = [&](const Tensor<T>& t, Placements p) {
    return scatter_global(ctx, ctx.rank() == 0 ? t : Tensor<T>(), std::move(p));
  };
  auto random = [&](Shape s) { return ctx.rank() == 0 ? Tensor<T>::random(s, rng) : Tensor<T>(); };

  if (op == "elementwise") {
    auto a = scatter(random({size, 64}), shard0);
    auto b = scatter(random({size, 64}), shard0);
    return [a, b] { sharded_elementwise(ElementwiseOp::kAdd, a, b); };
  }
  if (op == "linear") {
    std::mt19937_64 wrng(seed + 1);
    auto x = scatter(random({size, 64}), shard0);
    auto w = Tensor<T>::random({64, 64}, wrng);
    auto b = Tensor<T>::random({64}, wrng);
    return [x, w, b] { sharded_linear(x, w, b); };
  }
  if (op == "softmax") {
    auto x = scatter(random({size, 64}), shard0);
    return [x] { sharded_softmax(x, 0); };
  }
  if (op == "layer-norm") {
    auto x = scatter(random({size, 64}), shard0);
    return [x] { sharded_layer_norm(x, 0, 1e-5); };
  }
  if (op == "halo-conv") {
    std::mt19937_64 wrng(seed + 1);
    auto x = scatter(random({4, size, size}), Placements{Placement::shard(1)});
    auto w = Tensor<T>::random({4, 4, 3, 3}, wrng);
    return [x, w] { halo_conv(x, w, 1, 1); };
  }
  if (op == "ring-attention") {
    auto q = scatter(random({size, 32}), shard0);
    auto k = scatter(random({size, 32}), shard0);
    auto v = scatter(random({size, 32}), shard0);
    return [q, k, v] { ring_attention(q, k, v, 2); };
  }
  ViTConfig cfg;
  auto image = scatter(random({cfg.in_channels, size, size}), Placements{Placement::shard(1)});
  auto weights = std::make_shared<ViTWeights<T>>(make_vit_weights<T>(cfg, seed + 1));
  return [image, weights, cfg] {
    ActivationTape<T> tape;
    vit_block_pipeline(image, *weights, cfg, &tape);
  };
}

}  // namespace detail

// One record per (size, ranks) cell, sizes outer, ranks inner. Peak bytes
// are measured on the first timed repeat relative to the live bytes before
// it, maximized over ranks.
inline std::vector<BenchRecord> run_bench(const BenchConfig& cfg) {
  cfg.validate();
  std::vector<BenchRecord> records;
  for (std::size_t size : cfg.sizes) {
    for (std::size_t ranks : cfg.ranks) {
      struct RankResult {
        std::vector<double> ms;
        std::int64_t peak = 0;
      };
      auto per_rank = spawn_mesh(DeviceMesh::line(ranks), [&](RankContext& ctx) {
        auto body = detail::bench_body<float>(cfg.op, ctx, size, cfg.seed);
        const AxisGroup all = ctx.group(std::size_t{0});
        RankResult res;
        for (std::size_t i = 0; i < cfg.warmup; ++i) body();
        for (std::size_t i = 0; i < cfg.repeats; ++i) {
          barrier(ctx, all);
          const std::int64_t base = ctx.memory().live();
          ctx.memory().reset_peak();
          const auto t0 = std::chrono::steady_clock::now();
          body();
          barrier(ctx, all);
          const auto t1 = std::chrono::steady_clock::now();
          res.ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
          if (i == 0) res.peak = ctx.memory().peak() - base;
        }
        return res;
      }, MeshOptions{cfg.seed, collective_timeout_from_env()});

      BenchRecord rec;
      rec.op = cfg.op;
      rec.ranks = ranks;
      rec.global_size = size;
      std::vector<double> ms = per_rank.front().ms;
      for (const auto& r : per_rank) {
        rec.peak_bytes_per_rank = std::max(rec.peak_bytes_per_rank, r.peak);
        for (std::size_t i = 0; i < ms.size(); ++i) ms[i] = std::max(ms[i], r.ms[i]);
      }
      double sum = 0;
      for (double v : ms) sum += v;
      rec.mean_ms = sum / static_cast<double>(ms.size());
      std::sort(ms.begin(), ms.end());
      rec.p50_ms = detail::percentile(ms, 0.50);
      rec.p95_ms = detail::percentile(ms, 0.95);
      if (ms.size() == 1) rec.mean_ms = rec.p50_ms;
      records.push_back(rec);
    }
  }
  return records;
}

inline constexpr const char* kBenchCsvHeader =
    "op,ranks,global_size,mean_ms,p50_ms,p95_ms,peak_bytes_per_rank";

inline std::string bench_csv(const std::vector<BenchRecord>& records) {
  std::string out = std::string(kBenchCsvHeader) + "\n";
  char line[256];
  for (const auto& r : records) {
    std::snprintf(line, sizeof line, "%s,%zu,%zu,%.4f,%.4f,%.4f,%lld\n", r.op.c_str(), r.ranks,
                  r.global_size, r.mean_ms, r.p50_ms, r.p95_ms,
                  static_cast<long long>(r.peak_bytes_per_rank));
    out += line;
  }
  return out;
}

}  // namespace dompar
