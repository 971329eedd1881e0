// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

// Randomized equivalence checks: every parallel operator, run on scattered
// random inputs with random (uneven, sometimes empty) shards, must gather to
// the dense result. Shared by `dompar verify` and the acceptance suite.

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dompar/collectives.hpp"
#include "dompar/mesh.hpp"
#include "dompar/ops.hpp"
#include "dompar/parallel_ops.hpp"
#include "dompar/shard_tensor.hpp"
#include "dompar/vit.hpp"

namespace dompar {

inline const std::vector<std::string>& verification_ops() {
  static const std::vector<std::string> ops = {"elementwise", "linear",         "softmax",
                                               "layer_norm",  "halo_conv",      "ring_attention",
                                               "vit_block"};
  return ops;
}

template <Real T>
constexpr double default_tolerance() {
  return std::same_as<T, double> ? 1e-12 : 1e-5;
}

struct VerifyOptions {
  std::uint64_t seed = 42;
  std::optional<std::string> filter;
  std::size_t instances_per_op = 60;
  std::vector<std::size_t> ranks = {1, 2, 3, 4, 8};
  // Test mode: perturbs the named op's local outputs so its check must fail.
  std::string inject_fault;
};

struct VerifyCase {
  std::string op;
  std::uint64_t seed = 0;
  std::size_t ranks = 1;
  DType dtype = DType::kFloat64;
  std::string shapes;
  double deviation = 0;
  double tolerance = 0;
  bool ranks_agree = true;
  std::string error;

  bool passed() const { return error.empty() && ranks_agree && deviation <= tolerance; }

  std::string describe() const {
    std::ostringstream os;
    os << "op=" << op << " seed=" << seed << " ranks=" << ranks << " dtype=" << to_string(dtype)
       << ' ' << shapes << " max_rel_dev=" << deviation << " tol=" << tolerance;
    if (!ranks_agree) os << " ranks_disagree";
    if (!error.empty()) os << " error=\"" << error << '"';
    return os.str();
  }
};

struct OpSummary {
  std::string op;
  std::size_t instances = 0;
  std::size_t failures = 0;
  std::size_t uneven = 0;       // instances with unequal shard extents
  std::size_t with_empty = 0;   // instances with a zero-extent shard
  std::vector<std::size_t> rank_counts;
  double max_deviation_f64 = 0;
  double max_deviation_f32 = 0;
  std::optional<VerifyCase> first_failure;

  bool passed() const { return instances > 0 && failures == 0; }
};

struct VerifyReport {
  std::uint64_t seed = 0;
  std::vector<OpSummary> ops;

  bool passed() const {
    if (ops.empty()) return false;
    for (const auto& o : ops)
      if (!o.passed()) return false;
    return true;
  }

  std::string table() const {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%-16s %9s %8s %7s %7s %12s %12s  %s\n", "op", "instances",
                  "failures", "uneven", "empty", "max_dev_f64", "max_dev_f32", "status");
    os << line;
    for (const auto& o : ops) {
      std::snprintf(line, sizeof line, "%-16s %9zu %8zu %7zu %7zu %12.3e %12.3e  %s\n",
                    o.op.c_str(), o.instances, o.failures, o.uneven, o.with_empty,
                    o.max_deviation_f64, o.max_deviation_f32, o.passed() ? "PASS" : "FAIL");
      os << line;
    }
    return os.str();
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::size_t uniform_int(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Random split of n into `ranks` contiguous extents: default chunking,
// random cuts, random cuts with a forced empty shard, or all-on-one.
inline std::vector<std::size_t> random_extents(std::mt19937_64& rng, std::size_t n,
                                               std::size_t ranks) {
  const std::size_t mode = uniform_int(rng, 0, 3);
  if (mode == 0 || ranks == 1) return default_chunk(n, ranks);
  if (mode == 3) {
    std::vector<std::size_t> e(ranks, 0);
    e[uniform_int(rng, 0, ranks - 1)] = n;
    return e;
  }
  const std::size_t parts = mode == 2 ? ranks - 1 : ranks;
  std::vector<std::size_t> cuts{0, n};
  for (std::size_t i = 0; i + 1 < parts; ++i) cuts.push_back(uniform_int(rng, 0, n));
  std::sort(cuts.begin(), cuts.end());
  std::vector<std::size_t> e;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) e.push_back(cuts[i + 1] - cuts[i]);
  if (mode == 2) e.insert(e.begin() + static_cast<std::ptrdiff_t>(uniform_int(rng, 0, e.size())), 0);
  return e;
}

// Extents that satisfy the single-hop halo condition for this conv.
inline std::vector<std::size_t> halo_safe_extents(std::mt19937_64& rng, std::size_t n,
                                                  std::size_t ranks, std::size_t k,
                                                  std::size_t s, std::size_t p) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    auto e = random_extents(rng, n, ranks);
    try {
      plan_halo_conv(e, k, s, p);
      return e;
    } catch (const HaloError&) {
    }
  }
  return default_chunk(n, ranks);
}

template <Real T>
Tensor<T> perturb(const Tensor<T>& t) {
  Tensor<T> out = t;
  for (auto& v : out.data()) v = static_cast<T>(v + 1e-2 * (1.0 + std::abs(static_cast<double>(v))));
  return out;
}

struct Problem {
  std::string shapes;
  std::vector<std::size_t> extents;
};

inline std::string extents_str(const std::vector<std::size_t>& e) { return to_string(Shape(e)); }

// Runs `body` (rank program returning the sharded result) on a line mesh and
// compares every rank's gathered output with `dense`.
template <Real T, typename Body>
void run_on_mesh(VerifyCase& c, std::size_t ranks, const Tensor<T>& dense, Body&& body,
                 bool fault) {
  auto gathered = spawn_mesh(DeviceMesh::line(ranks), [&](RankContext& ctx) {
    ShardTensor<T> out = body(ctx);
    if (fault) out = out.with_local(perturb(out.local()));
    return full_tensor(out);
  }, MeshOptions{c.seed, collective_timeout_from_env()});
  for (const auto& g : gathered) c.ranks_agree &= bitwise_equal(g, gathered.front());
  c.deviation = max_relative_error(gathered.front(), dense);
}

template <Real T>
ShardTensor<T> scatter_along(RankContext& ctx, const Tensor<T>& x, std::size_t dim,
                             const std::vector<std::size_t>& extents) {
  return scatter_global(ctx, x, Placements{Placement::shard(dim)}, ShardingShapes::single(extents));
}

template <Real T>
Problem verify_elementwise(VerifyCase& c, std::mt19937_64& rng, std::size_t R, bool fault) {
  const Shape shape{uniform_int(rng, 0, 40), uniform_int(rng, 1, 5)};
  const std::size_t dim = uniform_int(rng, 0, 1);
  const auto extents = random_extents(rng, shape[dim], R);
  const Tensor<T> a = Tensor<T>::random(shape, rng);
  const Tensor<T> b = Tensor<T>::random(shape, rng);
  const double s = std::uniform_real_distribution<double>(-2, 2)(rng);
  const std::size_t kind = uniform_int(rng, 0, 4);
  static const char* names[] = {"add", "mul", "add_scalar", "scale", "gelu"};
  Tensor<T> dense;
  switch (kind) {
    case 0: dense = add(a, b); break;
    case 1: dense = mul(a, b); break;
    case 2: dense = elementwise(ElementwiseOp::kAdd, a, s); break;
    case 3: dense = scale(a, s); break;
    default: dense = unary(UnaryOp::kGelu, a); break;
  }
  run_on_mesh<T>(c, R, dense, [&](RankContext& ctx) {
    const auto sa = scatter_along(ctx, a, dim, extents);
    const auto sb = scatter_along(ctx, b, dim, extents);
    switch (kind) {
      case 0: return sharded_elementwise(ElementwiseOp::kAdd, sa, sb);
      case 1: return sharded_elementwise(ElementwiseOp::kMul, sa, sb);
      case 2: return sharded_elementwise(ElementwiseOp::kAdd, sa, s);
      case 3: return sharded_elementwise(ElementwiseOp::kScale, sa, s);
      default: return sharded_unary(UnaryOp::kGelu, sa);
    }
  }, fault);
  return {std::string("kind=") + names[kind] + " global=" + to_string(shape) +
              " dim=" + std::to_string(dim) + " shards=" + extents_str(extents),
          extents};
}

template <Real T>
Problem verify_linear(VerifyCase& c, std::mt19937_64& rng, std::size_t R, bool fault) {
  const std::size_t n_in = uniform_int(rng, 1, 8), n_out = uniform_int(rng, 1, 8);
  Shape shape{uniform_int(rng, 0, 32)};
  if (uniform_int(rng, 0, 1)) shape.push_back(uniform_int(rng, 1, 4));
  shape.push_back(n_in);
  const std::size_t dim = uniform_int(rng, 0, shape.size() - 2);
  const auto extents = random_extents(rng, shape[dim], R);
  const Tensor<T> x = Tensor<T>::random(shape, rng);
  const Tensor<T> w = Tensor<T>::random({n_out, n_in}, rng);
  const Tensor<T> b = Tensor<T>::random({n_out}, rng);
  run_on_mesh<T>(c, R, linear_forward(x, w, b), [&](RankContext& ctx) {
    return sharded_linear(scatter_along(ctx, x, dim, extents), w, b);
  }, fault);
  return {"global=" + to_string(shape) + " W=" + to_string(w.shape()) + " dim=" +
              std::to_string(dim) + " shards=" + extents_str(extents),
          extents};
}

template <Real T>
Problem verify_softmax(VerifyCase& c, std::mt19937_64& rng, std::size_t R, bool fault) {
  const Shape shape{uniform_int(rng, 0, 30), uniform_int(rng, 1, 6)};
  const std::size_t shard_dim = uniform_int(rng, 0, 1);
  const std::size_t dim = uniform_int(rng, 0, 3) == 0 ? 1 - shard_dim : shard_dim;
  const auto extents = random_extents(rng, shape[shard_dim], R);
  const Tensor<T> x = Tensor<T>::random(shape, rng, T{-4}, T{4});
  run_on_mesh<T>(c, R, softmax(x, dim), [&](RankContext& ctx) {
    return sharded_softmax(scatter_along(ctx, x, shard_dim, extents), dim);
  }, fault);
  return {"global=" + to_string(shape) + " shard_dim=" + std::to_string(shard_dim) +
              " softmax_dim=" + std::to_string(dim) + " shards=" + extents_str(extents),
          extents};
}

template <Real T>
Problem verify_layer_norm(VerifyCase& c, std::mt19937_64& rng, std::size_t R, bool fault) {
  Shape shape{uniform_int(rng, 1, 30), uniform_int(rng, 1, 6)};
  const std::size_t shard_dim = uniform_int(rng, 0, 1);
  const std::size_t dim = uniform_int(rng, 0, 3) == 0 ? 1 - shard_dim : shard_dim;
  const auto extents = random_extents(rng, shape[shard_dim], R);
  const Tensor<T> x = Tensor<T>::random(shape, rng);
  constexpr double eps = 1e-5;
  run_on_mesh<T>(c, R, layer_norm(x, dim, eps), [&](RankContext& ctx) {
    return sharded_layer_norm(scatter_along(ctx, x, shard_dim, extents), dim, eps);
  }, fault);
  return {"global=" + to_string(shape) + " shard_dim=" + std::to_string(shard_dim) +
              " norm_dim=" + std::to_string(dim) + " shards=" + extents_str(extents),
          extents};
}

template <Real T>
Problem verify_halo_conv(VerifyCase& c, std::mt19937_64& rng, std::size_t R, bool fault) {
  const std::size_t k = 2 * uniform_int(rng, 0, 2) + 1;
  const std::size_t s = uniform_int(rng, 1, 3);
  const std::size_t p = uniform_int(rng, 0, k / 2);
  const std::size_t c_in = uniform_int(rng, 1, 2), c_out = uniform_int(rng, 1, 3);
  const bool two_d = uniform_int(rng, 0, 1) == 1;
  const std::size_t dim = two_d ? uniform_int(rng, 1, 2) : 1;
  auto sharded = [&] { return uniform_int(rng, R * k, R * k + 24); };
  auto unsharded = [&] { return uniform_int(rng, k, 12); };
  Shape shape{c_in};
  Shape wshape{c_out, c_in, k};
  if (two_d) {
    shape.push_back(dim == 1 ? sharded() : unsharded());
    shape.push_back(dim == 2 ? sharded() : unsharded());
    wshape.push_back(k);
  } else {
    shape.push_back(sharded());
  }
  const auto extents = halo_safe_extents(rng, shape[dim], R, k, s, p);
  const Tensor<T> x = Tensor<T>::random(shape, rng);
  const Tensor<T> w = Tensor<T>::random(wshape, rng);
  run_on_mesh<T>(c, R, conv(x, w, s, p), [&](RankContext& ctx) {
    return halo_conv(scatter_along(ctx, x, dim, extents), w, s, p);
  }, fault);
  return {"global=" + to_string(shape) + " kernel=" + to_string(wshape) + " stride=" +
              std::to_string(s) + " padding=" + std::to_string(p) + " dim=" +
              std::to_string(dim) + " shards=" + extents_str(extents),
          extents};
}

template <Real T>
Problem verify_ring_attention(VerifyCase& c, std::mt19937_64& rng, std::size_t R, bool fault) {
  const std::size_t heads = uniform_int(rng, 1, 2);
  const std::size_t d = heads * uniform_int(rng, 1, 4);
  const std::size_t sq = uniform_int(rng, 0, 40);
  const bool cross = uniform_int(rng, 0, 3) == 0;
  const std::size_t sk = cross ? uniform_int(rng, 0, 40) : sq;
  const auto q_ext = random_extents(rng, sq, R);
  const auto k_ext = cross ? random_extents(rng, sk, R) : q_ext;
  const Tensor<T> q = Tensor<T>::random({sq, d}, rng);
  const Tensor<T> k = Tensor<T>::random({sk, d}, rng);
  const Tensor<T> v = Tensor<T>::random({sk, d}, rng);
  run_on_mesh<T>(c, R, multi_head_attention(q, k, v, heads), [&](RankContext& ctx) {
    return ring_attention(scatter_along(ctx, q, 0, q_ext), scatter_along(ctx, k, 0, k_ext),
                          scatter_along(ctx, v, 0, k_ext), heads);
  }, fault);
  return {"Q=" + to_string(q.shape()) + " K=" + to_string(k.shape()) + " heads=" +
              std::to_string(heads) + " q_shards=" + extents_str(q_ext) +
              " kv_shards=" + extents_str(k_ext),
          q_ext};
}

template <Real T>
Problem verify_vit_block(VerifyCase& c, std::mt19937_64& rng, std::size_t R, bool fault) {
  ViTConfig cfg;
  cfg.in_channels = uniform_int(rng, 1, 2);
  cfg.kernel = 2 * uniform_int(rng, 1, 2) + 1;
  cfg.stride = uniform_int(rng, 2, 4);
  cfg.padding = cfg.kernel / 2;
  cfg.heads = 2;
  cfg.dim = 8;
  cfg.layers = uniform_int(rng, 0, 2);
  const std::size_t dim = uniform_int(rng, 0, 3) == 0 ? 2 : 1;
  Shape shape{cfg.in_channels, uniform_int(rng, 4, 12), uniform_int(rng, 4, 12)};
  shape[dim] = uniform_int(rng, R * cfg.kernel, R * cfg.kernel + 12);
  // A W-sharded image is redistributed along H by default chunking first, so
  // H gets even chunks of at least one kernel extent.
  if (dim == 2) shape[1] = R * uniform_int(rng, cfg.kernel, cfg.kernel + 3);
  const auto extents =
      halo_safe_extents(rng, shape[dim], R, cfg.kernel, cfg.stride, cfg.padding);
  const Tensor<T> image = Tensor<T>::random(shape, rng);
  const ViTWeights<T> w = make_vit_weights<T>(cfg, rng());
  run_on_mesh<T>(c, R, vit_forward_dense(image, w, cfg), [&](RankContext& ctx) {
    return vit_block_pipeline(scatter_along(ctx, image, dim, extents), w, cfg);
  }, fault);
  return {"image=" + to_string(shape) + " kernel=" + std::to_string(cfg.kernel) + " stride=" +
              std::to_string(cfg.stride) + " layers=" + std::to_string(cfg.layers) + " dim=" +
              std::to_string(dim) + " shards=" + extents_str(extents),
          extents};
}

template <Real T>
Problem verify_one(const std::string& op, VerifyCase& c, std::mt19937_64& rng, std::size_t R,
                   bool fault) {
  if (op == "elementwise") return verify_elementwise<T>(c, rng, R, fault);
  if (op == "linear") return verify_linear<T>(c, rng, R, fault);
  if (op == "softmax") return verify_softmax<T>(c, rng, R, fault);
  if (op == "layer_norm") return verify_layer_norm<T>(c, rng, R, fault);
  if (op == "halo_conv") return verify_halo_conv<T>(c, rng, R, fault);
  if (op == "ring_attention") return verify_ring_attention<T>(c, rng, R, fault);
  if (op == "vit_block") return verify_vit_block<T>(c, rng, R, fault);
  throw UnsupportedError("unknown verification op '" + op + "'");
}

}  // namespace detail

namespace detail {

inline VerifyCase run_instance(const std::string& op, std::uint64_t seed, std::size_t ranks,
                               DType dtype, bool fault, Problem& p) {
  VerifyCase c;
  c.op = op;
  c.seed = seed;
  c.ranks = ranks;
  c.dtype = dtype;
  std::mt19937_64 rng(seed);
  try {
    if (dtype == DType::kFloat64) {
      c.tolerance = default_tolerance<double>();
      p = verify_one<double>(op, c, rng, ranks, fault);
    } else {
      c.tolerance = default_tolerance<float>();
      p = verify_one<float>(op, c, rng, ranks, fault);
    }
    c.shapes = p.shapes;
  } catch (const std::exception& e) {
    c.error = e.what();
  }
  return c;
}

}  // namespace detail

// Reruns one instance as reported in a VerifyCase (seed, ranks, dtype).
inline VerifyCase verify_instance(const std::string& op, std::uint64_t seed, std::size_t ranks,
                                  DType dtype, bool fault = false) {
  detail::Problem p;
  return detail::run_instance(op, seed, ranks, dtype, fault, p);
}

inline VerifyReport run_verification(const VerifyOptions& opt) {
  if (opt.ranks.empty()) throw UnsupportedError("verification needs at least one rank count");
  VerifyReport report;
  report.seed = opt.seed;
  const auto& ops = verification_ops();
  if (opt.filter && std::find(ops.begin(), ops.end(), *opt.filter) == ops.end()) {
    throw UnsupportedError("unknown verification op '" + *opt.filter + "'");
  }
  for (std::size_t oi = 0; oi < ops.size(); ++oi) {
    const std::string& op = ops[oi];
    if (opt.filter && *opt.filter != op) continue;
    OpSummary sum;
    sum.op = op;
    for (std::size_t i = 0; i < opt.instances_per_op; ++i) {
      const std::size_t R = opt.ranks[i % opt.ranks.size()];
      const DType dtype = (i / opt.ranks.size()) % 2 == 0 ? DType::kFloat64 : DType::kFloat32;
      const std::uint64_t seed = detail::splitmix64(opt.seed ^ detail::splitmix64(oi * 1000003 + i));

      detail::Problem p;
      const VerifyCase c = detail::run_instance(op, seed, R, dtype, opt.inject_fault == op, p);

      ++sum.instances;
      if (std::find(sum.rank_counts.begin(), sum.rank_counts.end(), R) == sum.rank_counts.end())
        sum.rank_counts.push_back(R);
      if (!p.extents.empty()) {
        const auto [lo, hi] = std::minmax_element(p.extents.begin(), p.extents.end());
        sum.uneven += *lo != *hi;
        sum.with_empty += *lo == 0;
      }
      double& worst = dtype == DType::kFloat64 ? sum.max_deviation_f64 : sum.max_deviation_f32;
      worst = std::max(worst, c.error.empty() ? c.deviation : std::numeric_limits<double>::infinity());
      if (!c.passed()) {
        ++sum.failures;
        if (!sum.first_failure) sum.first_failure = c;
      }
    }
    report.ops.push_back(std::move(sum));
  }
  return report;
}

}  // namespace dompar
