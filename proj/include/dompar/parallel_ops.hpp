// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

// Domain-parallel operators on ShardTensor and their dispatch registration.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dompar/collectives.hpp"
#include "dompar/dispatch.hpp"
#include "dompar/ops.hpp"
#include "dompar/shard_tensor.hpp"

namespace dompar {

namespace detail {

template <Real T>
void require_same_layout(const ShardTensor<T>& a, const ShardTensor<T>& b, const char* op) {
  if (a.mesh() != b.mesh() || a.global_shape() != b.global_shape() ||
      a.placements() != b.placements() || a.sharding_shapes() != b.sharding_shapes()) {
    throw MetadataError(std::string(op) + ": operand layouts differ (" +
                        to_string(a.global_shape()) + " " + to_string(a.placements()) + " " +
                        a.sharding_shapes().to_string() + " vs " + to_string(b.global_shape()) +
                        " " + to_string(b.placements()) + " " + b.sharding_shapes().to_string() +
                        "); redistribute explicitly");
  }
}

template <Real T>
ShardTensor<T> with_shape(const ShardTensor<T>& like, Tensor<T> local, Shape global,
                          ShardingShapes shapes) {
  return ShardTensor<T>(like.ctx(), std::move(local), std::move(global), like.placements(),
                        std::move(shapes));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Zero-communication operators

template <Real T>
ShardTensor<T> sharded_elementwise(ElementwiseOp op, const ShardTensor<T>& a,
                                   const ShardTensor<T>& b) {
  detail::require_same_layout(a, b, "elementwise");
  return a.with_local(elementwise(op, a.local(), b.local()));
}

template <Real T>
ShardTensor<T> sharded_elementwise(ElementwiseOp op, const ShardTensor<T>& a, double scalar) {
  return a.with_local(elementwise(op, a.local(), scalar));
}

template <Real T>
ShardTensor<T> sharded_unary(UnaryOp op, const ShardTensor<T>& a) {
  return a.with_local(unary(op, a.local()));
}

// x sharded along any batch/sequence dims; W[N_out,N_in] and bias replicated.
template <Real T>
ShardTensor<T> sharded_linear(const ShardTensor<T>& x, const Tensor<T>& weight,
                              const Tensor<T>& bias) {
  if (x.ndim() == 0) throw DimensionError("linear needs at least one axis");
  const std::size_t feature = x.ndim() - 1;
  if (x.mesh_axis_for_dim(feature)) {
    throw UnsupportedError("linear with a sharded contraction dim (tensor parallelism) is not "
                           "supported; shard a batch or sequence dim instead");
  }
  Tensor<T> z = linear_forward(x.local(), weight, bias);
  Shape global = x.global_shape();
  global.back() = weight.extent(0);
  return detail::with_shape(x, std::move(z), std::move(global), x.sharding_shapes());
}

// ---------------------------------------------------------------------------
// Global reductions

template <Real T>
ShardTensor<T> sharded_softmax(const ShardTensor<T>& x, std::size_t dim) {
  const AxisSplit s = split_at(x.local().shape(), dim);
  const auto axis = x.mesh_axis_for_dim(dim);
  if (!axis) return x.with_local(softmax(x.local(), dim));

  RankContext& ctx = x.ctx();
  const AxisGroup group = ctx.group(*axis);
  const Tensor<T>& in = x.local();
  auto idx = [&](std::size_t o, std::size_t e, std::size_t i) {
    return (o * s.extent + e) * s.inner + i;
  };

  Tensor<double> mx(Shape{s.outer, s.inner}, -std::numeric_limits<double>::infinity());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i)
        mx[o * s.inner + i] = std::max(mx[o * s.inner + i], static_cast<double>(in[idx(o, e, i)]));
  const Tensor<double> gmax = all_reduce(ctx, group, mx, ReduceOp::kMax);

  Tensor<double> ex(in.shape());
  Tensor<double> sum(Shape{s.outer, s.inner});
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const double v = std::exp(in[idx(o, e, i)] - gmax[o * s.inner + i]);
        ex[idx(o, e, i)] = v;
        sum[o * s.inner + i] += v;
      }
  const Tensor<double> gsum = all_reduce(ctx, group, sum, ReduceOp::kSum);

  Tensor<T> out(in.shape());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[idx(o, e, i)] = static_cast<T>(ex[idx(o, e, i)] / gsum[o * s.inner + i]);
  return x.with_local(std::move(out));
}

// Global mean from an all-reduce of Σx, then population variance from an
// all-reduce of Σ(x − mean)², both in double.
template <Real T>
ShardTensor<T> sharded_layer_norm(const ShardTensor<T>& x, std::size_t dim, double eps) {
  if (dim >= x.ndim()) {
    throw DimensionError("axis " + std::to_string(dim) + " out of range for shape " +
                         to_string(x.global_shape()));
  }
  const std::size_t global_extent = x.global_shape()[dim];
  if (global_extent == 0) {
    throw ShapeError("layer_norm over a zero-extent axis of " + to_string(x.global_shape()));
  }
  const auto axis = x.mesh_axis_for_dim(dim);
  if (!axis) return x.with_local(layer_norm(x.local(), dim, eps));

  RankContext& ctx = x.ctx();
  const AxisGroup group = ctx.group(*axis);
  const Tensor<T>& in = x.local();
  const AxisSplit s = split_at(in.shape(), dim);
  auto idx = [&](std::size_t o, std::size_t e, std::size_t i) {
    return (o * s.extent + e) * s.inner + i;
  };
  const double n = static_cast<double>(global_extent);

  Tensor<double> sum(Shape{s.outer, s.inner});
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i) sum[o * s.inner + i] += in[idx(o, e, i)];
  Tensor<double> mean = all_reduce(ctx, group, sum, ReduceOp::kSum);
  for (auto& m : mean.data()) m /= n;

  Tensor<double> sq(Shape{s.outer, s.inner});
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const double dlt = in[idx(o, e, i)] - mean[o * s.inner + i];
        sq[o * s.inner + i] += dlt * dlt;
      }
  const Tensor<double> var = all_reduce(ctx, group, sq, ReduceOp::kSum);

  Tensor<T> out(in.shape());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const double m = mean[o * s.inner + i];
      const double inv = 1.0 / std::sqrt(var[o * s.inner + i] / n + eps);
      for (std::size_t e = 0; e < s.extent; ++e)
        out[idx(o, e, i)] = static_cast<T>((in[idx(o, e, i)] - m) * inv);
    }
  return x.with_local(std::move(out));
}

// ---------------------------------------------------------------------------
// Halo convolution

// One rank's halo requirements along the sharded spatial dim. Input indices
// are global; `in_end` and `owned_end` are exclusive.
struct HaloSpec {
  std::size_t left_width = 0;
  std::size_t right_width = 0;
  std::size_t pad_lo = 0;
  std::size_t pad_hi = 0;
  std::size_t owned_begin = 0;
  std::size_t owned_end = 0;
  std::size_t in_begin = 0;
  std::size_t in_end = 0;

  std::size_t owned() const noexcept { return owned_end - owned_begin; }
};

struct HaloConvPlan {
  std::vector<std::size_t> output_shapes;
  std::vector<HaloSpec> ranks;
};

// Output ownership and halo widths for every member of a sharded axis.
// Output j belongs to the member whose interval holds clamp(j·s − p, 0, G−1).
// Zero-extent members own nothing and are skipped when looking for a
// neighbor. `members` (world ranks, group order) only feeds error messages.
inline HaloConvPlan plan_halo_conv(const std::vector<std::size_t>& extents, std::size_t kernel,
                                   std::size_t stride, std::size_t padding,
                                   const std::vector<std::size_t>& members = {}) {
  if (kernel % 2 == 0) throw UnsupportedError("conv kernel extents must be odd");
  if (stride == 0) throw UnsupportedError("conv stride must be positive");
  const std::size_t n = extents.size();
  std::vector<std::size_t> begin(n + 1, 0);
  for (std::size_t r = 0; r < n; ++r) begin[r + 1] = begin[r] + extents[r];
  const std::size_t g = begin[n];
  const std::size_t g_out = conv_output_extent(g, kernel, stride, padding);
  if (g_out == 0) {
    throw ShapeError("conv output extent is non-positive for global extent " + std::to_string(g) +
                     ", kernel " + std::to_string(kernel));
  }

  HaloConvPlan plan;
  plan.output_shapes.assign(n, 0);
  plan.ranks.assign(n, HaloSpec{});
  auto owner_of = [&](std::size_t pos) {
    return static_cast<std::size_t>(std::upper_bound(begin.begin() + 1, begin.end(), pos) -
                                    (begin.begin() + 1));
  };
  const auto gi = static_cast<std::int64_t>(g);
  for (std::size_t j = 0; j < g_out; ++j) {
    const std::int64_t raw = static_cast<std::int64_t>(j * stride) - static_cast<std::int64_t>(padding);
    const auto anchor = static_cast<std::size_t>(std::clamp<std::int64_t>(raw, 0, gi - 1));
    ++plan.output_shapes[owner_of(anchor)];
  }

  auto rank_name = [&](std::size_t r) {
    return "rank " + std::to_string(members.empty() ? r : members.at(r));
  };
  std::size_t j0 = 0;
  for (std::size_t r = 0; r < n; ++r) {
    HaloSpec& h = plan.ranks[r];
    h.owned_begin = j0;
    h.owned_end = j0 + plan.output_shapes[r];
    j0 = h.owned_end;
    if (h.owned() == 0) continue;

    const std::int64_t need_lo =
        static_cast<std::int64_t>(h.owned_begin * stride) - static_cast<std::int64_t>(padding);
    const std::int64_t need_hi = static_cast<std::int64_t>((h.owned_end - 1) * stride + kernel - 1) -
                                 static_cast<std::int64_t>(padding);
    const std::int64_t lo = std::max<std::int64_t>(need_lo, 0);
    const std::int64_t hi = std::min<std::int64_t>(need_hi, gi - 1);
    h.pad_lo = static_cast<std::size_t>(lo - need_lo);
    h.pad_hi = static_cast<std::size_t>(need_hi - hi);
    h.in_begin = static_cast<std::size_t>(lo);
    h.in_end = static_cast<std::size_t>(hi) + 1;
    h.left_width = h.in_begin < begin[r] ? begin[r] - h.in_begin : 0;
    h.right_width = h.in_end > begin[r + 1] ? h.in_end - begin[r + 1] : 0;

    auto check = [&](std::size_t width, bool right) {
      if (width == 0) return;
      std::optional<std::size_t> nb;
      if (right) {
        for (std::size_t q = r + 1; q < n && !nb; ++q)
          if (extents[q]) nb = q;
      } else {
        for (std::size_t q = r; q-- > 0 && !nb;)
          if (extents[q]) nb = q;
      }
      const std::size_t held = nb ? extents[*nb] : 0;
      if (width > held) {
        throw HaloError("halo width " + std::to_string(width) + " requested by " + rank_name(r) +
                        " exceeds extent " + std::to_string(held) + " held by " +
                        (nb ? rank_name(*nb) : std::string("no neighbor")) +
                        "; multi-hop halos are unsupported, use fewer ranks or larger shards");
      }
    };
    check(h.left_width, false);
    check(h.right_width, true);
  }
  return plan;
}

// x: [..., C_in, spatial...] with at most one sharded spatial dim (leading
// batch dims may also be sharded); w: [C_out, C_in, k...] replicated.
// Output sharding shapes follow the ownership rule of plan_halo_conv.
template <Real T>
ShardTensor<T> halo_conv(const ShardTensor<T>& x, const Tensor<T>& w, std::size_t stride,
                         std::size_t padding) {
  if (w.ndim() != 3 && w.ndim() != 4) {
    throw UnsupportedError("conv supports 1-D or 2-D kernels, got " + to_string(w.shape()));
  }
  const std::size_t nsp = w.ndim() - 2;
  if (x.ndim() < nsp + 1) {
    throw DimensionError("conv input " + to_string(x.global_shape()) +
                         " has too few axes for kernel " + to_string(w.shape()));
  }
  const std::size_t chan = x.ndim() - nsp - 1;
  if (x.mesh_axis_for_dim(chan)) throw UnsupportedError("conv with a sharded channel dim");

  std::optional<std::size_t> sharded_dim;
  for (std::size_t d = chan + 1; d < x.ndim(); ++d) {
    if (!x.mesh_axis_for_dim(d)) continue;
    if (sharded_dim) throw UnsupportedError("halo conv supports one sharded spatial dim");
    sharded_dim = d;
  }

  const std::vector<std::size_t> strides(nsp, stride);
  std::vector<std::size_t> pad_lo(nsp, padding), pad_hi(nsp, padding);
  Shape global = x.global_shape();
  global[chan] = w.extent(0);
  for (std::size_t d = 0; d < nsp; ++d)
    global[chan + 1 + d] =
        conv_output_extent(x.global_shape()[chan + 1 + d], w.extent(2 + d), stride, padding);

  if (!sharded_dim) {
    Tensor<T> out = conv_padded<T>(x.local(), w, strides, pad_lo, pad_hi);
    return detail::with_shape(x, std::move(out), std::move(global), x.sharding_shapes());
  }

  const std::size_t dim = *sharded_dim;
  const std::size_t sp = dim - chan - 1;
  const std::size_t axis = *x.mesh_axis_for_dim(dim);
  RankContext& ctx = x.ctx();
  const AxisGroup group = ctx.group(axis);
  const auto& extents = x.sharding_shapes().at(axis);
  const HaloConvPlan plan =
      plan_halo_conv(extents, w.extent(2 + sp), stride, padding, group.members);
  const std::size_t me = group.index_of(ctx.rank());
  const HaloSpec& h = plan.ranks[me];

  // Halo neighbors are the adjacent non-empty shards; an empty shard
  // exchanges with nobody.
  AxisGroup halo_group{group.axis, group.name, {}};
  if (extents[me] == 0) {
    halo_group.members.push_back(ctx.rank());
  } else {
    for (std::size_t i = 0; i < group.size(); ++i)
      if (extents[i]) halo_group.members.push_back(group.members[i]);
  }
  const Tensor<T> ext = halo_exchange(ctx, halo_group, x.local(), dim, h.left_width, h.right_width);

  ShardingShapes shapes = x.sharding_shapes();
  shapes.set(axis, plan.output_shapes);
  Shape local_shape = global;
  for (std::size_t a = 0; a < x.placements().size(); ++a) {
    if (!x.placements()[a].is_shard()) continue;
    const std::size_t d = x.placements()[a].dim();
    local_shape[d] = shapes.at(a)[ctx.coords()[a]];
  }
  if (h.owned() == 0) {
    return detail::with_shape(x, Tensor<T>(local_shape), std::move(global), std::move(shapes));
  }

  const std::size_t local_begin = x.offset_along(dim);
  const std::size_t ext_begin = local_begin - h.left_width;
  const Tensor<T> window = slice(ext, dim, h.in_begin - ext_begin, h.in_end - h.in_begin);
  pad_lo[sp] = h.pad_lo;
  pad_hi[sp] = h.pad_hi;
  Tensor<T> out = conv_padded<T>(window, w, strides, pad_lo, pad_hi);
  if (out.shape() != local_shape) {
    throw IntegrityError("halo conv produced " + to_string(out.shape()) + ", expected " +
                         to_string(local_shape));
  }
  return detail::with_shape(x, std::move(out), std::move(global), std::move(shapes));
}

// ---------------------------------------------------------------------------
// Ring attention

// Online-softmax accumulators per (query row, head), kept in double.
struct RingAttentionState {
  Tensor<double> m;    // running max of scaled scores, [S_local, heads]
  Tensor<double> l;    // running denominator, [S_local, heads]
  Tensor<double> acc;  // running numerator, [S_local, D]
};

// Called after each ring step with the step index and the group index of the
// key/value block just folded in.
using RingObserver =
    std::function<void(std::size_t step, std::size_t block, const RingAttentionState&)>;

namespace detail {

// Folds one key/value block, packed as [S_b, 2D] = [K | V], into `st`.
template <Real T>
void fold_block(const Tensor<T>& q, const Tensor<T>& kv, std::size_t heads,
                RingAttentionState& st) {
  constexpr std::size_t kTile = 64;
  const std::size_t sq = q.extent(0), width = q.extent(1), sb = kv.extent(0);
  const std::size_t d = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  double scores[kTile];
  for (std::size_t t0 = 0; t0 < sb; t0 += kTile) {
    const std::size_t tn = std::min(kTile, sb - t0);
    for (std::size_t i = 0; i < sq; ++i) {
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t col = h * d;
        double tile_max = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < tn; ++j) {
          const T* krow = kv.data().data() + (t0 + j) * 2 * width;
          double dot = 0.0;
          for (std::size_t c = 0; c < d; ++c)
            dot += static_cast<double>(q[i * width + col + c]) * krow[col + c];
          scores[j] = dot * scale;
          tile_max = std::max(tile_max, scores[j]);
        }
        double& m = st.m[i * heads + h];
        double& l = st.l[i * heads + h];
        const double m_new = std::max(m, tile_max);
        const double c = std::isinf(m) ? 0.0 : std::exp(m - m_new);
        double* acc = st.acc.data().data() + i * width + col;
        double psum = 0.0;
        for (std::size_t e = 0; e < d; ++e) acc[e] *= c;
        for (std::size_t j = 0; j < tn; ++j) {
          const double p = std::exp(scores[j] - m_new);
          psum += p;
          const T* vrow = kv.data().data() + (t0 + j) * 2 * width + width;
          for (std::size_t e = 0; e < d; ++e) acc[e] += p * vrow[col + e];
        }
        l = l * c + psum;
        m = m_new;
      }
    }
  }
}

}  // namespace detail

// Q, K, V: [S, D] sharded along the sequence dim on one mesh axis (other mesh
// axes replicate). Each step sends the current K|V block to the next member
// before folding it in, so the transfer overlaps the local compute; R−1 ring
// shifts in total.
template <Real T>
ShardTensor<T> ring_attention(const ShardTensor<T>& q, const ShardTensor<T>& k,
                              const ShardTensor<T>& v, std::size_t heads = 1,
                              const RingObserver& observer = {}) {
  if (q.ndim() != 2 || k.ndim() != 2 || v.ndim() != 2) {
    throw DimensionError("ring attention expects Q[S_q,D], K[S_k,D], V[S_k,D]");
  }
  if (q.placements() != k.placements() || q.placements() != v.placements() ||
      q.mesh() != k.mesh() || q.mesh() != v.mesh()) {
    throw MetadataError("ring attention: Q, K, V placements differ (" + to_string(q.placements()) +
                        ", " + to_string(k.placements()) + ", " + to_string(v.placements()) + ")");
  }
  if (k.global_shape() != v.global_shape() || k.sharding_shapes() != v.sharding_shapes()) {
    throw MetadataError("ring attention: K and V layouts differ");
  }
  const std::size_t width = q.global_shape()[1];
  if (k.global_shape()[1] != width) {
    throw MetadataError("ring attention: head dims differ (" + to_string(q.global_shape()) +
                        " vs " + to_string(k.global_shape()) + ")");
  }
  if (q.mesh_axis_for_dim(1)) throw UnsupportedError("ring attention with a sharded feature dim");
  if (heads == 0 || width % heads != 0) {
    throw DimensionError("head count " + std::to_string(heads) + " does not divide D=" +
                         std::to_string(width));
  }

  const auto axis = q.mesh_axis_for_dim(0);
  RankContext& ctx = q.ctx();
  const std::size_t sq = q.local().extent(0);
  RingAttentionState st{
      Tensor<double>(Shape{sq, heads}, -std::numeric_limits<double>::infinity()),
      Tensor<double>(Shape{sq, heads}), Tensor<double>(Shape{sq, width})};

  Tensor<T> kv = concat(std::vector<Tensor<T>>{k.local(), v.local()}, 1);
  const std::size_t ring = axis ? q.mesh().extent(*axis) : 1;
  std::optional<AxisGroup> group;
  std::size_t me = 0;
  if (axis) {
    group = ctx.group(*axis);
    me = group->index_of(ctx.rank());
  }
  for (std::size_t step = 0; step < ring; ++step) {
    std::optional<PendingShift<T>> pending;
    if (step + 1 < ring) pending.emplace(ring_shift_begin(ctx, *group, kv));
    if (width > 0) detail::fold_block(q.local(), kv, heads, st);
    if (observer) observer(step, (me + ring - step) % ring, st);
    if (pending) kv = pending->finish();
  }

  Tensor<T> out(q.local().shape());
  const std::size_t d = heads ? width / heads : 0;
  for (std::size_t i = 0; i < sq; ++i)
    for (std::size_t h = 0; h < heads; ++h) {
      const double l = st.l[i * heads + h];
      for (std::size_t e = 0; e < d; ++e) {
        const std::size_t at = i * width + h * d + e;
        out[at] = l > 0 ? static_cast<T>(st.acc[at] / l) : T{0};
      }
    }
  return q.with_local(std::move(out));
}

// ---------------------------------------------------------------------------
// Data-parallel gradient averaging

// Replaces each gradient by its mean over the group of mesh axis `axis`.
template <Real T>
std::vector<Tensor<T>> ddp_allreduce_grads(RankContext& ctx, const std::vector<Tensor<T>>& grads,
                                           std::size_t axis) {
  const AxisGroup group = ctx.group(axis);
  std::vector<std::uint64_t> sig{grads.size()};
  for (const auto& g : grads) {
    sig.push_back(g.ndim());
    sig.insert(sig.end(), g.shape().begin(), g.shape().end());
  }
  const auto all = all_gather_values(ctx, group, sig);
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i] != sig) {
      throw CollectiveError("gradient shapes differ between rank " + std::to_string(ctx.rank()) +
                            " and rank " + std::to_string(group.members[i]));
    }
  }
  const double inv = 1.0 / static_cast<double>(group.size());
  std::vector<Tensor<T>> out;
  out.reserve(grads.size());
  for (const auto& g : grads) {
    Tensor<T> s = all_reduce(ctx, group, g, ReduceOp::kSum);
    for (std::size_t e = 0; e < s.numel(); ++e) s[e] = static_cast<T>(s[e] * inv);
    out.push_back(std::move(s));
  }
  return out;
}

template <Real T>
std::vector<Tensor<T>> ddp_allreduce_grads(RankContext& ctx, const std::vector<Tensor<T>>& grads,
                                           std::string_view axis) {
  return ddp_allreduce_grads(ctx, grads, ctx.mesh().axis_index(axis));
}

// ---------------------------------------------------------------------------
// Dispatch registration
//
//   aten-like:      add, mul, scale, relu, gelu, linear
//   function:       softmax, layer_norm, conv
//   named function: attention
template <Real T>
void register_parallel_handlers(Dispatcher<T>& d) {
  using D = Dispatcher<T>;
  auto binary = [](ElementwiseOp op) -> typename D::Handler {
    return [op](const Args<T>& a) -> Value<T> {
      if (is_scalar_arg(a, 1)) return sharded_elementwise(op, shard_arg(a, 0), real_arg(a, 1));
      return sharded_elementwise(op, shard_arg(a, 0), shard_arg(a, 1));
    };
  };
  d.register_handler(RegistryLevel::kAtenLike, "add", binary(ElementwiseOp::kAdd));
  d.register_handler(RegistryLevel::kAtenLike, "mul", binary(ElementwiseOp::kMul));
  d.register_handler(RegistryLevel::kAtenLike, "scale", [](const Args<T>& a) -> Value<T> {
    return sharded_elementwise(ElementwiseOp::kScale, shard_arg(a, 0), real_arg(a, 1));
  });
  d.register_handler(RegistryLevel::kAtenLike, "relu", [](const Args<T>& a) -> Value<T> {
    return sharded_unary(UnaryOp::kRelu, shard_arg(a, 0));
  });
  d.register_handler(RegistryLevel::kAtenLike, "gelu", [](const Args<T>& a) -> Value<T> {
    return sharded_unary(UnaryOp::kGelu, shard_arg(a, 0));
  });
  d.register_handler(RegistryLevel::kAtenLike, "linear", [](const Args<T>& a) -> Value<T> {
    return sharded_linear(shard_arg(a, 0), tensor_arg(a, 1), tensor_arg(a, 2));
  });
  d.register_handler(RegistryLevel::kFunction, "softmax", [](const Args<T>& a) -> Value<T> {
    return sharded_softmax(shard_arg(a, 0), static_cast<std::size_t>(int_arg(a, 1)));
  });
  d.register_handler(RegistryLevel::kFunction, "layer_norm", [](const Args<T>& a) -> Value<T> {
    return sharded_layer_norm(shard_arg(a, 0), static_cast<std::size_t>(int_arg(a, 1)),
                              real_arg(a, 2));
  });
  d.register_handler(RegistryLevel::kFunction, "conv", [](const Args<T>& a) -> Value<T> {
    return halo_conv(shard_arg(a, 0), tensor_arg(a, 1), static_cast<std::size_t>(int_arg(a, 2)),
                     static_cast<std::size_t>(int_arg(a, 3)));
  });
  d.register_handler(RegistryLevel::kNamedFunction, "attention", [](const Args<T>& a) -> Value<T> {
    const std::size_t heads = a.size() > 3 ? static_cast<std::size_t>(int_arg(a, 3)) : 1;
    return ring_attention(shard_arg(a, 0), shard_arg(a, 1), shard_arg(a, 2), heads);
  });
}

// Dispatcher with dense references and every parallel handler installed.
template <Real T>
Dispatcher<T> make_default_dispatcher() {
  Dispatcher<T> d;
  register_dense_reference_ops(d);
  register_parallel_handlers(d);
  return d;
}

}  // namespace dompar
