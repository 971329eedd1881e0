// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

// ShardTensor: a rank-local dense shard plus the metadata needed to interpret
// it globally: global shape, mesh, one placement per mesh axis, and the
// sharding shapes (every member's extent along each sharded dim). Shards are
// contiguous intervals laid out in group order, and may be uneven or empty.

#pragma once

#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dompar/collectives.hpp"
#include "dompar/mesh.hpp"
#include "dompar/ops.hpp"
#include "dompar/tensor.hpp"

namespace dompar {

class Placement {
 public:
  static Placement shard(std::size_t dim) { return Placement(dim); }
  static Placement replicate() { return Placement(); }

  bool is_shard() const noexcept { return dim_.has_value(); }
  bool is_replicate() const noexcept { return !dim_.has_value(); }
  std::size_t dim() const {
    if (!dim_) throw MetadataError("Replicate placement has no tensor dim");
    return *dim_;
  }

  std::string to_string() const {
    return dim_ ? "Shard(" + std::to_string(*dim_) + ")" : std::string("Replicate");
  }

  bool operator==(const Placement&) const = default;

 private:
  Placement() = default;
  explicit Placement(std::size_t dim) : dim_(dim) {}
  std::optional<std::size_t> dim_;
};

using Placements = std::vector<Placement>;

inline std::string to_string(const Placements& placements) {
  std::string s = "[";
  for (std::size_t i = 0; i < placements.size(); ++i)
    s += (i ? "," : "") + placements[i].to_string();
  return s + "]";
}

// Per mesh axis, the ordered local extents along that axis's sharded tensor
// dim (one per group member); empty for Replicate axes.
class ShardingShapes {
 public:
  ShardingShapes() = default;
  explicit ShardingShapes(std::size_t mesh_axes) : per_axis_(mesh_axes) {}

  static ShardingShapes single(std::vector<std::size_t> extents) {
    ShardingShapes s(1);
    s.set(0, std::move(extents));
    return s;
  }

  std::size_t mesh_axes() const noexcept { return per_axis_.size(); }
  void set(std::size_t axis, std::vector<std::size_t> extents) {
    per_axis_.at(axis) = std::move(extents);
  }
  void clear(std::size_t axis) { per_axis_.at(axis).reset(); }
  bool has(std::size_t axis) const { return per_axis_.at(axis).has_value(); }
  const std::vector<std::size_t>& at(std::size_t axis) const {
    const auto& e = per_axis_.at(axis);
    if (!e) throw MetadataError("mesh axis " + std::to_string(axis) + " is not sharded");
    return *e;
  }

  std::string to_string() const {
    std::string s = "[";
    for (std::size_t a = 0; a < per_axis_.size(); ++a) {
      s += a ? "," : "";
      s += per_axis_[a] ? dompar::to_string(Shape(*per_axis_[a])) : std::string("-");
    }
    return s + "]";
  }

  bool operator==(const ShardingShapes&) const = default;

 private:
  std::vector<std::optional<std::vector<std::size_t>>> per_axis_;
};

// torch.chunk-style split: ceil(n/R)-sized chunks, one remainder, then zeros.
inline std::vector<std::size_t> default_chunk(std::size_t n, std::size_t ranks) {
  if (ranks == 0) throw MetadataError("default_chunk needs at least one rank");
  const std::size_t c = (n + ranks - 1) / ranks;
  std::vector<std::size_t> out(ranks, 0);
  std::size_t left = n;
  for (auto& e : out) {
    e = std::min(c, left);
    left -= e;
  }
  return out;
}

// Checks placements against a mesh and a tensor rank.
inline void validate_placements(const Placements& placements, const DeviceMesh& mesh,
                                std::size_t tensor_ndim) {
  if (placements.size() != mesh.ndim()) {
    throw MetadataError("expected " + std::to_string(mesh.ndim()) + " placements, got " +
                        std::to_string(placements.size()));
  }
  for (std::size_t a = 0; a < placements.size(); ++a) {
    if (!placements[a].is_shard()) continue;
    if (placements[a].dim() >= tensor_ndim) {
      throw MetadataError(placements[a].to_string() + " is out of range for a rank-" +
                          std::to_string(tensor_ndim) + " tensor");
    }
    for (std::size_t b = 0; b < a; ++b) {
      if (placements[b] == placements[a]) {
        throw MetadataError("tensor dim " + std::to_string(placements[a].dim()) +
                            " is sharded over more than one mesh axis");
      }
    }
  }
}

// Default-chunked sharding shapes for every Shard axis.
inline ShardingShapes default_sharding_shapes(const Shape& global, const Placements& placements,
                                              const DeviceMesh& mesh) {
  ShardingShapes s(mesh.ndim());
  for (std::size_t a = 0; a < placements.size(); ++a)
    if (placements[a].is_shard())
      s.set(a, default_chunk(global[placements[a].dim()], mesh.extent(a)));
  return s;
}

inline void validate_sharding_shapes(const ShardingShapes& shapes, const Shape& global,
                                     const Placements& placements, const DeviceMesh& mesh) {
  if (shapes.mesh_axes() != mesh.ndim()) {
    throw MetadataError("sharding shapes cover " + std::to_string(shapes.mesh_axes()) +
                        " mesh axes, mesh has " + std::to_string(mesh.ndim()));
  }
  for (std::size_t a = 0; a < placements.size(); ++a) {
    if (placements[a].is_replicate()) {
      if (shapes.has(a)) throw MetadataError("sharding shapes given for Replicate axis");
      continue;
    }
    if (!shapes.has(a)) throw MetadataError("missing sharding shapes for mesh axis " + std::to_string(a));
    const auto& e = shapes.at(a);
    if (e.size() != mesh.extent(a)) {
      throw MetadataError("sharding shapes list " + to_string(Shape(e)) + " has " +
                          std::to_string(e.size()) + " entries for a group of " +
                          std::to_string(mesh.extent(a)));
    }
    std::size_t sum = 0;
    for (auto x : e) sum += x;
    const std::size_t want = global[placements[a].dim()];
    if (sum != want) {
      throw MetadataError("sharding shapes " + to_string(Shape(e)) + " sum to " +
                          std::to_string(sum) + ", global extent is " + std::to_string(want));
    }
  }
}

template <Real T>
class ShardTensor {
 public:
  // Validates metadata (MetadataError) and the local shard against it
  // (IntegrityError).
  ShardTensor(RankContext& ctx, Tensor<T> local, Shape global_shape, Placements placements,
              ShardingShapes shapes)
      : ctx_(&ctx),
        local_(std::move(local)),
        global_(std::move(global_shape)),
        placements_(std::move(placements)),
        shapes_(std::move(shapes)) {
    validate();
  }

  RankContext& ctx() const noexcept { return *ctx_; }
  const DeviceMesh& mesh() const noexcept { return ctx_->mesh(); }
  const Tensor<T>& local() const noexcept { return local_; }
  const Shape& global_shape() const noexcept { return global_; }
  std::size_t ndim() const noexcept { return global_.size(); }
  const Placements& placements() const noexcept { return placements_; }
  const ShardingShapes& sharding_shapes() const noexcept { return shapes_; }

  bool is_replicated() const {
    for (const auto& p : placements_)
      if (p.is_shard()) return false;
    return true;
  }

  // Mesh axis that shards tensor dim `dim`, if any.
  std::optional<std::size_t> mesh_axis_for_dim(std::size_t dim) const {
    for (std::size_t a = 0; a < placements_.size(); ++a)
      if (placements_[a].is_shard() && placements_[a].dim() == dim) return a;
    return std::nullopt;
  }

  // Start of this rank's interval along `dim` in global index space.
  std::size_t offset_along(std::size_t dim) const {
    const auto axis = mesh_axis_for_dim(dim);
    if (!axis) return 0;
    const auto& e = shapes_.at(*axis);
    std::size_t off = 0;
    for (std::size_t i = 0; i < ctx_->coords()[*axis]; ++i) off += e[i];
    return off;
  }

  // Same metadata, different local data (shape must match).
  ShardTensor with_local(Tensor<T> local) const {
    return ShardTensor(*ctx_, std::move(local), global_, placements_, shapes_);
  }

  void validate() const {
    validate_placements(placements_, mesh(), global_.size());
    validate_sharding_shapes(shapes_, global_, placements_, mesh());
    if (local_.ndim() != global_.size()) {
      throw IntegrityError("local shard " + to_string(local_.shape()) + " has rank " +
                           std::to_string(local_.ndim()) + ", global shape " +
                           to_string(global_));
    }
    for (std::size_t d = 0; d < global_.size(); ++d) {
      const auto axis = mesh_axis_for_dim(d);
      const std::size_t want = axis ? shapes_.at(*axis)[ctx_->coords()[*axis]] : global_[d];
      if (local_.extent(d) != want) {
        throw IntegrityError("rank " + std::to_string(ctx_->rank()) + ": local shard " +
                             to_string(local_.shape()) + " disagrees with global shape " +
                             to_string(global_) + " and sharding shapes " + shapes_.to_string());
      }
    }
  }

 private:
  RankContext* ctx_;
  Tensor<T> local_;
  Shape global_;
  Placements placements_;
  ShardingShapes shapes_;
};

namespace detail {

// This rank's local slice of a tensor that is full along every dim sharded
// by `placements`.
template <Real T>
Tensor<T> local_slice(const Tensor<T>& full, const Placements& placements,
                      const ShardingShapes& shapes, const std::vector<std::size_t>& coords) {
  Tensor<T> t = full;
  for (std::size_t a = 0; a < placements.size(); ++a) {
    if (!placements[a].is_shard()) continue;
    const auto& e = shapes.at(a);
    std::size_t off = 0;
    for (std::size_t i = 0; i < coords[a]; ++i) off += e[i];
    t = slice(t, placements[a].dim(), off, e[coords[a]]);
  }
  return t;
}

}  // namespace detail

// Builds a ShardTensor from a tensor that every rank already holds in full;
// each rank keeps its slice. No communication.
template <Real T>
ShardTensor<T> shard_replicated(RankContext& ctx, const Tensor<T>& global, Placements placements,
                                std::optional<ShardingShapes> shapes = std::nullopt) {
  validate_placements(placements, ctx.mesh(), global.ndim());
  ShardingShapes s = shapes ? std::move(*shapes)
                            : default_sharding_shapes(global.shape(), placements, ctx.mesh());
  validate_sharding_shapes(s, global.shape(), placements, ctx.mesh());
  Tensor<T> local = detail::local_slice(global, placements, s, ctx.coords());
  return ShardTensor<T>(ctx, std::move(local), global.shape(), std::move(placements), std::move(s));
}

// Distributes `global` from world rank 0 (the argument is ignored elsewhere).
// Uses default_chunk unless explicit sharding shapes are supplied; Replicate
// axes receive full copies.
template <Real T>
ShardTensor<T> scatter_global(RankContext& ctx, const Tensor<T>& global, Placements placements,
                              std::optional<ShardingShapes> shapes = std::nullopt) {
  ctx.stats().record(CollectiveKind::kScatter);
  constexpr std::size_t kRoot = 0;
  const std::size_t n = ctx.world_size();
  Shape global_shape;
  if (ctx.rank() == kRoot) {
    global_shape = global.shape();
    for (std::size_t r = 0; r < n; ++r) {
      if (r == kRoot) continue;
      Message m;
      m.header.assign(global_shape.begin(), global_shape.end());
      ctx.send(r, std::move(m));
    }
  } else {
    Message m = ctx.recv(kRoot);
    global_shape.assign(m.header.begin(), m.header.end());
  }

  validate_placements(placements, ctx.mesh(), global_shape.size());
  ShardingShapes s =
      shapes ? std::move(*shapes) : default_sharding_shapes(global_shape, placements, ctx.mesh());
  validate_sharding_shapes(s, global_shape, placements, ctx.mesh());

  Tensor<T> local;
  if (ctx.rank() == kRoot) {
    for (std::size_t r = 0; r < n; ++r) {
      Tensor<T> piece = detail::local_slice(global, placements, s, ctx.mesh().coords_of(r));
      if (r == kRoot) {
        local = std::move(piece);
      } else {
        ctx.send(r, detail::pack(piece));
      }
    }
  } else {
    local = detail::unpack<T>(ctx.recv(kRoot));
  }
  return ShardTensor<T>(ctx, std::move(local), std::move(global_shape), std::move(placements),
                        std::move(s));
}

// Reconstructs the global tensor on every rank.
template <Real T>
Tensor<T> full_tensor(const ShardTensor<T>& st) {
  st.validate();
  Tensor<T> t = st.local();
  for (std::size_t a = 0; a < st.placements().size(); ++a) {
    const Placement& p = st.placements()[a];
    if (p.is_shard()) t = all_gather_varlen(st.ctx(), st.ctx().group(a), t, p.dim());
  }
  return t;
}

// Same global tensor under new placements. Axes leaving Shard are gathered;
// axes entering Shard slice locally with default_chunk.
template <Real T>
ShardTensor<T> redistribute(const ShardTensor<T>& st, Placements target) {
  validate_placements(target, st.mesh(), st.ndim());
  const Placements& source = st.placements();
  Tensor<T> t = st.local();
  ShardingShapes shapes = st.sharding_shapes();
  for (std::size_t a = 0; a < source.size(); ++a) {
    if (source[a] == target[a] || source[a].is_replicate()) continue;
    t = all_gather_varlen(st.ctx(), st.ctx().group(a), t, source[a].dim());
    shapes.clear(a);
  }
  for (std::size_t a = 0; a < target.size(); ++a) {
    if (source[a] == target[a] || target[a].is_replicate()) continue;
    const std::size_t dim = target[a].dim();
    auto extents = default_chunk(st.global_shape()[dim], st.mesh().extent(a));
    const std::size_t c = st.ctx().coords()[a];
    std::size_t off = 0;
    for (std::size_t i = 0; i < c; ++i) off += extents[i];
    t = slice(t, dim, off, extents[c]);
    shapes.set(a, std::move(extents));
  }
  return ShardTensor<T>(st.ctx(), std::move(t), st.global_shape(), std::move(target),
                        std::move(shapes));
}

struct ShardBalance {
  std::size_t mesh_axis = 0;
  std::size_t tensor_dim = 0;
  std::vector<std::size_t> extents;
  double imbalance = 1.0;  // max / mean
  bool has_empty_shard = false;
};

// Imbalance of the first sharded mesh axis. Read-only.
template <Real T>
ShardBalance rebalance_check(const ShardTensor<T>& st) {
  ShardBalance b;
  for (std::size_t a = 0; a < st.placements().size(); ++a) {
    if (!st.placements()[a].is_shard()) continue;
    b.mesh_axis = a;
    b.tensor_dim = st.placements()[a].dim();
    b.extents = st.sharding_shapes().at(a);
    std::size_t sum = 0, mx = 0;
    for (auto e : b.extents) {
      sum += e;
      mx = std::max(mx, e);
      b.has_empty_shard |= e == 0;
    }
    if (sum > 0) {
      b.imbalance = static_cast<double>(mx) /
                    (static_cast<double>(sum) / static_cast<double>(b.extents.size()));
    }
    break;
  }
  return b;
}

// `rank=<r> coords=<c> local_shape=<s> placements=<p> shard_shapes=<list>`
template <Real T>
std::string debug_dump(const ShardTensor<T>& st) {
  std::ostringstream os;
  os << "rank=" << st.ctx().rank() << " coords=(";
  const auto& c = st.ctx().coords();
  for (std::size_t i = 0; i < c.size(); ++i) os << (i ? "," : "") << c[i];
  os << ") local_shape=" << to_string(st.local().shape())
     << " placements=" << to_string(st.placements())
     << " shard_shapes=" << st.sharding_shapes().to_string();
  return os.str();
}

// True when every Replicate axis holds bitwise-identical locals (by hash).
// Collective over each Replicate axis group.
template <Real T>
bool check_replication(const ShardTensor<T>& st) {
  const std::uint64_t h = content_hash(st.local());
  bool ok = true;
  for (std::size_t a = 0; a < st.placements().size(); ++a) {
    if (!st.placements()[a].is_replicate() || st.mesh().extent(a) == 1) continue;
    for (const auto& v : all_gather_values(st.ctx(), st.ctx().group(a), {h}))
      ok &= v.at(0) == h;
  }
  return ok;
}

}  // namespace dompar
