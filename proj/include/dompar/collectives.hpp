// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "dompar/mesh.hpp"
#include "dompar/ops.hpp"
#include "dompar/tensor.hpp"

namespace dompar {

enum class ReduceOp { kSum, kMax };

namespace detail {

enum MessageKind : std::uint64_t { kTensorMsg = 1, kHaloRequest = 2, kHaloError = 3, kValues = 4 };

// header: [kind, dtype, ndim, extents...]
template <Real T>
Message pack(const Tensor<T>& t, std::uint64_t kind = kTensorMsg) {
  Message m;
  m.header.reserve(3 + t.ndim());
  m.header.push_back(kind);
  m.header.push_back(static_cast<std::uint64_t>(dtype_of<T>()));
  m.header.push_back(t.ndim());
  for (auto e : t.shape()) m.header.push_back(e);
  m.payload.resize(t.nbytes());
  if (t.numel()) std::memcpy(m.payload.data(), t.data().data(), t.nbytes());
  return m;
}

template <Real T>
Tensor<T> unpack(const Message& m) {
  if (m.header.size() < 3 || m.header[0] != kTensorMsg ||
      m.header[1] != static_cast<std::uint64_t>(dtype_of<T>()) ||
      m.header.size() != 3 + m.header[2]) {
    throw CollectiveError("malformed tensor message");
  }
  Shape shape(m.header.begin() + 3, m.header.end());
  Tensor<T> t(shape);
  if (t.nbytes() != m.payload.size()) throw CollectiveError("tensor message payload size mismatch");
  if (t.numel()) std::memcpy(t.data().data(), m.payload.data(), t.nbytes());
  return t;
}

// Every member sends `local` to every other member; returns contributions in
// group order (own entry included).
template <Real T>
std::vector<Tensor<T>> exchange_all(RankContext& ctx, const AxisGroup& group,
                                    const Tensor<T>& local) {
  const std::size_t me = group.index_of(ctx.rank());
  for (std::size_t i = 0; i < group.size(); ++i)
    if (i != me) ctx.send(group.members[i], pack(local));
  std::vector<Tensor<T>> all;
  all.reserve(group.size());
  for (std::size_t i = 0; i < group.size(); ++i)
    all.push_back(i == me ? local : unpack<T>(ctx.recv(group.members[i])));
  return all;
}

}  // namespace detail

// Reduction of identically shaped tensors; folded in group order on every
// member, so every member gets the bitwise-same result.
template <Real T>
Tensor<T> all_reduce(RankContext& ctx, const AxisGroup& group, const Tensor<T>& local,
                     ReduceOp op) {
  ctx.stats().record(CollectiveKind::kAllReduce);
  auto all = detail::exchange_all(ctx, group, local);
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i].shape() != all[0].shape()) {
      throw CollectiveError("all_reduce shape disagreement in group '" + group.name + "': rank " +
                            std::to_string(group.members[0]) + " has " +
                            to_string(all[0].shape()) + ", rank " +
                            std::to_string(group.members[i]) + " has " +
                            to_string(all[i].shape()));
    }
  }
  Tensor<T> acc = std::move(all[0]);
  for (std::size_t i = 1; i < all.size(); ++i) {
    for (std::size_t e = 0; e < acc.numel(); ++e) {
      acc[e] = op == ReduceOp::kSum ? acc[e] + all[i][e] : std::max(acc[e], all[i][e]);
    }
  }
  return acc;
}

// Concatenation along `dim` of per-member tensors whose `dim` extents may
// differ (including zero). Every other extent must agree.
template <Real T>
Tensor<T> all_gather_varlen(RankContext& ctx, const AxisGroup& group, const Tensor<T>& local,
                            std::size_t dim) {
  ctx.stats().record(CollectiveKind::kAllGather);
  auto all = detail::exchange_all(ctx, group, local);
  for (std::size_t i = 0; i < all.size(); ++i) {
    Shape a = all[i].shape(), b = all[0].shape();
    const bool ok = a.size() == b.size() && dim < a.size() && (a[dim] = b[dim] = 0, a == b);
    if (!ok) {
      throw CollectiveError("all_gather extent disagreement along non-gathered axes: rank " +
                            std::to_string(group.members[0]) + " has " +
                            to_string(all[0].shape()) + ", rank " +
                            std::to_string(group.members[i]) + " has " +
                            to_string(all[i].shape()));
    }
  }
  return concat(all, dim);
}

// Gathers one small integer vector per member (no tensor payload).
inline std::vector<std::vector<std::uint64_t>> all_gather_values(
    RankContext& ctx, const AxisGroup& group, const std::vector<std::uint64_t>& values) {
  ctx.stats().record(CollectiveKind::kAllGather);
  const std::size_t me = group.index_of(ctx.rank());
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (i == me) continue;
    Message m;
    m.header.push_back(detail::kValues);
    m.header.insert(m.header.end(), values.begin(), values.end());
    ctx.send(group.members[i], std::move(m));
  }
  std::vector<std::vector<std::uint64_t>> out(group.size());
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (i == me) {
      out[i] = values;
      continue;
    }
    Message m = ctx.recv(group.members[i]);
    if (m.header.empty() || m.header[0] != detail::kValues) {
      throw CollectiveError("malformed value message");
    }
    out[i].assign(m.header.begin() + 1, m.header.end());
  }
  return out;
}

// Copies the tensor held by group member `root_index` to every member.
template <Real T>
Tensor<T> broadcast(RankContext& ctx, const AxisGroup& group, const Tensor<T>& value,
                    std::size_t root_index) {
  ctx.stats().record(CollectiveKind::kBroadcast);
  const std::size_t me = group.index_of(ctx.rank());
  if (me == root_index) {
    for (std::size_t i = 0; i < group.size(); ++i)
      if (i != me) ctx.send(group.members[i], detail::pack(value));
    return value;
  }
  return detail::unpack<T>(ctx.recv(group.members.at(root_index)));
}

// A ring shift whose send has been posted but whose receive is outstanding.
// Lets a caller post the next block before computing on the current one.
template <Real T>
class PendingShift {
 public:
  PendingShift(RankContext& ctx, std::size_t source) : ctx_(&ctx), source_(source) {}

  Tensor<T> finish() { return detail::unpack<T>(ctx_->recv(source_)); }

 private:
  RankContext* ctx_;
  std::size_t source_;
};

template <Real T>
PendingShift<T> ring_shift_begin(RankContext& ctx, const AxisGroup& group,
                                 const Tensor<T>& payload) {
  ctx.stats().record(CollectiveKind::kRingShift);
  const std::size_t n = group.size();
  const std::size_t me = group.index_of(ctx.rank());
  ctx.send(group.members[(me + 1) % n], detail::pack(payload));
  return PendingShift<T>(ctx, group.members[(me + n - 1) % n]);
}

// Each member receives its predecessor's payload; payload shapes may differ.
template <Real T>
Tensor<T> ring_shift(RankContext& ctx, const AxisGroup& group, const Tensor<T>& payload) {
  return ring_shift_begin(ctx, group, payload).finish();
}

// Extends `local` along `dim` by `left_width` entries from the previous
// member and `right_width` entries from the next one. Non-periodic: the
// first and last members get nothing beyond the global edges. Halos are
// single-hop; asking a neighbor for more than it holds is a HaloError on
// both sides.
template <Real T>
Tensor<T> halo_exchange(RankContext& ctx, const AxisGroup& group, const Tensor<T>& local,
                        std::size_t dim, std::size_t left_width, std::size_t right_width) {
  ctx.stats().record(CollectiveKind::kHaloExchange);
  const std::size_t me = group.index_of(ctx.rank());
  const bool has_left = me > 0;
  const bool has_right = me + 1 < group.size();
  if (!has_left) left_width = 0;
  if (!has_right) right_width = 0;
  const std::size_t extent = local.extent(dim);
  const std::size_t left = has_left ? group.members[me - 1] : 0;
  const std::size_t right = has_right ? group.members[me + 1] : 0;

  auto request = [](std::size_t width) {
    Message m;
    m.header = {detail::kHaloRequest, width};
    return m;
  };
  if (has_left) ctx.send(left, request(left_width));
  if (has_right) ctx.send(right, request(right_width));

  std::string error;
  auto describe = [&](std::size_t requester, std::size_t width, std::size_t holder,
                      std::size_t held) {
    return "halo width " + std::to_string(width) + " requested by rank " +
           std::to_string(requester) + " exceeds extent " + std::to_string(held) +
           " held by rank " + std::to_string(holder) +
           "; multi-hop halos are unsupported, use fewer ranks or larger shards";
  };
  auto serve = [&](std::size_t peer, bool tail) {
    Message req = ctx.recv(peer);
    if (req.header.size() != 2 || req.header[0] != detail::kHaloRequest) {
      throw CollectiveError("malformed halo request");
    }
    const std::size_t width = req.header[1];
    if (width > extent) {
      error = describe(peer, width, ctx.rank(), extent);
      Message m;
      m.header = {detail::kHaloError, width, extent};
      ctx.send(peer, std::move(m));
      return;
    }
    ctx.send(peer, detail::pack(slice(local, dim, tail ? extent - width : 0, width)));
  };
  if (has_left) serve(left, false);
  if (has_right) serve(right, true);

  auto receive = [&](std::size_t peer, std::size_t width) -> std::optional<Tensor<T>> {
    Message m = ctx.recv(peer);
    if (!m.header.empty() && m.header[0] == detail::kHaloError) {
      error = describe(ctx.rank(), width, peer, m.header.at(2));
      return std::nullopt;
    }
    return detail::unpack<T>(m);
  };
  std::optional<Tensor<T>> left_halo, right_halo;
  if (has_left) left_halo = receive(left, left_width);
  if (has_right) right_halo = receive(right, right_width);
  if (!error.empty()) throw HaloError(error);

  std::vector<Tensor<T>> parts;
  if (left_halo && left_halo->extent(dim) > 0) parts.push_back(std::move(*left_halo));
  parts.push_back(local);
  if (right_halo && right_halo->extent(dim) > 0) parts.push_back(std::move(*right_halo));
  return parts.size() == 1 ? std::move(parts.front()) : concat(parts, dim);
}

// No member returns before every member has entered.
inline void barrier(RankContext& ctx, const AxisGroup& group) {
  ctx.stats().record(CollectiveKind::kBarrier);
  const std::size_t me = group.index_of(ctx.rank());
  for (std::size_t i = 0; i < group.size(); ++i)
    if (i != me) ctx.send(group.members[i], Message{});
  for (std::size_t i = 0; i < group.size(); ++i)
    if (i != me) ctx.recv(group.members[i]);
}

}  // namespace dompar
