// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

// Small vision transformer: convolutional tokenizer followed by pre-norm
// attention/MLP blocks. The dense and sharded forwards share weights and
// structure so they can be compared directly.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dompar/activation_tape.hpp"
#include "dompar/ops.hpp"
#include "dompar/parallel_ops.hpp"
#include "dompar/shard_tensor.hpp"

namespace dompar {

struct ViTConfig {
  std::size_t in_channels = 1;
  std::size_t kernel = 5;  // odd, so halos stay symmetric
  std::size_t stride = 4;  // patch size
  std::size_t padding = 2;
  std::size_t dim = 16;
  std::size_t heads = 2;
  std::size_t layers = 2;
  std::size_t mlp_ratio = 2;
  double eps = 1e-5;

  void validate() const {
    if (kernel % 2 == 0) throw UnsupportedError("tokenizer kernel must be odd");
    if (stride == 0 || dim == 0 || in_channels == 0 || mlp_ratio == 0) {
      throw ShapeError("tokenizer stride, channels, dim and mlp ratio must be positive");
    }
    if (heads == 0 || dim % heads != 0) {
      throw DimensionError("head count " + std::to_string(heads) + " does not divide dim " +
                           std::to_string(dim));
    }
  }
};

template <Real T>
struct ViTLayerWeights {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<T> w1, b1, w2, b2;
};

template <Real T>
struct ViTWeights {
  Tensor<T> tokenizer;  // [dim, in_channels, k, k]
  std::vector<ViTLayerWeights<T>> layers;
};

// Uniform(±1/√fan_in) initialization from `seed`; identical on every rank.
template <Real T>
ViTWeights<T> make_vit_weights(const ViTConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  auto uniform = [&](Shape shape, std::size_t fan_in) {
    const T b = static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in)));
    return Tensor<T>::random(std::move(shape), rng, -b, b);
  };
  const std::size_t d = cfg.dim, hidden = cfg.dim * cfg.mlp_ratio;
  ViTWeights<T> w;
  w.tokenizer = uniform({d, cfg.in_channels, cfg.kernel, cfg.kernel},
                        cfg.in_channels * cfg.kernel * cfg.kernel);
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    ViTLayerWeights<T> l;
    l.wq = uniform({d, d}, d);
    l.bq = uniform({d}, d);
    l.wk = uniform({d, d}, d);
    l.bk = uniform({d}, d);
    l.wv = uniform({d, d}, d);
    l.bv = uniform({d}, d);
    l.wo = uniform({d, d}, d);
    l.bo = uniform({d}, d);
    l.w1 = uniform({hidden, d}, d);
    l.b1 = uniform({hidden}, d);
    l.w2 = uniform({d, hidden}, hidden);
    l.b2 = uniform({d}, hidden);
    w.layers.push_back(std::move(l));
  }
  return w;
}

// [D, h, w] feature map -> [h·w, D] token sequence (row-major over h, w).
template <Real T>
Tensor<T> tokens_from_feature_map(const Tensor<T>& fmap) {
  if (fmap.ndim() != 3) throw DimensionError("feature map must be [D, h, w]");
  const std::size_t d = fmap.extent(0);
  return transpose(fmap.reshaped({d, fmap.extent(1) * fmap.extent(2)}));
}

namespace detail {

template <Real T>
void tape_save(ActivationTape<T>* tape, const Tensor<T>& t) {
  if (tape) tape->save(t);
}

}  // namespace detail

// image: [C, H, W]; returns [tokens, dim].
template <Real T>
Tensor<T> vit_forward_dense(const Tensor<T>& image, const ViTWeights<T>& w, const ViTConfig& cfg) {
  cfg.validate();
  Tensor<T> x = tokens_from_feature_map(conv(image, w.tokenizer, cfg.stride, cfg.padding));
  for (const auto& l : w.layers) {
    const Tensor<T> h = layer_norm(x, 1, cfg.eps);
    const Tensor<T> att = multi_head_attention(linear_forward(h, l.wq, l.bq),
                                               linear_forward(h, l.wk, l.bk),
                                               linear_forward(h, l.wv, l.bv), cfg.heads);
    x = add(x, linear_forward(att, l.wo, l.bo));
    const Tensor<T> h2 = layer_norm(x, 1, cfg.eps);
    const Tensor<T> u = unary(UnaryOp::kGelu, linear_forward(h2, l.w1, l.b1));
    x = add(x, linear_forward(u, l.w2, l.b2));
  }
  return x;
}

// image: [C, H, W] sharded along H or W on one mesh axis (a W-sharded image
// is first redistributed to H). Returns the token sequence sharded along the
// sequence dim. With a tape, every intermediate a backward pass would need
// stays alive until the tape is cleared.
template <Real T>
ShardTensor<T> vit_block_pipeline(const ShardTensor<T>& image, const ViTWeights<T>& w,
                                  const ViTConfig& cfg, ActivationTape<T>* tape = nullptr) {
  cfg.validate();
  if (image.ndim() != 3) throw DimensionError("image must be [C, H, W]");
  std::optional<std::size_t> axis;
  for (std::size_t a = 0; a < image.placements().size(); ++a) {
    const Placement& p = image.placements()[a];
    if (!p.is_shard()) continue;
    if (axis || p.dim() == 0) {
      throw UnsupportedError("vit pipeline expects one sharded spatial dim, got " +
                             to_string(image.placements()));
    }
    axis = a;
  }
  if (axis && image.placements()[*axis].dim() == 2) {
    Placements by_rows = image.placements();
    by_rows[*axis] = Placement::shard(1);
    return vit_block_pipeline(redistribute(image, by_rows), w, cfg, tape);
  }

  RankContext& ctx = image.ctx();
  const ShardTensor<T> fmap = halo_conv(image, w.tokenizer, cfg.stride, cfg.padding);
  detail::tape_save(tape, fmap.local());
  const std::size_t wout = fmap.global_shape()[2];

  Placements seq_placements(ctx.mesh().ndim(), Placement::replicate());
  ShardingShapes seq_shapes(ctx.mesh().ndim());
  if (axis) {
    seq_placements[*axis] = Placement::shard(0);
    std::vector<std::size_t> rows = fmap.sharding_shapes().at(*axis);
    for (auto& r : rows) r *= wout;
    seq_shapes.set(*axis, std::move(rows));
  }
  ShardTensor<T> x(ctx, tokens_from_feature_map(fmap.local()),
                   Shape{fmap.global_shape()[1] * wout, cfg.dim}, seq_placements, seq_shapes);

  for (const auto& l : w.layers) {
    detail::tape_save(tape, x.local());
    const ShardTensor<T> h = sharded_layer_norm(x, 1, cfg.eps);
    const ShardTensor<T> q = sharded_linear(h, l.wq, l.bq);
    const ShardTensor<T> k = sharded_linear(h, l.wk, l.bk);
    const ShardTensor<T> v = sharded_linear(h, l.wv, l.bv);
    const ShardTensor<T> att = ring_attention(q, k, v, cfg.heads);
    for (const auto* t : {&h, &q, &k, &v, &att}) detail::tape_save(tape, t->local());
    x = sharded_elementwise(ElementwiseOp::kAdd, x, sharded_linear(att, l.wo, l.bo));

    detail::tape_save(tape, x.local());
    const ShardTensor<T> h2 = sharded_layer_norm(x, 1, cfg.eps);
    const ShardTensor<T> pre = sharded_linear(h2, l.w1, l.b1);
    const ShardTensor<T> u = sharded_unary(UnaryOp::kGelu, pre);
    for (const auto* t : {&h2, &pre, &u}) detail::tape_save(tape, t->local());
    x = sharded_elementwise(ElementwiseOp::kAdd, x, sharded_linear(u, l.w2, l.b2));
  }
  return x;
}

}  // namespace dompar
