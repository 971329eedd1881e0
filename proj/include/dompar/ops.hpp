// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

// Dense single-rank kernels. Every distributed operator in the library is
// checked against these. Reductions accumulate in double for both element
// types.

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dompar/tensor.hpp"

namespace dompar {

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

inline std::string pair(const Shape& a, const Shape& b) {
  return to_string(a) + " and " + to_string(b);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Layout helpers

// Copy of `len` entries of `t` along `dim` starting at `begin`.
template <Real T>
Tensor<T> slice(const Tensor<T>& t, std::size_t dim, std::size_t begin, std::size_t len) {
  const AxisSplit s = split_at(t.shape(), dim);
  detail::require(begin + len <= s.extent, "slice [" + std::to_string(begin) + ", " +
                                               std::to_string(begin + len) + ") exceeds extent " +
                                               std::to_string(s.extent));
  Shape out_shape = t.shape();
  out_shape[dim] = len;
  Tensor<T> out(out_shape);
  const auto src = t.data();
  auto dst = out.data();
  const std::size_t run = len * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o) {
    const T* from = src.data() + (o * s.extent + begin) * s.inner;
    std::copy(from, from + run, dst.data() + o * run);
  }
  return out;
}

// Concatenation along `dim`; every other extent must agree.
template <Real T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t dim) {
  detail::require(!parts.empty(), "concat of zero tensors");
  Shape out_shape = parts.front().shape();
  detail::require(dim < out_shape.size(), "concat axis out of range");
  Shape reference = out_shape;
  reference[dim] = 0;
  out_shape[dim] = 0;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    detail::require(probe.size() == reference.size() && (probe[dim] = 0, probe == reference),
                    "concat extent mismatch: " + detail::pair(p.shape(), parts[0].shape()));
    out_shape[dim] += p.extent(dim);
  }
  Tensor<T> out(out_shape);
  const AxisSplit s = split_at(out_shape, dim);
  auto dst = out.data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t run = p.extent(dim) * s.inner;
    const auto src = p.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy(src.data() + o * run, src.data() + (o + 1) * run,
                dst.data() + (o * s.extent) * s.inner + offset);
    }
    offset += run;
  }
  return out;
}

template <Real T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t dim) {
  return concat(std::span<const Tensor<T>>(parts), dim);
}

template <Real T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require(a.ndim() == 2, "transpose expects a matrix, got " + to_string(a.shape()));
  const std::size_t m = a.extent(0), n = a.extent(1);
  Tensor<T> out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra

template <Real T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.ndim() == 2 && b.ndim() == 2 && a.extent(1) == b.extent(0),
                  "matmul shape mismatch: " + detail::pair(a.shape(), b.shape()));
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor<T> c(Shape{m, n});
  std::vector<double> row(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const T* brow = b.data().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * static_cast<double>(brow[j]);
    }
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = static_cast<T>(row[j]);
  }
  return c;
}

enum class ElementwiseOp { kAdd, kMul, kScale };

template <Real T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(op != ElementwiseOp::kScale, "scale takes a scalar operand");
  detail::require(a.shape() == b.shape(),
                  "elementwise shape mismatch: " + detail::pair(a.shape(), b.shape()));
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i)
    out[i] = op == ElementwiseOp::kAdd ? a[i] + b[i] : a[i] * b[i];
  return out;
}

template <Real T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, double scalar) {
  Tensor<T> out(a.shape());
  const T s = static_cast<T>(scalar);
  for (std::size_t i = 0; i < a.numel(); ++i)
    out[i] = op == ElementwiseOp::kAdd ? a[i] + s : a[i] * s;
  return out;
}

template <Real T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(ElementwiseOp::kAdd, a, b);
}
template <Real T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(ElementwiseOp::kMul, a, b);
}
template <Real T>
Tensor<T> scale(const Tensor<T>& a, double s) {
  return elementwise(ElementwiseOp::kScale, a, s);
}

enum class UnaryOp { kRelu, kGelu };

template <Real T>
Tensor<T> unary(UnaryOp op, const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double x = a[i];
    if (op == UnaryOp::kRelu) {
      out[i] = static_cast<T>(x > 0 ? x : 0.0);
    } else {
      // tanh approximation
      constexpr double kC = 0.7978845608028654;
      out[i] = static_cast<T>(0.5 * x * (1.0 + std::tanh(kC * (x + 0.044715 * x * x * x))));
    }
  }
  return out;
}

namespace detail {

// Rows of an N-D tensor whose last axis is the feature axis.
inline std::size_t leading_rows(const Shape& s) {
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

}  // namespace detail

// z = x·Wᵀ + bias, applied to every row of x (all axes but the last are batch).
template <Real T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  detail::require(x.ndim() >= 1 && weight.ndim() == 2 && bias.ndim() == 1,
                  "linear expects x[...,N_in], W[N_out,N_in], bias[N_out]");
  const std::size_t n_in = x.shape().back();
  const std::size_t n_out = weight.extent(0);
  detail::require(weight.extent(1) == n_in && bias.extent(0) == n_out,
                  "linear shape mismatch: x " + to_string(x.shape()) + ", W " +
                      to_string(weight.shape()) + ", bias " + to_string(bias.shape()));
  Shape out_shape = x.shape();
  out_shape.back() = n_out;
  Tensor<T> z(out_shape);
  const std::size_t rows = detail::leading_rows(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data().data() + r * n_in;
    for (std::size_t o = 0; o < n_out; ++o) {
      const T* wr = weight.data().data() + o * n_in;
      double acc = 0.0;
      for (std::size_t i = 0; i < n_in; ++i) acc += static_cast<double>(wr[i]) * xr[i];
      z[r * n_out + o] = static_cast<T>(acc + static_cast<double>(bias[o]));
    }
  }
  return z;
}

template <Real T>
struct LinearGrads {
  Tensor<T> input;   // dL/dx, shaped like x
  Tensor<T> weight;  // dL/dW, [N_out, N_in]
  Tensor<T> bias;    // dL/dB, [N_out]
};

// Gradients of z = x·Wᵀ + bias given dL/dz; the weight and bias gradients are
// summed over every batch row.
template <Real T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weight,
                               const Tensor<T>& grad_out) {
  detail::require(x.ndim() >= 1 && weight.ndim() == 2, "linear_backward expects x[...,N_in], W");
  const std::size_t n_in = x.shape().back();
  const std::size_t n_out = weight.extent(0);
  Shape expect = x.shape();
  expect.back() = n_out;
  detail::require(weight.extent(1) == n_in && grad_out.shape() == expect,
                  "linear_backward shape mismatch: x " + to_string(x.shape()) + ", W " +
                      to_string(weight.shape()) + ", dL/dz " + to_string(grad_out.shape()));
  const std::size_t rows = detail::leading_rows(x.shape());
  LinearGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(Shape{n_out, n_in}), Tensor<T>(Shape{n_out})};

  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < n_in; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < n_out; ++o)
        acc += static_cast<double>(grad_out[r * n_out + o]) * weight[o * n_in + i];
      g.input[r * n_in + i] = static_cast<T>(acc);
    }
  }
  for (std::size_t o = 0; o < n_out; ++o) {
    double db = 0.0;
    for (std::size_t r = 0; r < rows; ++r) db += grad_out[r * n_out + o];
    g.bias[o] = static_cast<T>(db);
    for (std::size_t i = 0; i < n_in; ++i) {
      double acc = 0.0;
      for (std::size_t r = 0; r < rows; ++r)
        acc += static_cast<double>(grad_out[r * n_out + o]) * x[r * n_in + i];
      g.weight[o * n_in + i] = static_cast<T>(acc);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Convolution

// floor((G + pad_lo + pad_hi - k) / s) + 1, or 0 when the window never fits.
inline std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride,
                                      std::size_t pad_lo, std::size_t pad_hi) {
  const std::size_t span = extent + pad_lo + pad_hi;
  if (stride == 0 || span < kernel) return 0;
  return (span - kernel) / stride + 1;
}

inline std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride,
                                      std::size_t padding) {
  return conv_output_extent(extent, kernel, stride, padding, padding);
}

// Cross-correlation with (possibly asymmetric) zero padding.
// x: [..., C_in, spatial...], w: [C_out, C_in, k...]; 1 or 2 spatial dims.
template <Real T>
Tensor<T> conv_padded(const Tensor<T>& x, const Tensor<T>& w, std::span<const std::size_t> stride,
                      std::span<const std::size_t> pad_lo, std::span<const std::size_t> pad_hi) {
  if (w.ndim() != 3 && w.ndim() != 4) {
    throw UnsupportedError("conv supports 1-D or 2-D kernels, got " + to_string(w.shape()));
  }
  const std::size_t nsp = w.ndim() - 2;
  detail::require(x.ndim() >= nsp + 1, "conv input " + to_string(x.shape()) +
                                           " has too few axes for kernel " + to_string(w.shape()));
  detail::require(stride.size() == nsp && pad_lo.size() == nsp && pad_hi.size() == nsp,
                  "conv expects one stride/padding entry per spatial dim");
  const std::size_t c_out = w.extent(0), c_in = w.extent(1);
  const std::size_t chan_axis = x.ndim() - nsp - 1;
  detail::require(x.extent(chan_axis) == c_in,
                  "conv channel mismatch: " + detail::pair(x.shape(), w.shape()));

  // 1-D is handled as 2-D with a unit leading spatial axis.
  std::size_t in_ext[2] = {1, 1}, k_ext[2] = {1, 1}, st[2] = {1, 1}, pl[2] = {0, 0},
              ph[2] = {0, 0};
  for (std::size_t d = 0; d < nsp; ++d) {
    const std::size_t k = w.extent(2 + d);
    if (k % 2 == 0) {
      throw UnsupportedError("conv kernel extents must be odd, got " + to_string(w.shape()));
    }
    if (stride[d] == 0) throw UnsupportedError("conv stride must be positive");
    const std::size_t slot = d + (2 - nsp);
    in_ext[slot] = x.extent(chan_axis + 1 + d);
    k_ext[slot] = k;
    st[slot] = stride[d];
    pl[slot] = pad_lo[d];
    ph[slot] = pad_hi[d];
  }
  const std::size_t in_h = in_ext[0], in_w = in_ext[1], k_h = k_ext[0], k_w = k_ext[1];
  const std::size_t s_h = st[0], s_w = st[1], pl_h = pl[0], pl_w = pl[1];
  const std::size_t ph_h = ph[0], ph_w = ph[1];

  const std::size_t out_h = conv_output_extent(in_h, k_h, s_h, pl_h, ph_h);
  const std::size_t out_w = conv_output_extent(in_w, k_w, s_w, pl_w, ph_w);
  if (out_h == 0 || out_w == 0) {
    throw ShapeError("conv output extent is non-positive for input " + to_string(x.shape()) +
                     " and kernel " + to_string(w.shape()));
  }

  Shape out_shape(x.shape().begin(), x.shape().begin() + static_cast<std::ptrdiff_t>(chan_axis));
  out_shape.push_back(c_out);
  if (nsp == 2) out_shape.push_back(out_h);
  out_shape.push_back(out_w);
  Tensor<T> out(out_shape);

  std::size_t batch = 1;
  for (std::size_t i = 0; i < chan_axis; ++i) batch *= x.extent(i);
  const auto xd = x.data();
  const auto wd = w.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < c_out; ++co) {
      for (std::size_t oh = 0; oh < out_h; ++oh) {
        for (std::size_t ow = 0; ow < out_w; ++ow) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < c_in; ++ci) {
            const T* xin = xd.data() + (b * c_in + ci) * in_h * in_w;
            const T* win = wd.data() + (co * c_in + ci) * k_h * k_w;
            for (std::size_t kh = 0; kh < k_h; ++kh) {
              const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s_h + kh) -
                                        static_cast<std::ptrdiff_t>(pl_h);
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(in_h)) continue;
              for (std::size_t kw = 0; kw < k_w; ++kw) {
                const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * s_w + kw) -
                                          static_cast<std::ptrdiff_t>(pl_w);
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(in_w)) continue;
                acc += static_cast<double>(win[kh * k_w + kw]) *
                       xin[static_cast<std::size_t>(ih) * in_w + static_cast<std::size_t>(iw)];
              }
            }
          }
          out[((b * c_out + co) * out_h + oh) * out_w + ow] = static_cast<T>(acc);
        }
      }
    }
  }
  return out;
}

template <Real T>
Tensor<T> conv(const Tensor<T>& x, const Tensor<T>& w, std::span<const std::size_t> stride,
               std::span<const std::size_t> padding) {
  return conv_padded(x, w, stride, padding, padding);
}

// Same stride and padding on every spatial dim.
template <Real T>
Tensor<T> conv(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t padding) {
  const std::size_t nsp = w.ndim() >= 2 ? w.ndim() - 2 : 0;
  const std::vector<std::size_t> s(nsp, stride), p(nsp, padding);
  return conv_padded<T>(x, w, s, p, p);
}

// ---------------------------------------------------------------------------
// Normalizations and attention

template <Real T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t dim) {
  const AxisSplit s = split_at(x.shape(), dim);
  Tensor<T> out(x.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      auto idx = [&](std::size_t e) { return (o * s.extent + e) * s.inner + in; };
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e) mx = std::max(mx, static_cast<double>(x[idx(e)]));
      double sum = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) sum += std::exp(static_cast<double>(x[idx(e)]) - mx);
      for (std::size_t e = 0; e < s.extent; ++e)
        out[idx(e)] = static_cast<T>(std::exp(static_cast<double>(x[idx(e)]) - mx) / sum);
    }
  }
  return out;
}

// (x - mean) / sqrt(var + eps) along `dim`, population variance.
template <Real T>
Tensor<T> layer_norm(const Tensor<T>& x, std::size_t dim, double eps) {
  const AxisSplit s = split_at(x.shape(), dim);
  Tensor<T> out(x.shape());
  if (s.extent == 0) return out;
  const double n = static_cast<double>(s.extent);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      auto idx = [&](std::size_t e) { return (o * s.extent + e) * s.inner + in; };
      double sum = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) sum += x[idx(e)];
      const double mean = sum / n;
      double sq = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        const double d = x[idx(e)] - mean;
        sq += d * d;
      }
      const double inv = 1.0 / std::sqrt(sq / n + eps);
      for (std::size_t e = 0; e < s.extent; ++e)
        out[idx(e)] = static_cast<T>((x[idx(e)] - mean) * inv);
    }
  }
  return out;
}

namespace detail {

// softmax(Q_h·K_hᵀ/√d)·V_h for the column block [col, col + d) of each input.
template <Real T>
void attention_head(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t col,
                    std::size_t d, Tensor<T>& out) {
  const std::size_t sq = q.extent(0), sk = k.extent(0), width = q.extent(1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> scores(sk);
  std::vector<double> acc(d);
  for (std::size_t i = 0; i < sq; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < sk; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c)
        dot += static_cast<double>(q[i * width + col + c]) * k[j * width + col + c];
      scores[j] = dot * scale;
      mx = std::max(mx, scores[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < sk; ++j) {
      scores[j] = std::exp(scores[j] - mx);
      denom += scores[j];
    }
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < sk; ++j)
      for (std::size_t c = 0; c < d; ++c) acc[c] += scores[j] * v[j * width + col + c];
    for (std::size_t c = 0; c < d; ++c) out[i * width + col + c] = static_cast<T>(acc[c] / denom);
  }
}

}  // namespace detail

// Multi-head attention without projections: the feature axis is split into
// `heads` equal column blocks, each attended independently.
template <Real T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               std::size_t heads) {
  detail::require(q.ndim() == 2 && k.ndim() == 2 && v.ndim() == 2,
                  "attention expects Q[S_q,D], K[S_k,D], V[S_k,D]");
  const std::size_t width = q.extent(1);
  detail::require(k.extent(1) == width && v.extent(1) == width && k.extent(0) == v.extent(0),
                  "attention shape mismatch: Q " + to_string(q.shape()) + ", K " +
                      to_string(k.shape()) + ", V " + to_string(v.shape()));
  detail::require(heads >= 1 && width % heads == 0,
                  "head count " + std::to_string(heads) + " does not divide D=" +
                      std::to_string(width));
  Tensor<T> out(q.shape());
  if (k.extent(0) == 0) return out;
  const std::size_t d = width / heads;
  for (std::size_t h = 0; h < heads; ++h) detail::attention_head(q, k, v, h * d, d, out);
  return out;
}

// softmax(Q·Kᵀ/√D)·V, unmasked.
template <Real T>
Tensor<T> sdpa_dense(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  return multi_head_attention(q, k, v, 1);
}

}  // namespace dompar
