// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

// Reference implementations written independently of the library kernels:
// plain nested loops over std::vector<double>, no shared helpers.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

// a[m,k] · b[k,n]
inline Vec matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t k, std::size_t n) {
  Vec c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

// x[c_in,h,w] (*) w[c_out,c_in,kh,kw], symmetric padding; h = 1, kh = 1 for 1-D.
inline Vec conv2d(const Vec& x, const Vec& w, std::size_t c_in, std::size_t h, std::size_t wd,
                  std::size_t c_out, std::size_t kh, std::size_t kw, std::size_t sh,
                  std::size_t sw, std::size_t ph, std::size_t pw, std::size_t& oh,
                  std::size_t& ow) {
  // Materialize the zero-padded input, then slide.
  const std::size_t hp = h + 2 * ph, wp = wd + 2 * pw;
  Vec padded(c_in * hp * wp, 0.0);
  for (std::size_t c = 0; c < c_in; ++c)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < wd; ++j)
        padded[(c * hp + i + ph) * wp + j + pw] = x[(c * h + i) * wd + j];
  oh = (hp - kh) / sh + 1;
  ow = (wp - kw) / sw + 1;
  Vec out(c_out * oh * ow, 0.0);
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < c_in; ++c)
          for (std::size_t a = 0; a < kh; ++a)
            for (std::size_t b = 0; b < kw; ++b)
              acc += w[((o * c_in + c) * kh + a) * kw + b] *
                     padded[(c * hp + i * sh + a) * wp + j * sw + b];
        out[(o * oh + i) * ow + j] = acc;
      }
  return out;
}

// Row-wise softmax of x[rows, n].
inline Vec softmax_rows(const Vec& x, std::size_t rows, std::size_t n) {
  Vec out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = x[r * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[r * n + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(x[r * n + j] - mx);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = std::exp(x[r * n + j] - mx) / sum;
  }
  return out;
}

// Two-pass mean and population variance of a slice.
inline void stats(const Vec& v, double& mean, double& var) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
}

// Row-wise layer norm of x[rows, n].
inline Vec layer_norm_rows(const Vec& x, std::size_t rows, std::size_t n, double eps) {
  Vec out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    Vec row(x.begin() + static_cast<std::ptrdiff_t>(r * n),
            x.begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
    double mean, var;
    stats(row, mean, var);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = (row[j] - mean) / std::sqrt(var + eps);
  }
  return out;
}

// softmax(Q Kᵀ / √d) V, one head, via explicit score matrix.
inline Vec attention(const Vec& q, const Vec& k, const Vec& v, std::size_t sq, std::size_t sk,
                     std::size_t d) {
  Vec kt(d * sk);
  for (std::size_t i = 0; i < sk; ++i)
    for (std::size_t c = 0; c < d; ++c) kt[c * sk + i] = k[i * d + c];
  Vec s = matmul(q, kt, sq, d, sk);
  for (double& x : s) x /= std::sqrt(static_cast<double>(d));
  return matmul(softmax_rows(s, sq, sk), v, sq, sk, d);
}

// Central difference of f at every coordinate of x.
inline Vec finite_difference(const std::function<double(const Vec&)>& f, Vec x, double h) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double max_rel(const Vec& a, const Vec& b) {
  double diff = 0, scale = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / std::max(scale, 1e-300);
}

}  // namespace oracle
