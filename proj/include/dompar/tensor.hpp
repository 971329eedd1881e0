// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dompar/errors.hpp"
#include "dompar/memory_tracker.hpp"

namespace dompar {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

enum class DType { kFloat32, kFloat64 };

constexpr std::size_t byte_width(DType dtype) { return dtype == DType::kFloat32 ? 4 : 8; }

constexpr const char* to_string(DType dtype) {
  return dtype == DType::kFloat32 ? "float32" : "float64";
}

template <typename T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

template <Real T>
constexpr DType dtype_of() {
  return std::same_as<T, float> ? DType::kFloat32 : DType::kFloat64;
}

// Split of a shape around one axis: [outer, extent, inner] in row-major order.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

inline AxisSplit split_at(const Shape& shape, std::size_t dim) {
  if (dim >= shape.size()) {
    throw DimensionError("axis " + std::to_string(dim) + " out of range for shape " +
                         to_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < dim; ++i) s.outer *= shape[i];
  s.extent = shape[dim];
  for (std::size_t i = dim + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// Dense row-major N-D array. Value semantics: copies are deep.
template <Real T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : Tensor(Shape{0}) {}

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)),
        data_(dompar::numel(shape_), fill),
        charge_(static_cast<std::int64_t>(data_.size() * sizeof(T))) {}

  Tensor(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != dompar::numel(shape_)) {
      throw DimensionError("buffer of " + std::to_string(data_.size()) +
                           " elements does not match shape " + to_string(shape_));
    }
    charge_ = TrackedBytes(static_cast<std::int64_t>(data_.size() * sizeof(T)));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T{1}); }

  static Tensor arange(std::size_t n) {
    Tensor t(Shape{n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i] = static_cast<T>(i);
    return t;
  }

  static Tensor random(Shape shape, std::mt19937_64& rng, T lo = T{-1}, T hi = T{1}) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.data_) v = static_cast<T>(dist(rng));
    return t;
  }

  static Tensor identity(std::size_t n) {
    Tensor t(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = T{1};
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t ndim() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_.size(); }
  std::size_t nbytes() const noexcept { return data_.size() * sizeof(T); }
  static constexpr DType dtype() { return dtype_of<T>(); }

  std::size_t extent(std::size_t dim) const {
    if (dim >= shape_.size()) {
      throw DimensionError("axis " + std::to_string(dim) + " out of range for shape " +
                           to_string(shape_));
    }
    return shape_[dim];
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  T& operator[](std::size_t flat) { return data_[flat]; }
  const T& operator[](std::size_t flat) const { return data_[flat]; }

  template <std::integral... I>
  T& at(I... idx) {
    return data_[offset_of({static_cast<std::size_t>(idx)...})];
  }
  template <std::integral... I>
  const T& at(I... idx) const {
    return data_[offset_of({static_cast<std::size_t>(idx)...})];
  }

  Tensor reshaped(Shape shape) const& {
    Tensor copy = *this;
    return std::move(copy).reshaped(std::move(shape));
  }
  Tensor reshaped(Shape shape) && {
    if (dompar::numel(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    shape_ = std::move(shape);
    return std::move(*this);
  }

 private:
  std::size_t offset_of(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size()) {
      throw DimensionError("index rank " + std::to_string(idx.size()) + " for shape " +
                           to_string(shape_));
    }
    std::size_t off = 0;
    std::size_t d = 0;
    for (std::size_t i : idx) {
      if (i >= shape_[d]) throw DimensionError("index out of bounds for " + to_string(shape_));
      off = off * shape_[d++] + i;
    }
    return off;
  }

  Shape shape_;
  std::vector<T> data_;
  TrackedBytes charge_;
};

// Exact equality of shape and bit patterns.
template <Real T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() &&
         (a.numel() == 0 ||
          std::memcmp(a.data().data(), b.data().data(), a.nbytes()) == 0);
}

// max|a-b| / max(max|b|, tiny); 0 for empty tensors.
template <Real T>
double max_relative_error(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("cannot compare " + to_string(a.shape()) + " with " +
                         to_string(b.shape()));
  }
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double x = a[i];
    const double y = b[i];
    if (!std::isfinite(x) || !std::isfinite(y)) return std::numeric_limits<double>::infinity();
    diff = std::max(diff, std::abs(x - y));
    scale = std::max(scale, std::abs(y));
  }
  return diff / std::max(scale, 1e-300);
}

template <Real To, Real From>
Tensor<To> cast(const Tensor<From>& t) {
  Tensor<To> out(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) out[i] = static_cast<To>(t[i]);
  return out;
}

// 64-bit FNV-1a over the raw bytes; used for replication coherence checks.
template <Real T>
std::uint64_t content_hash(const Tensor<T>& t) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (std::size_t e : t.shape()) mix(&e, sizeof(e));
  if (t.numel()) mix(t.data().data(), t.nbytes());
  return h;
}

}  // namespace dompar
