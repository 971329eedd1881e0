// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

// Closed-form memory accounting for a stack of equal-width linear layers:
// parameters, weights, optimizer state and saved activations.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "dompar/activation_tape.hpp"
#include "dompar/errors.hpp"
#include "dompar/ops.hpp"
#include "dompar/shard_tensor.hpp"

namespace dompar {

inline constexpr double kBytesPerMiB = 1024.0 * 1024.0;

inline double to_mib(double bytes) { return bytes / kBytesPerMiB; }

struct LayerStackSpec {
  std::size_t layers = 1;
  std::size_t features = 1;
  std::vector<std::size_t> spatial;
  std::size_t batch = 1;
  std::size_t byte_width = 4;
  double optimizer_multiplier = 3.0;

  void validate() const {
    if (layers == 0 || features == 0 || batch == 0 || byte_width == 0) {
      throw ShapeError("layer stack layers, features, batch and byte width must be positive");
    }
    if (spatial.empty()) throw ShapeError("layer stack needs at least one spatial extent");
    for (auto s : spatial)
      if (s == 0) throw ShapeError("spatial extents must be positive");
    if (!(optimizer_multiplier >= 0.0) || !std::isfinite(optimizer_multiplier)) {
      throw ShapeError("optimizer multiplier must be finite and non-negative");
    }
  }
};

// L·(F² + F)
inline std::uint64_t param_count(const LayerStackSpec& s) {
  s.validate();
  const std::uint64_t f = s.features;
  return s.layers * (f * f + f);
}

inline std::uint64_t weight_bytes(const LayerStackSpec& s) { return s.byte_width * param_count(s); }

inline double optimizer_bytes(const LayerStackSpec& s) {
  return s.optimizer_multiplier * static_cast<double>(weight_bytes(s));
}

// Saved layer inputs only: B·prod(spatial)·F·α·L.
inline std::uint64_t activation_bytes(const LayerStackSpec& s) {
  s.validate();
  std::uint64_t points = s.batch;
  for (auto e : s.spatial) points *= e;
  return points * s.features * s.byte_width * s.layers;
}

// Per-rank share when spatial[0] is split into `extents` (must sum to it).
inline std::vector<std::uint64_t> activation_bytes_per_rank(const LayerStackSpec& s,
                                                            const std::vector<std::size_t>& extents) {
  const std::uint64_t total = activation_bytes(s);
  std::size_t sum = 0;
  for (auto e : extents) sum += e;
  if (sum != s.spatial[0]) {
    throw MetadataError("shard extents " + to_string(Shape(extents)) + " do not sum to " +
                        std::to_string(s.spatial[0]));
  }
  const std::uint64_t per_row = total / s.spatial[0];
  std::vector<std::uint64_t> out;
  out.reserve(extents.size());
  for (auto e : extents) out.push_back(per_row * e);
  return out;
}

inline std::vector<std::uint64_t> activation_bytes_per_rank(const LayerStackSpec& s,
                                                            std::size_t ranks) {
  if (ranks == 0) throw ShapeError("rank count must be positive");
  s.validate();
  return activation_bytes_per_rank(s, default_chunk(s.spatial[0], ranks));
}

struct MemoryReport {
  std::uint64_t n_params = 0;
  std::uint64_t weight_bytes = 0;
  double optimizer_bytes = 0;
  std::uint64_t activation_bytes = 0;
  std::vector<std::uint64_t> activation_bytes_per_rank;

  double weights_mib() const { return to_mib(static_cast<double>(weight_bytes)); }
  double optimizer_mib() const { return to_mib(optimizer_bytes); }
  double activations_mib() const { return to_mib(static_cast<double>(activation_bytes)); }
};

inline MemoryReport memory_report(const LayerStackSpec& s, std::size_t ranks = 1) {
  MemoryReport r;
  r.n_params = param_count(s);
  r.weight_bytes = weight_bytes(s);
  r.optimizer_bytes = optimizer_bytes(s);
  r.activation_bytes = activation_bytes(s);
  r.activation_bytes_per_rank = activation_bytes_per_rank(s, ranks);
  return r;
}

// ---------------------------------------------------------------------------
// Scaling fit

struct ScalingFit {
  int degree = 0;
  double intercept = 0;
  double coefficient = 0;
  double relative_residual = 0;
  std::array<double, 3> residual_by_degree{};  // degrees 1, 2, 3
};

// Least-squares fit of y = a + c·x^d for d ∈ {1,2,3}; picks the smallest
// relative residual ‖y − ŷ‖/‖y‖.
inline ScalingFit scaling_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw FitError("scaling fit needs one value per resolution");
  if (x.size() < 4) throw FitError("scaling fit needs at least 4 points");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw FitError("scaling fit needs positive finite resolutions and finite values");
    }
    for (std::size_t j = 0; j < i; ++j)
      if (x[j] == x[i]) throw FitError("scaling fit resolutions must be distinct");
  }
  const double n = static_cast<double>(x.size());
  double ymean = 0, ynorm = 0;
  for (double v : y) ymean += v / n;
  double yvar = 0;
  for (double v : y) {
    yvar += (v - ymean) * (v - ymean);
    ynorm += v * v;
  }
  if (yvar <= 1e-24 * std::max(ynorm, 1e-300)) throw FitError("degenerate fit: constant data");

  ScalingFit best;
  best.relative_residual = std::numeric_limits<double>::infinity();
  for (int d = 1; d <= 3; ++d) {
    std::vector<double> u(x.size());
    double umean = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      u[i] = std::pow(x[i], d);
      umean += u[i] / n;
    }
    double suu = 0, suy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      suu += (u[i] - umean) * (u[i] - umean);
      suy += (u[i] - umean) * (y[i] - ymean);
    }
    const double c = suy / suu;
    const double a = ymean - c * umean;
    double rss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - (a + c * u[i]);
      rss += r * r;
    }
    const double rel = std::sqrt(rss / ynorm);
    best.residual_by_degree[static_cast<std::size_t>(d - 1)] = rel;
    if (rel < best.relative_residual) {
      best.degree = d;
      best.intercept = a;
      best.coefficient = c;
      best.relative_residual = rel;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Formatting and the reference table

// 20992000 -> "21.0M", 1342341120 -> "1.3B".
inline std::string format_param_count(std::uint64_t n) {
  char buf[32];
  const double v = static_cast<double>(n);
  if (v >= 1e9) {
    std::snprintf(buf, sizeof buf, "%.1fB", v / 1e9);
  } else if (v >= 1e6) {
    std::snprintf(buf, sizeof buf, "%.1fM", v / 1e6);
  } else if (v >= 1e3) {
    std::snprintf(buf, sizeof buf, "%.1fK", v / 1e3);
  } else {
    std::snprintf(buf, sizeof buf, "%llu", static_cast<unsigned long long>(n));
  }
  return buf;
}

// One decimal, no grouping: 80.1, 5120.6.
inline std::string format_mib(double mib) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", mib);
  return buf;
}

// Integral MiB with thousands separators from five digits on (5120, 40,960);
// non-integral values fall back to one decimal.
inline std::string format_mib_grouped(double mib) {
  if (mib != std::floor(mib) || mib > 9e15) return format_mib(mib);
  std::string digits = std::to_string(static_cast<std::uint64_t>(mib));
  if (digits.size() < 5) return digits;
  std::string out;
  const std::size_t lead = digits.size() % 3 == 0 ? 3 : digits.size() % 3;
  out = digits.substr(0, lead);
  for (std::size_t i = lead; i < digits.size(); i += 3) out += "," + digits.substr(i, 3);
  return out;
}

inline std::string format_spatial(const std::vector<std::size_t>& spatial) {
  std::string s = "(";
  for (std::size_t i = 0; i < spatial.size(); ++i) s += (i ? "," : "") + std::to_string(spatial[i]);
  if (spatial.size() == 1) s += ",";
  return s + ")";
}

struct TableRow {
  LayerStackSpec spec;
  std::string params;
  std::string weights_mib;
  std::string activations_mib;
};

// Six configurations: spatial (256,), (256,256), (256,256,256) × F ∈ {1024,
// 8192}, 20 layers, float32, batch 1.
inline std::vector<TableRow> table1_rows() {
  std::vector<TableRow> rows;
  for (std::size_t nd = 1; nd <= 3; ++nd) {
    for (std::size_t f : {1024u, 8192u}) {
      LayerStackSpec s;
      s.layers = 20;
      s.features = f;
      s.spatial.assign(nd, 256);
      const MemoryReport r = memory_report(s);
      rows.push_back({s, format_param_count(r.n_params), format_mib(r.weights_mib()),
                      format_mib_grouped(r.activations_mib())});
    }
  }
  return rows;
}

inline std::string table1_text() {
  const auto rows = table1_rows();
  std::ostringstream os;
  os << std::left << std::setw(16) << "spatial" << std::right << std::setw(8) << "layers"
     << std::setw(10) << "features" << std::setw(10) << "params" << std::setw(14)
     << "weights MiB" << std::setw(18) << "activations MiB" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(16) << format_spatial(r.spec.spatial) << std::right
       << std::setw(8) << r.spec.layers << std::setw(10) << r.spec.features << std::setw(10)
       << r.params << std::setw(14) << r.weights_mib << std::setw(18) << r.activations_mib
       << '\n';
  }
  return os.str();
}

// Exact values; spatial is quoted since it contains commas.
inline std::string table1_csv() {
  std::ostringstream os;
  os << "spatial,layers,features,n_params,weights_mib,activations_mib\n";
  for (const auto& r : table1_rows()) {
    const MemoryReport m = memory_report(r.spec);
    os << '"' << format_spatial(r.spec.spatial) << "\"," << r.spec.layers << ','
       << r.spec.features << ',' << m.n_params << ',' << format_mib(m.weights_mib()) << ','
       << format_mib(m.activations_mib()) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Desk-scale measurement

// Forward pass through a stack of linear layers on x: [points, F], saving
// each layer's input on the tape.
template <Real T>
Tensor<T> linear_stack_forward(Tensor<T> x, const std::vector<Tensor<T>>& weights,
                               const std::vector<Tensor<T>>& biases, ActivationTape<T>& tape) {
  if (weights.size() != biases.size()) throw DimensionError("one bias per weight required");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    Tensor<T> z = linear_forward(x, weights[i], biases[i]);
    tape.save(std::move(x));
    x = std::move(z);
  }
  return x;
}

}  // namespace dompar
