// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

// Two-layer operation routing. A named operation on ShardTensor arguments is
// looked up in the function, named-function and aten-like registries, in that
// order; a total miss falls back to gather -> dense reference -> re-scatter.
// Every result is promoted to a ShardTensor and a trace record is appended to
// the calling rank's trace buffer.

#pragma once

#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dompar/ops.hpp"
#include "dompar/shard_tensor.hpp"

namespace dompar {

template <Real T>
using Value = std::variant<Tensor<T>, ShardTensor<T>, double, std::int64_t>;

template <Real T>
using Args = std::vector<Value<T>>;

// Plain tensors become fully replicated ShardTensors on the caller's mesh;
// everything else passes through. Idempotent.
template <Real T>
Value<T> promote_result(Value<T> value, RankContext& ctx) {
  if (auto* t = std::get_if<Tensor<T>>(&value)) {
    Placements reps(ctx.mesh().ndim(), Placement::replicate());
    Shape global = t->shape();
    return ShardTensor<T>(ctx, std::move(*t), std::move(global), std::move(reps),
                          ShardingShapes(ctx.mesh().ndim()));
  }
  return value;
}

namespace detail {

template <Real T>
const Value<T>& arg_at(const Args<T>& args, std::size_t i, const char* what) {
  if (i >= args.size()) {
    throw DispatchError("missing argument " + std::to_string(i) + " (" + what + ")");
  }
  return args[i];
}

}  // namespace detail

// Argument accessors for handlers and dense references.
template <Real T>
const Tensor<T>& tensor_arg(const Args<T>& args, std::size_t i) {
  const auto& v = detail::arg_at(args, i, "tensor");
  if (const auto* t = std::get_if<Tensor<T>>(&v)) return *t;
  if (const auto* s = std::get_if<ShardTensor<T>>(&v)) {
    if (s->is_replicated()) return s->local();
  }
  throw DispatchError("argument " + std::to_string(i) + " is not a dense tensor");
}

template <Real T>
const ShardTensor<T>& shard_arg(const Args<T>& args, std::size_t i) {
  const auto& v = detail::arg_at(args, i, "ShardTensor");
  if (const auto* s = std::get_if<ShardTensor<T>>(&v)) return *s;
  throw DispatchError("argument " + std::to_string(i) + " is not a ShardTensor");
}

template <Real T>
std::int64_t int_arg(const Args<T>& args, std::size_t i) {
  const auto& v = detail::arg_at(args, i, "integer");
  if (const auto* n = std::get_if<std::int64_t>(&v)) return *n;
  throw DispatchError("argument " + std::to_string(i) + " is not an integer");
}

template <Real T>
double real_arg(const Args<T>& args, std::size_t i) {
  const auto& v = detail::arg_at(args, i, "real");
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* n = std::get_if<std::int64_t>(&v)) return static_cast<double>(*n);
  throw DispatchError("argument " + std::to_string(i) + " is not a scalar");
}

template <Real T>
bool is_scalar_arg(const Args<T>& args, std::size_t i) {
  return i < args.size() && (std::holds_alternative<double>(args[i]) ||
                             std::holds_alternative<std::int64_t>(args[i]));
}

template <Real T>
class Dispatcher {
 public:
  using Handler = std::function<Value<T>(const Args<T>&)>;
  // Receives the arguments with every ShardTensor replaced by its full tensor.
  using DenseOp = std::function<Tensor<T>(const Args<T>&)>;

  // Installs `handler` for (level, name); returns the handler it replaced.
  std::optional<Handler> register_handler(RegistryLevel level, const std::string& name,
                                          Handler handler) {
    if (name.empty()) throw DispatchError("operation name must be non-empty");
    auto& reg = registry(level);
    std::optional<Handler> previous;
    if (auto it = reg.find(name); it != reg.end()) previous = std::move(it->second);
    reg[name] = std::move(handler);
    return previous;
  }

  // Removes (level, name); returns the removed handler.
  std::optional<Handler> unregister_handler(RegistryLevel level, const std::string& name) {
    auto& reg = registry(level);
    auto it = reg.find(name);
    if (it == reg.end()) return std::nullopt;
    std::optional<Handler> h = std::move(it->second);
    reg.erase(it);
    return h;
  }

  void register_dense(const std::string& name, DenseOp op) { dense_[name] = std::move(op); }
  bool has_dense(const std::string& name) const { return dense_.count(name) != 0; }

  bool has_handler(RegistryLevel level, const std::string& name) const {
    const auto& reg = const_cast<Dispatcher*>(this)->registry(level);
    return reg.count(name) != 0;
  }

  // Re-validates ShardTensor metadata after every dispatch.
  void set_validate_results(bool on) { validate_results_ = on; }
  // Hash-compares Replicate-axis locals after every dispatch (collective).
  void set_check_replication(bool on) { check_replication_ = on; }

  Value<T> dispatch(const std::string& name, const Args<T>& args) const {
    RankContext* ctx = context_of(args);
    if (!ctx) throw DispatchError("dispatch of '" + name + "' needs a ShardTensor argument");
    const std::size_t before = ctx->stats().total();

    RegistryLevel level = RegistryLevel::kFallback;
    const Handler* handler = nullptr;
    for (RegistryLevel l :
         {RegistryLevel::kFunction, RegistryLevel::kNamedFunction, RegistryLevel::kAtenLike}) {
      const auto& reg = const_cast<Dispatcher*>(this)->registry(l);
      if (auto it = reg.find(name); it != reg.end()) {
        level = l;
        handler = &it->second;
        break;
      }
    }

    Value<T> result = [&]() -> Value<T> {
      try {
        return handler ? (*handler)(args) : fallback(name, args);
      } catch (const DispatchError&) {
        throw;
      } catch (const std::exception& e) {
        std::throw_with_nested(DispatchError("op '" + name + "' failed: " + e.what()));
      }
    }();
    result = promote_result(std::move(result), *ctx);
    ctx->trace().push({name, level, ctx->stats().total() - before});

    if (const auto* st = std::get_if<ShardTensor<T>>(&result)) {
      if (validate_results_) st->validate();
      if (check_replication_ && !check_replication(*st)) {
        throw IntegrityError("op '" + name + "' produced incoherent replicated shards");
      }
    }
    return result;
  }

  // Gathers every ShardTensor argument, applies the dense reference, and
  // re-shards the output with default_chunk along the first ShardTensor
  // argument's sharded dims. Scalar-only calls run the dense op directly.
  Value<T> fallback(const std::string& name, const Args<T>& args) const {
    auto it = dense_.find(name);
    if (it == dense_.end()) {
      throw DispatchError("unsupported operation '" + name +
                          "': no registered handler and no dense reference");
    }
    const ShardTensor<T>* reference = nullptr;
    Args<T> gathered;
    gathered.reserve(args.size());
    for (const auto& a : args) {
      if (const auto* st = std::get_if<ShardTensor<T>>(&a)) {
        if (!reference) reference = st;
        gathered.emplace_back(full_tensor(*st));
      } else {
        gathered.push_back(a);
      }
    }
    Tensor<T> out = it->second(gathered);
    if (!reference) return out;

    Placements placements = reference->placements();
    for (auto& p : placements)
      if (p.is_shard() && p.dim() >= out.ndim()) p = Placement::replicate();
    return shard_replicated(reference->ctx(), out, std::move(placements));
  }

 private:
  using Registry = std::map<std::string, Handler>;

  Registry& registry(RegistryLevel level) {
    switch (level) {
      case RegistryLevel::kFunction:
        return function_;
      case RegistryLevel::kNamedFunction:
        return named_function_;
      case RegistryLevel::kAtenLike:
        return aten_like_;
      case RegistryLevel::kFallback:
        break;
    }
    throw DispatchError("the fallback path is not a registry");
  }

  static RankContext* context_of(const Args<T>& args) {
    for (const auto& a : args)
      if (const auto* st = std::get_if<ShardTensor<T>>(&a)) return &st->ctx();
    return nullptr;
  }

  Registry function_;
  Registry named_function_;
  Registry aten_like_;
  std::map<std::string, DenseOp> dense_;
  bool validate_results_ = true;
  bool check_replication_ = false;
};

// Dense references for the core kernels, keyed by operation name.
//   add/mul (a, b|scalar)   scale (a, s)      relu/gelu (a)
//   matmul (a, b)           transpose (a)     linear (x, W, bias)
//   conv (x, w, stride, padding)              softmax (x, dim)
//   layer_norm (x, dim, eps)                  attention (q, k, v[, heads])
template <Real T>
void register_dense_reference_ops(Dispatcher<T>& d) {
  auto binary = [](ElementwiseOp op) {
    return [op](const Args<T>& a) {
      return is_scalar_arg(a, 1) ? elementwise(op, tensor_arg(a, 0), real_arg(a, 1))
                                 : elementwise(op, tensor_arg(a, 0), tensor_arg(a, 1));
    };
  };
  d.register_dense("add", binary(ElementwiseOp::kAdd));
  d.register_dense("mul", binary(ElementwiseOp::kMul));
  d.register_dense("scale", [](const Args<T>& a) { return scale(tensor_arg(a, 0), real_arg(a, 1)); });
  d.register_dense("relu", [](const Args<T>& a) { return unary(UnaryOp::kRelu, tensor_arg(a, 0)); });
  d.register_dense("gelu", [](const Args<T>& a) { return unary(UnaryOp::kGelu, tensor_arg(a, 0)); });
  d.register_dense("matmul", [](const Args<T>& a) { return matmul(tensor_arg(a, 0), tensor_arg(a, 1)); });
  d.register_dense("transpose", [](const Args<T>& a) { return transpose(tensor_arg(a, 0)); });
  d.register_dense("linear", [](const Args<T>& a) {
    return linear_forward(tensor_arg(a, 0), tensor_arg(a, 1), tensor_arg(a, 2));
  });
  d.register_dense("conv", [](const Args<T>& a) {
    return conv(tensor_arg(a, 0), tensor_arg(a, 1), static_cast<std::size_t>(int_arg(a, 2)),
                static_cast<std::size_t>(int_arg(a, 3)));
  });
  d.register_dense("softmax", [](const Args<T>& a) {
    return softmax(tensor_arg(a, 0), static_cast<std::size_t>(int_arg(a, 1)));
  });
  d.register_dense("layer_norm", [](const Args<T>& a) {
    return layer_norm(tensor_arg(a, 0), static_cast<std::size_t>(int_arg(a, 1)), real_arg(a, 2));
  });
  d.register_dense("attention", [](const Args<T>& a) {
    const std::size_t heads = a.size() > 3 ? static_cast<std::size_t>(int_arg(a, 3)) : 1;
    return multi_head_attention(tensor_arg(a, 0), tensor_arg(a, 1), tensor_arg(a, 2), heads);
  });
}

}  // namespace dompar
