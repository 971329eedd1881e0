// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

// In-process SPMD runtime. Each rank of a DeviceMesh runs the same body on
// its own thread; ranks talk only through per-pair FIFO mailboxes, so the
// collectives built on top are deterministic given the rank programs.

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include "dompar/errors.hpp"
#include "dompar/memory_tracker.hpp"
#include "dompar/trace.hpp"

namespace dompar {

// Ranks sharing every mesh coordinate except `axis`, in coordinate order.
struct AxisGroup {
  std::size_t axis = 0;
  std::string name;
  std::vector<std::size_t> members;

  std::size_t size() const noexcept { return members.size(); }

  std::size_t index_of(std::size_t rank) const {
    const auto it = std::find(members.begin(), members.end(), rank);
    if (it == members.end()) {
      throw MetadataError("rank " + std::to_string(rank) + " is not in group '" + name + "'");
    }
    return static_cast<std::size_t>(it - members.begin());
  }
};

// 1-D or 2-D logical grid of ranks with named axes; rank ids are row-major.
class DeviceMesh {
 public:
  DeviceMesh(std::vector<std::size_t> shape, std::vector<std::string> axis_names)
      : shape_(std::move(shape)), names_(std::move(axis_names)) {
    if (shape_.empty() || shape_.size() > 2) {
      throw MetadataError("mesh must have 1 or 2 axes, got " + std::to_string(shape_.size()));
    }
    if (names_.size() != shape_.size()) {
      throw MetadataError("mesh needs one axis name per dimension");
    }
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (shape_[i] == 0) throw MetadataError("mesh extents must be positive");
      for (std::size_t j = 0; j < i; ++j) {
        if (names_[i] == names_[j]) throw MetadataError("duplicate mesh axis name '" + names_[i] + "'");
      }
    }
  }

  static DeviceMesh line(std::size_t ranks, std::string name = "domain") {
    return DeviceMesh({ranks}, {std::move(name)});
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  const std::vector<std::string>& axis_names() const noexcept { return names_; }
  std::size_t ndim() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::size_t world_size() const noexcept {
    std::size_t n = 1;
    for (auto e : shape_) n *= e;
    return n;
  }

  std::size_t axis_index(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    throw MetadataError("mesh has no axis named '" + std::string(name) + "'");
  }

  std::vector<std::size_t> coords_of(std::size_t rank) const {
    if (rank >= world_size()) throw MetadataError("rank " + std::to_string(rank) + " out of range");
    std::vector<std::size_t> c(shape_.size());
    for (std::size_t i = shape_.size(); i-- > 0;) {
      c[i] = rank % shape_[i];
      rank /= shape_[i];
    }
    return c;
  }

  std::size_t rank_of(const std::vector<std::size_t>& coords) const {
    if (coords.size() != shape_.size()) throw MetadataError("coordinate rank mismatch");
    std::size_t r = 0;
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (coords[i] >= shape_[i]) throw MetadataError("coordinate out of range");
      r = r * shape_[i] + coords[i];
    }
    return r;
  }

  AxisGroup group(std::size_t rank, std::size_t axis) const {
    if (axis >= shape_.size()) throw MetadataError("mesh axis " + std::to_string(axis) + " out of range");
    AxisGroup g{axis, names_[axis], {}};
    auto c = coords_of(rank);
    for (std::size_t i = 0; i < shape_[axis]; ++i) {
      c[axis] = i;
      g.members.push_back(rank_of(c));
    }
    return g;
  }

  bool operator==(const DeviceMesh&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<std::string> names_;
};

enum class CollectiveKind : std::size_t {
  kAllReduce,
  kAllGather,
  kBroadcast,
  kScatter,
  kRingShift,
  kHaloExchange,
  kBarrier,
  kCount
};

class CollectiveStats {
 public:
  void record(CollectiveKind kind) noexcept { ++counts_[static_cast<std::size_t>(kind)]; }
  std::size_t count(CollectiveKind kind) const noexcept {
    return counts_[static_cast<std::size_t>(kind)];
  }
  std::size_t total() const noexcept {
    std::size_t n = 0;
    for (auto c : counts_) n += c;
    return n;
  }

 private:
  std::array<std::size_t, static_cast<std::size_t>(CollectiveKind::kCount)> counts_{};
};

struct Message {
  std::vector<std::uint64_t> header;
  std::vector<std::byte> payload;
};

// DP_COLLECTIVE_TIMEOUT_SECS, default 30 s.
inline std::chrono::milliseconds collective_timeout_from_env() {
  if (const char* env = std::getenv("DP_COLLECTIVE_TIMEOUT_SECS")) {
    char* end = nullptr;
    const double secs = std::strtod(env, &end);
    if (end != env && secs > 0) {
      return std::chrono::milliseconds(static_cast<std::int64_t>(secs * 1000.0));
    }
  }
  return std::chrono::seconds(30);
}

struct MeshOptions {
  std::uint64_t seed = 42;
  std::chrono::milliseconds timeout = collective_timeout_from_env();
};

namespace detail {

class World {
 public:
  World(std::size_t n, std::chrono::milliseconds timeout) : n_(n), timeout_(timeout) {
    boxes_.reserve(n * n);
    for (std::size_t i = 0; i < n * n; ++i) boxes_.push_back(std::make_unique<Mailbox>());
  }

  void post(std::size_t src, std::size_t dst, Message m) {
    Mailbox& box = *boxes_[src * n_ + dst];
    {
      std::lock_guard lock(box.mu);
      box.queue.push_back(std::move(m));
    }
    box.cv.notify_one();
  }

  Message take(std::size_t src, std::size_t dst) {
    Mailbox& box = *boxes_[src * n_ + dst];
    std::unique_lock lock(box.mu);
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    while (box.queue.empty()) {
      if (aborted_) throw PeerAborted("rank " + std::to_string(dst) + ": peer failure, aborting");
      if (box.cv.wait_until(lock, deadline) == std::cv_status::timeout && box.queue.empty()) {
        if (aborted_) throw PeerAborted("rank " + std::to_string(dst) + ": peer failure, aborting");
        std::ostringstream os;
        os << "rank " << dst << ": collective timed out after " << timeout_.count()
           << " ms waiting for rank " << src;
        throw TimeoutError(os.str());
      }
    }
    Message m = std::move(box.queue.front());
    box.queue.pop_front();
    return m;
  }

  void abort() {
    aborted_ = true;
    for (auto& box : boxes_) {
      std::lock_guard lock(box->mu);
      box->cv.notify_all();
    }
  }

  std::chrono::milliseconds timeout() const noexcept { return timeout_; }

 private:
  struct Mailbox {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Message> queue;
  };

  std::size_t n_;
  std::chrono::milliseconds timeout_;
  std::vector<std::unique_ptr<Mailbox>> boxes_;
  std::atomic<bool> aborted_{false};
};

}  // namespace detail

// One rank's view of a running mesh: identity, message endpoints, RNG, and
// per-rank instrumentation (collective counts, dispatch trace, memory).
class RankContext {
 public:
  RankContext(const DeviceMesh& mesh, std::size_t rank, detail::World& world, std::uint64_t seed,
              std::shared_ptr<MemoryCounter> memory)
      : mesh_(&mesh),
        rank_(rank),
        coords_(mesh.coords_of(rank)),
        world_(&world),
        seed_(seed),
        memory_(std::move(memory)) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(rank)};
    rng_.seed(seq);
  }

  RankContext(const RankContext&) = delete;
  RankContext& operator=(const RankContext&) = delete;

  std::size_t rank() const noexcept { return rank_; }
  const std::vector<std::size_t>& coords() const noexcept { return coords_; }
  const DeviceMesh& mesh() const noexcept { return *mesh_; }
  std::size_t world_size() const noexcept { return mesh_->world_size(); }

  AxisGroup group(std::size_t axis) const { return mesh_->group(rank_, axis); }
  AxisGroup group(std::string_view axis) const { return group(mesh_->axis_index(axis)); }

  void send(std::size_t dst, Message m) { world_->post(rank_, dst, std::move(m)); }
  Message recv(std::size_t src) { return world_->take(src, rank_); }

  std::uint64_t seed() const noexcept { return seed_; }
  std::mt19937_64& rng() noexcept { return rng_; }
  std::chrono::milliseconds timeout() const noexcept { return world_->timeout(); }

  CollectiveStats& stats() noexcept { return stats_; }
  TraceBuffer& trace() noexcept { return trace_; }
  MemoryCounter& memory() noexcept { return *memory_; }

 private:
  const DeviceMesh* mesh_;
  std::size_t rank_;
  std::vector<std::size_t> coords_;
  detail::World* world_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::shared_ptr<MemoryCounter> memory_;
  CollectiveStats stats_;
  TraceBuffer trace_;
};

// Runs `body(RankContext&)` once per rank concurrently and returns the
// results ordered by rank id. If any rank throws, every peer is unwound and a
// MeshError naming the lowest failing rank is raised.
template <typename F>
auto spawn_mesh(const DeviceMesh& mesh, F&& body, MeshOptions options = {}) {
  using R = std::invoke_result_t<F&, RankContext&>;
  const std::size_t n = mesh.world_size();
  detail::World world(n, options.timeout);

  using Slot = std::conditional_t<std::is_void_v<R>, char, std::optional<R>>;
  std::vector<Slot> results(n);
  std::vector<std::exception_ptr> failures(n);
  std::vector<char> aborted(n, 0);

  {
    std::vector<std::jthread> threads;
    threads.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
      threads.emplace_back([&, r] {
        auto counter = std::make_shared<MemoryCounter>();
        CounterScope scope(counter);
        try {
          RankContext ctx(mesh, r, world, options.seed, counter);
          if constexpr (std::is_void_v<R>) {
            body(ctx);
            results[r] = 1;
          } else {
            results[r].emplace(body(ctx));
          }
        } catch (const PeerAborted&) {
          aborted[r] = 1;
        } catch (...) {
          failures[r] = std::current_exception();
          world.abort();
        }
      });
    }
  }

  std::optional<std::size_t> first;
  std::ostringstream os;
  for (std::size_t r = 0; r < n; ++r) {
    if (!failures[r]) continue;
    if (!first) first = r;
    try {
      std::rethrow_exception(failures[r]);
    } catch (const std::exception& e) {
      os << (first == r ? "" : "; ") << "rank " << r << " failed: " << e.what();
    } catch (...) {
      os << (first == r ? "" : "; ") << "rank " << r << " failed: unknown exception";
    }
  }
  if (first) throw MeshError(*first, os.str());

  if constexpr (!std::is_void_v<R>) {
    std::vector<R> out;
    out.reserve(n);
    for (auto& slot : results) out.push_back(std::move(*slot));
    return out;
  }
}

}  // namespace dompar
