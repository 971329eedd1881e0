// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <utility>

namespace dompar {

// Live/peak byte counter fed by every tensor buffer allocated while the
// counter is installed on the allocating thread.
class MemoryCounter {
 public:
  void charge(std::int64_t bytes) noexcept {
    const std::int64_t now = live_.fetch_add(bytes) + bytes;
    std::int64_t seen = peak_.load();
    while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
    }
  }

  void release(std::int64_t bytes) noexcept { live_.fetch_sub(bytes); }

  std::int64_t live() const noexcept { return live_.load(); }
  std::int64_t peak() const noexcept { return peak_.load(); }
  void reset_peak() noexcept { peak_.store(live_.load()); }

 private:
  std::atomic<std::int64_t> live_{0};
  std::atomic<std::int64_t> peak_{0};
};

namespace detail {
inline std::shared_ptr<MemoryCounter>& thread_counter() {
  thread_local std::shared_ptr<MemoryCounter> counter;
  return counter;
}
}  // namespace detail

// Installs `counter` for the current thread for the lifetime of the scope.
class CounterScope {
 public:
  explicit CounterScope(std::shared_ptr<MemoryCounter> counter)
      : previous_(std::exchange(detail::thread_counter(), std::move(counter))) {}
  ~CounterScope() { detail::thread_counter() = std::move(previous_); }

  CounterScope(const CounterScope&) = delete;
  CounterScope& operator=(const CounterScope&) = delete;

 private:
  std::shared_ptr<MemoryCounter> previous_;
};

// RAII charge of `bytes` against the counter that was current when the charge
// was created. Copies re-charge against the copying thread's counter, since a
// copy is a fresh allocation.
class TrackedBytes {
 public:
  TrackedBytes() = default;
  explicit TrackedBytes(std::int64_t bytes)
      : counter_(detail::thread_counter()), bytes_(bytes) {
    if (counter_) counter_->charge(bytes_);
  }
  TrackedBytes(const TrackedBytes& other) : TrackedBytes(other.bytes_) {}
  TrackedBytes(TrackedBytes&& other) noexcept
      : counter_(std::move(other.counter_)), bytes_(std::exchange(other.bytes_, 0)) {}
  TrackedBytes& operator=(const TrackedBytes& other) {
    if (this != &other) *this = TrackedBytes(other.bytes_);
    return *this;
  }
  TrackedBytes& operator=(TrackedBytes&& other) noexcept {
    if (this != &other) {
      drop();
      counter_ = std::move(other.counter_);
      bytes_ = std::exchange(other.bytes_, 0);
    }
    return *this;
  }
  ~TrackedBytes() { drop(); }

  std::int64_t bytes() const noexcept { return bytes_; }

 private:
  void drop() noexcept {
    if (counter_) counter_->release(bytes_);
    counter_.reset();
    bytes_ = 0;
  }

  std::shared_ptr<MemoryCounter> counter_;
  std::int64_t bytes_ = 0;
};

}  // namespace dompar
