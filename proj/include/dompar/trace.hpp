// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <sstream>
#include <string>
#include <vector>

namespace dompar {

// Where a dispatched operation was resolved.
enum class RegistryLevel { kFunction, kNamedFunction, kAtenLike, kFallback };

constexpr const char* to_string(RegistryLevel level) {
  switch (level) {
    case RegistryLevel::kFunction:
      return "function";
    case RegistryLevel::kNamedFunction:
      return "named_function";
    case RegistryLevel::kAtenLike:
      return "aten_like";
    case RegistryLevel::kFallback:
      return "fallback";
  }
  return "?";
}

struct TraceRecord {
  std::string op;
  RegistryLevel level = RegistryLevel::kFallback;
  std::size_t collectives = 0;

  // `op=<name> level=<hit|fallback> collectives=<count>`
  std::string to_line() const {
    std::ostringstream os;
    os << "op=" << op << " level=" << (level == RegistryLevel::kFallback ? "fallback" : "hit")
       << " collectives=" << collectives;
    return os.str();
  }
};

// Bounded per-rank ring buffer of dispatch records; oldest entries drop first.
class TraceBuffer {
 public:
  static constexpr std::size_t kDefaultCapacity = 1024;

  explicit TraceBuffer(std::size_t capacity = kDefaultCapacity) : capacity_(capacity) {}

  void push(TraceRecord record) {
    if (capacity_ == 0) return;
    if (records_.size() == capacity_) records_.pop_front();
    records_.push_back(std::move(record));
  }

  const std::deque<TraceRecord>& records() const noexcept { return records_; }
  const TraceRecord& back() const { return records_.back(); }
  bool empty() const noexcept { return records_.empty(); }
  std::size_t size() const noexcept { return records_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  void clear() { records_.clear(); }

  std::string dump() const {
    std::string out;
    for (const auto& r : records_) out += r.to_line() + "\n";
    return out;
  }

 private:
  std::size_t capacity_;
  std::deque<TraceRecord> records_;
};

}  // namespace dompar
