// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "dompar/tensor.hpp"

namespace dompar {

// Keeps forward activations alive the way a training step would for the
// backward pass. Saved tensors are charged to the current rank's counter.
template <Real T>
class ActivationTape {
 public:
  void save(Tensor<T> t) {
    bytes_ += t.nbytes();
    saved_.push_back(std::move(t));
  }

  std::size_t saved_bytes() const noexcept { return bytes_; }
  std::size_t size() const noexcept { return saved_.size(); }
  const std::vector<Tensor<T>>& saved() const noexcept { return saved_; }

  void clear() {
    saved_.clear();
    bytes_ = 0;
  }

 private:
  std::vector<Tensor<T>> saved_;
  std::size_t bytes_ = 0;
};

}  // namespace dompar
