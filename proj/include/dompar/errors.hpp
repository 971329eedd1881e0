// SPDX-FileCopyrightText: © 2026 The dompar Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dompar {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand extents disagree (matmul inner dims, elementwise shapes, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An operation would produce an invalid shape (e.g. non-positive conv output).
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Configuration the library deliberately does not support.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Placement / sharding-shape metadata is invalid.
class MetadataError : public Error {
 public:
  using Error::Error;
};

// A ShardTensor's local data disagrees with its own metadata.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class CollectiveError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public CollectiveError {
 public:
  using CollectiveError::CollectiveError;
};

class HaloError : public CollectiveError {
 public:
  using CollectiveError::CollectiveError;
};

// Raised inside healthy ranks when a peer has already failed.
class PeerAborted : public CollectiveError {
 public:
  using CollectiveError::CollectiveError;
};

class DispatchError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

// Aggregate failure of a spawned mesh; names the first rank whose body failed.
class MeshError : public Error {
 public:
  MeshError(std::size_t failing_rank, const std::string& what)
      : Error(what), failing_rank_(failing_rank) {}

  std::size_t failing_rank() const noexcept { return failing_rank_; }

 private:
  std::size_t failing_rank_;
};

}  // namespace dompar
