// Copyright 2026 The ffnsync Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace ffn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or volume extents that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument values (thresholds, labels out of range, bad configs).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk file. `kind()` tells the failure class apart.
class FormatError : public Error {
 public:
  enum class Kind { kBadMagic, kVersion, kTruncated, kDtype, kShapeMismatch, kIo };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Ranks disagree about the collective being executed.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// A channel to a ring neighbour failed or was closed.
class TransportError : public Error {
 public:
  TransportError(int rank, const std::string& what) : Error(what), rank_(rank) {}
  int rank() const noexcept { return rank_; }

 private:
  int rank_;
};

/// A training worker failed; `rank()` identifies it.
class WorkerError : public Error {
 public:
  WorkerError(int rank, const std::string& what, bool transport = false)
      : Error(what), rank_(rank), transport_(transport) {}
  int rank() const noexcept { return rank_; }
  /// True when the root cause was a transport failure.
  bool transport() const noexcept { return transport_; }

 private:
  int rank_;
  bool transport_;
};

/// Replicas diverged during synchronous training.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace ffn
