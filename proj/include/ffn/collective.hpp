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

#include <cstdint>
#include <memory>
#include <span>

#include "ffn/transport.hpp"

namespace ffn {

/// One rank's view of a ring of `size()` workers.
class RingGroup {
 public:
  explicit RingGroup(std::unique_ptr<Transport> transport);

  int rank() const { return transport_->rank(); }
  int size() const { return transport_->size(); }
  Transport& transport() { return *transport_; }
  const Transport& transport() const { return *transport_; }

  /// Monotone per-group sequence number folded into message tags.
  std::uint32_t next_sequence() { return sequence_++; }

 private:
  std::unique_ptr<Transport> transport_;
  std::uint32_t sequence_ = 0;
};

/// Replaces `data` on every rank with the elementwise mean across ranks.
///
/// Reduce-scatter followed by allgather over ceil(n/p)-element chunks
/// (the vector is zero-padded to p chunks), 2(p-1) exchanges in total.
/// Chunk c is accumulated left to right starting at rank c and divided by
/// p on rank c-1, then broadcast, so every rank ends with identical bits.
/// All ranks must pass the same length; a mismatch raises ProtocolError.
template <typename Scalar>
void ring_allreduce(RingGroup& group, std::span<Scalar> data);

}  // namespace ffn
