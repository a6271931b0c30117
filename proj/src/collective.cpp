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

#include "ffn/collective.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#include "ffn/error.hpp"

namespace ffn {

RingGroup::RingGroup(std::unique_ptr<Transport> transport) : transport_(std::move(transport)) {
  if (!transport_) throw ValueError("RingGroup: null transport");
}

namespace {

// Tag layout: bit 31 phase, bits 24..30 sequence, bits 0..23 vector length.
std::uint32_t make_tag(bool gather, std::uint32_t sequence, std::size_t n) {
  return (gather ? 0x80000000u : 0u) | ((sequence & 0x7fu) << 24) | static_cast<std::uint32_t>(n & 0xffffffu);
}

std::size_t mod(long long a, int p) { return static_cast<std::size_t>(((a % p) + p) % p); }

}  // namespace

template <typename Scalar>
void ring_allreduce(RingGroup& group, std::span<Scalar> data) {
  if (data.empty()) throw ValueError("ring_allreduce: empty vector");
  const int p = group.size();
  const int r = group.rank();
  if (p == 1) return;

  const std::size_t n = data.size();
  const std::size_t chunk = (n + static_cast<std::size_t>(p) - 1) / static_cast<std::size_t>(p);
  const std::size_t chunk_bytes = chunk * sizeof(Scalar);
  std::vector<Scalar> buf(chunk * static_cast<std::size_t>(p), Scalar(0));
  std::copy(data.begin(), data.end(), buf.begin());

  const std::uint32_t seq = group.next_sequence();
  Transport& t = group.transport();
  auto chunk_ptr = [&](std::size_t c) { return buf.data() + c * chunk; };
  auto bytes_of = [&](std::size_t c) {
    return std::span<const std::byte>(reinterpret_cast<const std::byte*>(chunk_ptr(c)), chunk_bytes);
  };
  auto check = [&](const Message& m, bool gather) {
    if (m.tag != make_tag(gather, seq, n) || m.payload.size() != chunk_bytes) {
      throw ProtocolError("ring_allreduce: rank " + std::to_string(r) + " received a mismatched frame from rank " +
                          std::to_string(t.left()) + " (vector lengths differ across ranks?)");
    }
  };

  for (int s = 0; s < p - 1; ++s) {
    const std::size_t send_c = mod(r - s, p);
    const std::size_t recv_c = mod(r - s - 1, p);
    const Message m = t.exchange(make_tag(false, seq, n), bytes_of(send_c));
    check(m, false);
    const auto* incoming = reinterpret_cast<const Scalar*>(m.payload.data());
    Scalar* mine = chunk_ptr(recv_c);
    for (std::size_t i = 0; i < chunk; ++i) mine[i] = incoming[i] + mine[i];
  }

  const std::size_t owned = mod(r + 1, p);
  const auto divisor = static_cast<Scalar>(p);
  for (std::size_t i = 0; i < chunk; ++i) chunk_ptr(owned)[i] /= divisor;

  for (int s = 0; s < p - 1; ++s) {
    const std::size_t send_c = mod(r + 1 - s, p);
    const std::size_t recv_c = mod(r - s, p);
    const Message m = t.exchange(make_tag(true, seq, n), bytes_of(send_c));
    check(m, true);
    std::memcpy(chunk_ptr(recv_c), m.payload.data(), chunk_bytes);
  }

  std::copy(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(n), data.begin());
}

template void ring_allreduce(RingGroup&, std::span<float>);
template void ring_allreduce(RingGroup&, std::span<double>);

}  // namespace ffn
