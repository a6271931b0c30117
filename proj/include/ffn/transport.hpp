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

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace ffn {

struct Message {
  std::uint32_t tag = 0;
  std::vector<std::byte> payload;
};

/// Size of the per-message frame header: u32 tag + u64 length.
inline constexpr std::size_t kFrameHeaderBytes = 12;

struct TransportCounters {
  std::uint64_t messages_sent = 0;
  std::uint64_t payload_bytes_sent = 0;
  std::uint64_t payload_bytes_received = 0;
  std::uint64_t frame_bytes_sent = 0;  // headers + payload
};

/// Ordered point-to-point channels to the two ring neighbours. Only
/// "send to the right" and "receive from the left" are needed by the ring.
class Transport {
 public:
  virtual ~Transport() = default;

  virtual int rank() const = 0;
  virtual int size() const = 0;
  int right() const { return (rank() + 1) % size(); }
  int left() const { return (rank() + size() - 1) % size(); }

  void send_right(std::uint32_t tag, std::span<const std::byte> payload);
  Message recv_left();
  /// Sends to the right while receiving from the left. Transports whose
  /// sends can block override this to overlap the two.
  virtual Message exchange(std::uint32_t tag, std::span<const std::byte> payload);

  const TransportCounters& counters() const noexcept { return counters_; }
  void reset_counters() { counters_ = {}; }

 protected:
  virtual void do_send(std::uint32_t tag, std::span<const std::byte> payload) = 0;
  virtual Message do_recv() = 0;

  TransportCounters counters_;
};

/// Single-producer/single-consumer FIFO between two in-process ranks.
class InprocChannel {
 public:
  void push(Message m);
  /// Blocks until a message arrives; throws TransportError once closed and drained.
  Message pop(int receiver_rank);
  void close(int failed_rank, const std::string& reason);

 private:
  std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<Message> queue_;
  bool closed_ = false;
  int failed_rank_ = -1;
  std::string reason_;
};

/// Shared state for p in-process ranks connected in a ring.
class InprocFabric : public std::enable_shared_from_this<InprocFabric> {
 public:
  static std::shared_ptr<InprocFabric> create(int size);

  int size() const noexcept { return static_cast<int>(channels_.size()); }
  std::unique_ptr<Transport> endpoint(int rank);
  /// Closes every channel so blocked peers fail with a TransportError naming `failed_rank`.
  void shutdown(int failed_rank, const std::string& reason);

  InprocChannel& channel_from(int rank) { return *channels_[static_cast<std::size_t>(rank)]; }

 private:
  explicit InprocFabric(int size);
  std::vector<std::unique_ptr<InprocChannel>> channels_;  // channels_[r]: r -> r+1
};

struct TcpEndpoint {
  std::string host;
  std::uint16_t port = 0;
};

std::vector<TcpEndpoint> parse_endpoints(const std::string& comma_separated);

/// Ring over TCP: listens on hosts[rank], connects to hosts[rank + 1] and
/// accepts hosts[rank - 1]. Frames are u32 tag | u64 length | payload.
class TcpTransport : public Transport {
 public:
  TcpTransport(int rank, std::vector<TcpEndpoint> hosts,
               std::chrono::milliseconds connect_timeout = std::chrono::seconds(30));
  ~TcpTransport() override;
  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  int rank() const override { return rank_; }
  int size() const override { return static_cast<int>(hosts_.size()); }
  Message exchange(std::uint32_t tag, std::span<const std::byte> payload) override;

 protected:
  void do_send(std::uint32_t tag, std::span<const std::byte> payload) override;
  Message do_recv() override;

 private:
  int rank_;
  std::vector<TcpEndpoint> hosts_;
  int listen_fd_ = -1;
  int right_fd_ = -1;
  int left_fd_ = -1;
};

}  // namespace ffn
