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

#include "ffn/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <exception>
#include <thread>

#include "ffn/error.hpp"

namespace ffn {

void Transport::send_right(std::uint32_t tag, std::span<const std::byte> payload) {
  do_send(tag, payload);
  counters_.messages_sent += 1;
  counters_.payload_bytes_sent += payload.size();
  counters_.frame_bytes_sent += payload.size() + kFrameHeaderBytes;
}

Message Transport::recv_left() {
  Message m = do_recv();
  counters_.payload_bytes_received += m.payload.size();
  return m;
}

Message Transport::exchange(std::uint32_t tag, std::span<const std::byte> payload) {
  send_right(tag, payload);
  return recv_left();
}

// ---------------------------------------------------------------------------
// In-process

void InprocChannel::push(Message m) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    queue_.push_back(std::move(m));
  }
  ready_.notify_one();
}

Message InprocChannel::pop(int receiver_rank) {
  std::unique_lock lock(mutex_);
  ready_.wait(lock, [&] { return !queue_.empty() || closed_; });
  if (queue_.empty()) {
    throw TransportError(failed_rank_, "rank " + std::to_string(receiver_rank) + ": channel closed because rank " +
                                           std::to_string(failed_rank_) + " disconnected (" + reason_ + ")");
  }
  Message m = std::move(queue_.front());
  queue_.pop_front();
  return m;
}

void InprocChannel::close(int failed_rank, const std::string& reason) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    closed_ = true;
    failed_rank_ = failed_rank;
    reason_ = reason;
  }
  ready_.notify_all();
}

namespace {

class InprocTransport : public Transport {
 public:
  InprocTransport(std::shared_ptr<InprocFabric> fabric, int rank) : fabric_(std::move(fabric)), rank_(rank) {}

  int rank() const override { return rank_; }
  int size() const override { return fabric_->size(); }

 protected:
  void do_send(std::uint32_t tag, std::span<const std::byte> payload) override {
    fabric_->channel_from(rank_).push(Message{tag, {payload.begin(), payload.end()}});
  }
  Message do_recv() override { return fabric_->channel_from(left()).pop(rank_); }

 private:
  std::shared_ptr<InprocFabric> fabric_;
  int rank_;
};

}  // namespace

InprocFabric::InprocFabric(int size) {
  if (size < 1) throw ValueError("InprocFabric: size must be >= 1");
  for (int r = 0; r < size; ++r) channels_.push_back(std::make_unique<InprocChannel>());
}

std::shared_ptr<InprocFabric> InprocFabric::create(int size) {
  return std::shared_ptr<InprocFabric>(new InprocFabric(size));
}

std::unique_ptr<Transport> InprocFabric::endpoint(int rank) {
  if (rank < 0 || rank >= size()) throw ValueError("InprocFabric: rank out of range");
  return std::make_unique<InprocTransport>(shared_from_this(), rank);
}

void InprocFabric::shutdown(int failed_rank, const std::string& reason) {
  for (auto& c : channels_) c->close(failed_rank, reason);
}

// ---------------------------------------------------------------------------
// TCP

std::vector<TcpEndpoint> parse_endpoints(const std::string& comma_separated) {
  std::vector<TcpEndpoint> out;
  std::size_t start = 0;
  while (start <= comma_separated.size()) {
    const std::size_t end = std::min(comma_separated.find(',', start), comma_separated.size());
    const std::string item = comma_separated.substr(start, end - start);
    const std::size_t colon = item.rfind(':');
    if (item.empty() || colon == std::string::npos || colon == 0 || colon + 1 == item.size()) {
      throw ValueError("invalid endpoint '" + item + "' (expected host:port)");
    }
    const std::string digits = item.substr(colon + 1);
    int port = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || port <= 0 || port > 65535) throw ValueError("invalid port in '" + item + "'");
    out.push_back({item.substr(0, colon), static_cast<std::uint16_t>(port)});
    start = end + 1;
  }
  return out;
}

namespace {

std::string errno_text() { return std::strerror(errno); }

void write_all(int fd, const void* data, std::size_t n, int peer) {
  const auto* p = static_cast<const char*>(data);
  while (n > 0) {
    const ssize_t k = ::send(fd, p, n, MSG_NOSIGNAL);
    if (k < 0 && errno == EINTR) continue;
    if (k <= 0) throw TransportError(peer, "send to rank " + std::to_string(peer) + " failed: " + errno_text());
    p += k;
    n -= static_cast<std::size_t>(k);
  }
}

void read_all(int fd, void* data, std::size_t n, int peer) {
  auto* p = static_cast<char*>(data);
  while (n > 0) {
    const ssize_t k = ::recv(fd, p, n, 0);
    if (k < 0 && errno == EINTR) continue;
    if (k == 0) throw TransportError(peer, "rank " + std::to_string(peer) + " disconnected");
    if (k < 0) throw TransportError(peer, "recv from rank " + std::to_string(peer) + " failed: " + errno_text());
    p += k;
    n -= static_cast<std::size_t>(k);
  }
}

addrinfo* resolve(const TcpEndpoint& ep, bool passive, int rank) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(ep.port);
  if (::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
    throw TransportError(rank, "cannot resolve " + ep.host + ":" + port);
  }
  return res;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

TcpTransport::TcpTransport(int rank, std::vector<TcpEndpoint> hosts, std::chrono::milliseconds connect_timeout)
    : rank_(rank), hosts_(std::move(hosts)) {
  if (hosts_.empty() || rank_ < 0 || rank_ >= static_cast<int>(hosts_.size())) {
    throw ValueError("TcpTransport: rank " + std::to_string(rank_) + " outside host list");
  }
  const auto deadline = std::chrono::steady_clock::now() + connect_timeout;
  try {
    addrinfo* local = resolve(hosts_[static_cast<std::size_t>(rank_)], true, rank_);
    listen_fd_ = ::socket(local->ai_family, local->ai_socktype, local->ai_protocol);
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    const bool bound = listen_fd_ >= 0 && ::bind(listen_fd_, local->ai_addr, local->ai_addrlen) == 0 &&
                       ::listen(listen_fd_, 4) == 0;
    ::freeaddrinfo(local);
    if (!bound) throw TransportError(rank_, "rank " + std::to_string(rank_) + " cannot listen: " + errno_text());

    addrinfo* remote = resolve(hosts_[static_cast<std::size_t>(right())], false, right());
    while (true) {
      right_fd_ = ::socket(remote->ai_family, remote->ai_socktype, remote->ai_protocol);
      if (right_fd_ >= 0 && ::connect(right_fd_, remote->ai_addr, remote->ai_addrlen) == 0) break;
      if (right_fd_ >= 0) ::close(right_fd_);
      right_fd_ = -1;
      if (std::chrono::steady_clock::now() > deadline) {
        ::freeaddrinfo(remote);
        throw TransportError(right(), "rank " + std::to_string(rank_) + " cannot reach rank " +
                                          std::to_string(right()));
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    ::freeaddrinfo(remote);
    set_nodelay(right_fd_);
    const auto me = static_cast<std::uint32_t>(rank_);
    write_all(right_fd_, &me, sizeof(me), right());

    while (true) {
      const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      pollfd pfd{listen_fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(std::max<std::int64_t>(remaining.count(), 0)));
      if (ready <= 0) {
        throw TransportError(left(), "rank " + std::to_string(rank_) + " timed out waiting for rank " +
                                         std::to_string(left()));
      }
      left_fd_ = ::accept(listen_fd_, nullptr, nullptr);
      if (left_fd_ < 0) continue;
      std::uint32_t peer = 0;
      read_all(left_fd_, &peer, sizeof(peer), left());
      if (static_cast<int>(peer) == left()) break;
      ::close(left_fd_);
      left_fd_ = -1;
    }
    set_nodelay(left_fd_);
  } catch (...) {
    if (listen_fd_ >= 0) ::close(listen_fd_);
    if (right_fd_ >= 0) ::close(right_fd_);
    if (left_fd_ >= 0) ::close(left_fd_);
    throw;
  }
}

TcpTransport::~TcpTransport() {
  for (int fd : {left_fd_, right_fd_, listen_fd_})
    if (fd >= 0) ::close(fd);
}

void TcpTransport::do_send(std::uint32_t tag, std::span<const std::byte> payload) {
  std::byte header[kFrameHeaderBytes];
  const auto len = static_cast<std::uint64_t>(payload.size());
  std::memcpy(header, &tag, 4);
  std::memcpy(header + 4, &len, 8);
  write_all(right_fd_, header, sizeof(header), right());
  write_all(right_fd_, payload.data(), payload.size(), right());
}

Message TcpTransport::do_recv() {
  std::byte header[kFrameHeaderBytes];
  read_all(left_fd_, header, sizeof(header), left());
  Message m;
  std::uint64_t len = 0;
  std::memcpy(&m.tag, header, 4);
  std::memcpy(&len, header + 4, 8);
  if (len > (std::uint64_t(1) << 34)) throw ProtocolError("implausible frame length from rank " + std::to_string(left()));
  m.payload.resize(static_cast<std::size_t>(len));
  read_all(left_fd_, m.payload.data(), m.payload.size(), left());
  return m;
}

Message TcpTransport::exchange(std::uint32_t tag, std::span<const std::byte> payload) {
  // Every rank sends before it receives, so large frames would deadlock on
  // full socket buffers without a concurrent sender.
  std::exception_ptr send_error;
  std::thread sender([&] {
    try {
      send_right(tag, payload);
    } catch (...) {
      send_error = std::current_exception();
    }
  });
  Message m;
  try {
    m = recv_left();
  } catch (...) {
    ::shutdown(right_fd_, SHUT_RDWR);
    sender.join();
    throw;
  }
  sender.join();
  if (send_error) std::rethrow_exception(send_error);
  return m;
}

}  // namespace ffn
