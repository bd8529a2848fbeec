/* Copyright 2026 The weft authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef WEFT_TCP_HPP
#define WEFT_TCP_HPP

#include <chrono>
#include <cstdint>
#include <deque>
#include <mutex>
#include <string>
#include <vector>

#include "weft/transport.hpp"

namespace weft {

// Socket-backed transport: one duplex TCP connection per rank pair.
//
// Wire format per message: a 13-byte little-endian header (u8 tag kind,
// u32 source rank, u64 payload length) followed by the payload. For
// large_body messages the first 8 payload bytes are the scatter-gather
// head and the rest the body; other tags carry head bytes only.
//
// Setup is two-phase so tests can use ephemeral ports: the constructor
// binds and listens (port 0 picks a free port, visible via
// listen_port()), and connect_mesh() dials every lower rank while
// accepting every higher one. Ranks identify themselves with a 4-byte
// hello after connecting. Setup blocks; steady state is nonblocking.
//
// isend copies the message into an outgoing queue, so its handle may
// complete as soon as the bytes reach the kernel; poll() moves queued
// bytes out and parses arrived bytes into per-(source, tag) FIFO inboxes.
class TcpTransport final : public Transport {
 public:
  TcpTransport(int rank, int n_ranks, std::uint16_t port = 0);
  ~TcpTransport() override;

  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  std::uint16_t listen_port() const { return listen_port_; }

  // addresses[r] = "host:port" for rank r; blocks until the full mesh is
  // up or the timeout passes (transport_error).
  void connect_mesh(const std::vector<std::string>& addresses,
                    std::chrono::milliseconds timeout =
                        std::chrono::milliseconds(30000));

  int rank() const override { return rank_; }
  int n_ranks() const override { return n_ranks_; }

  using Transport::probe;
  TransferHandle isend(int dest, Tag tag, std::span<const std::byte> head,
                       std::span<const std::byte> body) override;
  std::optional<ProbeResult> probe(
      std::span<const std::pair<int, Tag>> skip) override;
  TransferHandle irecv(int source, Tag tag, std::span<std::byte> head,
                       std::span<std::byte> body) override;
  bool test(TransferHandle h) override;
  void poll() override;

 private:
  struct OutFrame {
    std::vector<std::byte> bytes;
    std::size_t sent = 0;
    std::uint64_t handle = 0;
  };
  struct InMsg {
    std::vector<std::byte> head;
    std::vector<std::byte> body;
  };
  struct Peer {
    int fd = -1;
    std::deque<OutFrame> out;      // producer threads append under mu_
    std::vector<std::byte> stage;  // unparsed inbound bytes; comm thread
  };

  std::size_t channel(int src, Tag tag) const {
    return static_cast<std::size_t>(src) * n_tags +
           static_cast<std::size_t>(tag);
  }
  std::uint64_t new_handle(bool done);
  void enqueue_self(Tag tag, std::span<const std::byte> head,
                    std::span<const std::byte> body);
  void flush_peer(Peer& p, int dest);
  void drain_peer(Peer& p, int source);
  void parse_stage(Peer& p, int source);

  int rank_;
  int n_ranks_;
  int listen_fd_ = -1;
  std::uint16_t listen_port_ = 0;
  bool mesh_up_ = false;
  std::vector<Peer> peers_;
  std::vector<std::deque<InMsg>> inbox_;  // per (source, tag)
  std::size_t probe_cursor_ = 0;
  mutable std::mutex mu_;  // guards out-queues and handle states
  std::vector<char> handle_done_;
};

// Parses lines of "rank host:port" (either order of lines, '#' comments
// and blank lines allowed) into addresses indexed by rank. Every rank in
// [0, n) must appear exactly once.
std::vector<std::string> read_rank_table(const std::string& path);

// The port component of a "host:port" string.
std::uint16_t port_of(const std::string& address);

}  // namespace weft

#endif  // WEFT_TCP_HPP
