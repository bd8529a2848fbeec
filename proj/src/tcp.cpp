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

#include "weft/tcp.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "weft/codec.hpp"

namespace weft {

namespace {

constexpr std::size_t header_bytes = 13;  // u8 tag + u32 source + u64 length
constexpr std::size_t frame_limit = std::size_t{1} << 31;
constexpr std::size_t body_head_bytes = 8;

[[noreturn]] void die(const std::string& what) {
  throw transport_error(what + ": " + std::strerror(errno));
}

void set_nonblocking(int fd) {
  int flags = fcntl(fd, F_GETFL, 0);
  if (flags < 0 || fcntl(fd, F_SETFL, flags | O_NONBLOCK) < 0)
    die("fcntl");
}

void set_nodelay(int fd) {
  int one = 1;
  // Small protocol frames must not sit in Nagle buffers.
  if (setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one) < 0)
    die("setsockopt TCP_NODELAY");
}

void write_fully(int fd, const void* data, std::size_t len) {
  const char* p = static_cast<const char*>(data);
  while (len > 0) {
    ssize_t n = send(fd, p, len, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR)
        continue;
      die("send");
    }
    p += n;
    len -= static_cast<std::size_t>(n);
  }
}

void read_fully(int fd, void* data, std::size_t len,
                std::chrono::steady_clock::time_point deadline) {
  char* p = static_cast<char*>(data);
  while (len > 0) {
    if (std::chrono::steady_clock::now() > deadline)
      throw transport_error("timed out reading from a peer during setup");
    ssize_t n = recv(fd, p, len, 0);
    if (n == 0)
      throw transport_error("peer closed the connection during setup");
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN || errno == EWOULDBLOCK)
        continue;
      die("recv");
    }
    p += n;
    len -= static_cast<std::size_t>(n);
  }
}

std::pair<std::string, std::uint16_t> split_address(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size())
    throw transport_error("address is not host:port: " + addr);
  int port = std::stoi(addr.substr(colon + 1));
  if (port < 0 || port > 65535)
    throw transport_error("port out of range in " + addr);
  return {addr.substr(0, colon), static_cast<std::uint16_t>(port)};
}

int connect_with_retry(const std::string& host, std::uint16_t port,
                       std::chrono::steady_clock::time_point deadline) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  std::string service = std::to_string(port);
  int rc = getaddrinfo(host.c_str(), service.c_str(), &hints, &res);
  if (rc != 0)
    throw transport_error("cannot resolve " + host + ": " +
                          gai_strerror(rc));

  while (true) {
    int fd = socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) {
      freeaddrinfo(res);
      die("socket");
    }
    if (connect(fd, res->ai_addr, res->ai_addrlen) == 0) {
      freeaddrinfo(res);
      return fd;
    }
    close(fd);
    if (std::chrono::steady_clock::now() > deadline) {
      freeaddrinfo(res);
      throw transport_error("timed out connecting to " + host + ":" +
                            service);
    }
    // The peer may simply not be listening yet.
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

}  // namespace

TcpTransport::TcpTransport(int rank, int n_ranks, std::uint16_t port)
    : rank_(rank), n_ranks_(n_ranks) {
  if (n_ranks < 1 || rank < 0 || rank >= n_ranks)
    throw std::invalid_argument("rank outside the world");
  peers_.resize(n_ranks);
  inbox_.resize(static_cast<std::size_t>(n_ranks) * n_tags);
  if (n_ranks == 1) {
    mesh_up_ = true;  // nothing to dial
    return;
  }

  listen_fd_ = socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0)
    die("socket");
  int one = 1;
  setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(port);
  if (bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0)
    die("bind");
  if (listen(listen_fd_, 128) < 0)
    die("listen");
  socklen_t len = sizeof addr;
  if (getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len) < 0)
    die("getsockname");
  listen_port_ = ntohs(addr.sin_port);
}

TcpTransport::~TcpTransport() {
  for (Peer& p : peers_)
    if (p.fd >= 0)
      close(p.fd);
  if (listen_fd_ >= 0)
    close(listen_fd_);
}

void TcpTransport::connect_mesh(const std::vector<std::string>& addresses,
                                std::chrono::milliseconds timeout) {
  if (mesh_up_)
    return;
  if (static_cast<int>(addresses.size()) != n_ranks_)
    throw std::invalid_argument("address table size does not match ranks");
  auto deadline = std::chrono::steady_clock::now() + timeout;

  // Dial every lower rank and introduce ourselves.
  for (int s = 0; s < rank_; ++s) {
    auto [host, port] = split_address(addresses[s]);
    int fd = connect_with_retry(host, port, deadline);
    std::byte hello[4];
    codec::le_store<std::uint32_t>(hello, static_cast<std::uint32_t>(rank_));
    write_fully(fd, hello, sizeof hello);
    set_nodelay(fd);
    set_nonblocking(fd);
    peers_[s].fd = fd;
  }

  // Higher ranks dial us.
  for (int remaining = n_ranks_ - 1 - rank_; remaining > 0; --remaining) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0 || ::poll(&pfd, 1, static_cast<int>(left.count())) <= 0)
      throw transport_error("timed out waiting for higher ranks to connect");
    int fd = accept(listen_fd_, nullptr, nullptr);
    if (fd < 0)
      die("accept");
    std::byte hello[4];
    read_fully(fd, hello, sizeof hello, deadline);
    int who = static_cast<int>(codec::le_load<std::uint32_t>(hello));
    if (who <= rank_ || who >= n_ranks_ || peers_[who].fd >= 0) {
      close(fd);
      throw transport_error("unexpected hello from rank " +
                            std::to_string(who));
    }
    set_nodelay(fd);
    set_nonblocking(fd);
    peers_[who].fd = fd;
  }

  close(listen_fd_);
  listen_fd_ = -1;
  mesh_up_ = true;
}

std::uint64_t TcpTransport::new_handle(bool done) {
  handle_done_.push_back(done ? 1 : 0);
  return handle_done_.size() - 1;
}

void TcpTransport::enqueue_self(Tag tag, std::span<const std::byte> head,
                                std::span<const std::byte> body) {
  InMsg m;
  m.head.assign(head.begin(), head.end());
  m.body.assign(body.begin(), body.end());
  inbox_[channel(rank_, tag)].push_back(std::move(m));
}

TransferHandle TcpTransport::isend(int dest, Tag tag,
                                   std::span<const std::byte> head,
                                   std::span<const std::byte> body) {
  if (dest < 0 || dest >= n_ranks_)
    throw std::invalid_argument("isend destination outside the world");
  if (!mesh_up_)
    throw transport_error("isend before connect_mesh");
  std::uint64_t len = head.size() + body.size();
  if (len >= frame_limit)
    throw std::invalid_argument("frame exceeds the 2 GiB transfer limit");

  std::lock_guard<std::mutex> lk(mu_);
  if (dest == rank_) {
    enqueue_self(tag, head, body);
    return TransferHandle{new_handle(true)};
  }
  OutFrame f;
  f.bytes.resize(header_bytes + len);
  f.bytes[0] = static_cast<std::byte>(tag);
  codec::le_store<std::uint32_t>(f.bytes.data() + 1,
                                 static_cast<std::uint32_t>(rank_));
  codec::le_store<std::uint64_t>(f.bytes.data() + 5, len);
  if (!head.empty())
    std::memcpy(f.bytes.data() + header_bytes, head.data(), head.size());
  if (!body.empty())
    std::memcpy(f.bytes.data() + header_bytes + head.size(), body.data(),
                body.size());
  f.handle = new_handle(false);
  peers_[dest].out.push_back(std::move(f));
  return TransferHandle{peers_[dest].out.back().handle};
}

void TcpTransport::flush_peer(Peer& p, int dest) {
  while (!p.out.empty()) {
    OutFrame& f = p.out.front();
    ssize_t n = send(p.fd, f.bytes.data() + f.sent, f.bytes.size() - f.sent,
                     MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR)
        return;
      throw transport_error("rank " + std::to_string(dest) +
                            " became unreachable: " + std::strerror(errno));
    }
    f.sent += static_cast<std::size_t>(n);
    if (f.sent < f.bytes.size())
      return;  // kernel buffer full mid-frame
    handle_done_[f.handle] = 1;
    p.out.pop_front();
  }
}

void TcpTransport::parse_stage(Peer& p, int source) {
  std::size_t off = 0;
  while (p.stage.size() - off >= header_bytes) {
    auto tag_raw = static_cast<std::uint8_t>(p.stage[off]);
    if (tag_raw >= n_tags)
      throw transport_error("corrupt frame tag on the wire");
    Tag tag = static_cast<Tag>(tag_raw);
    auto claimed =
        codec::le_load<std::uint32_t>(p.stage.data() + off + 1);
    if (static_cast<int>(claimed) != source)
      throw transport_error("frame source does not match its connection");
    std::uint64_t len = codec::le_load<std::uint64_t>(p.stage.data() + off + 5);
    if (len >= frame_limit)
      throw transport_error("corrupt frame length on the wire");
    if (p.stage.size() - off - header_bytes < len)
      break;  // wait for the rest

    const std::byte* payload = p.stage.data() + off + header_bytes;
    InMsg m;
    if (tag == Tag::large_body) {
      if (len < body_head_bytes)
        throw transport_error("large-body frame shorter than its prefix");
      m.head.assign(payload, payload + body_head_bytes);
      m.body.assign(payload + body_head_bytes, payload + len);
    } else {
      m.head.assign(payload, payload + len);
    }
    inbox_[channel(source, tag)].push_back(std::move(m));
    off += header_bytes + len;
  }
  if (off > 0)
    p.stage.erase(p.stage.begin(), p.stage.begin() + off);
}

void TcpTransport::drain_peer(Peer& p, int source) {
  std::byte buf[1 << 16];
  while (true) {
    ssize_t n = recv(p.fd, buf, sizeof buf, 0);
    if (n > 0) {
      p.stage.insert(p.stage.end(), buf, buf + n);
      if (static_cast<std::size_t>(n) < sizeof buf)
        break;
      continue;
    }
    if (n == 0) {
      // Clean close; whatever was staged stays deliverable.
      close(p.fd);
      p.fd = -1;
      break;
    }
    if (errno == EAGAIN || errno == EWOULDBLOCK)
      break;
    if (errno == EINTR)
      continue;
    throw transport_error("rank " + std::to_string(source) +
                          " read failed: " + std::strerror(errno));
  }
  parse_stage(p, source);
}

void TcpTransport::poll() {
  std::lock_guard<std::mutex> lk(mu_);
  for (int r = 0; r < n_ranks_; ++r) {
    if (peers_[r].fd < 0)
      continue;
    flush_peer(peers_[r], r);
    drain_peer(peers_[r], r);
  }
}

std::optional<ProbeResult> TcpTransport::probe(
    std::span<const std::pair<int, Tag>> skip) {
  std::lock_guard<std::mutex> lk(mu_);
  std::size_t combos = inbox_.size();
  for (std::size_t step = 0; step < combos; ++step) {
    std::size_t combo = (probe_cursor_ + step) % combos;
    int src = static_cast<int>(combo / n_tags);
    Tag tag = static_cast<Tag>(combo % n_tags);
    bool skipped = false;
    for (const auto& [s, t] : skip)
      if (s == src && t == tag) {
        skipped = true;
        break;
      }
    if (skipped || inbox_[combo].empty())
      continue;
    probe_cursor_ = (combo + 1) % combos;
    const InMsg& m = inbox_[combo].front();
    return ProbeResult{src, tag, m.head.size(), m.body.size()};
  }
  return std::nullopt;
}

TransferHandle TcpTransport::irecv(int source, Tag tag,
                                   std::span<std::byte> head,
                                   std::span<std::byte> body) {
  std::lock_guard<std::mutex> lk(mu_);
  if (source < 0 || source >= n_ranks_)
    throw std::invalid_argument("irecv source outside the world");
  auto& q = inbox_[channel(source, tag)];
  if (q.empty())
    throw std::invalid_argument("irecv without a deliverable message");
  InMsg& m = q.front();
  if (head.size() != m.head.size() || body.size() != m.body.size())
    throw std::invalid_argument("irecv buffer sizes do not match the message");
  if (!m.head.empty())
    std::memcpy(head.data(), m.head.data(), m.head.size());
  if (!m.body.empty())
    std::memcpy(body.data(), m.body.data(), m.body.size());
  q.pop_front();
  return TransferHandle{new_handle(true)};
}

bool TcpTransport::test(TransferHandle h) {
  std::lock_guard<std::mutex> lk(mu_);
  return handle_done_.at(h.id) != 0;
}

std::uint16_t port_of(const std::string& address) {
  return split_address(address).second;
}

std::vector<std::string> read_rank_table(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw transport_error("cannot open rank table " + path);
  std::vector<std::pair<int, std::string>> entries;
  std::string line;
  int max_rank = -1;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos)
      line.resize(hash);
    std::istringstream ls(line);
    int r;
    std::string addr;
    if (!(ls >> r))
      continue;  // blank or comment-only line
    if (!(ls >> addr) || r < 0)
      throw transport_error("bad rank table line: " + line);
    split_address(addr);  // validates the shape
    entries.emplace_back(r, addr);
    max_rank = std::max(max_rank, r);
  }
  if (entries.empty())
    throw transport_error("rank table " + path + " is empty");
  std::vector<std::string> table(max_rank + 1);
  for (auto& [r, addr] : entries) {
    if (!table[r].empty())
      throw transport_error("rank " + std::to_string(r) +
                            " appears twice in the table");
    table[r] = std::move(addr);
  }
  for (int r = 0; r <= max_rank; ++r)
    if (table[r].empty())
      throw transport_error("rank " + std::to_string(r) +
                            " is missing from the table");
  return table;
}

}  // namespace weft
