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

#include "weft/loopback.hpp"

#include <cstring>
#include <stdexcept>

namespace weft {

LoopbackFabric::LoopbackFabric(int n_ranks, LoopbackConfig cfg)
    : n_ranks_(n_ranks), cfg_(cfg), rng_(cfg.seed) {
  if (n_ranks < 1)
    throw std::invalid_argument("loopback fabric needs at least one rank");
  if (cfg.delay_max < cfg.delay_min)
    throw std::invalid_argument("delay_max below delay_min");
  channels_.resize(static_cast<std::size_t>(n_ranks) * n_ranks * n_tags);
  probe_cursor_.assign(n_ranks, 0);
}

std::uint64_t LoopbackFabric::clock() const {
  std::lock_guard<std::mutex> lk(mu_);
  return clock_;
}

void LoopbackFabric::advance_clock(std::uint64_t ticks) {
  std::lock_guard<std::mutex> lk(mu_);
  clock_ += ticks;
}

std::size_t LoopbackFabric::pending_messages() const {
  std::lock_guard<std::mutex> lk(mu_);
  return pending_;
}

std::vector<LoopbackFabric::Delivery> LoopbackFabric::delivery_log() const {
  std::lock_guard<std::mutex> lk(mu_);
  return log_;
}

std::optional<std::uint64_t> LoopbackFabric::next_ready_clock() const {
  std::lock_guard<std::mutex> lk(mu_);
  std::optional<std::uint64_t> next;
  for (const Channel& ch : channels_) {
    // Only the front matters: delivery is FIFO per channel.
    if (!ch.queue.empty() && ch.queue.front().ready_clock > clock_ &&
        (!next || ch.queue.front().ready_clock < *next))
      next = ch.queue.front().ready_clock;
  }
  return next;
}

std::uint64_t LoopbackFabric::new_handle_locked(bool done) {
  handle_done_.push_back(done);
  return handle_done_.size() - 1;
}

bool LoopbackFabric::handle_done(std::uint64_t id) const {
  std::lock_guard<std::mutex> lk(mu_);
  return handle_done_.at(id);
}

TransferHandle LoopbackFabric::post(int src, int dst, Tag tag,
                                    std::span<const std::byte> head,
                                    std::span<const std::byte> body) {
  std::lock_guard<std::mutex> lk(mu_);
  std::uint64_t delay =
      cfg_.delay_min + rng_() % (cfg_.delay_max - cfg_.delay_min + 1);
  std::uint64_t id = new_handle_locked(false);
  // +1 tick floor: nothing is consumable on the tick it was queued.
  channels_[channel_index(src, dst, tag)].queue.push_back(
      Message{head, body, clock_ + 1 + delay, clock_, id});
  ++pending_;
  return TransferHandle{id};
}

std::optional<ProbeResult> LoopbackFabric::probe_for(
    int dst, std::span<const std::pair<int, Tag>> skip) {
  std::lock_guard<std::mutex> lk(mu_);
  std::size_t combos = static_cast<std::size_t>(n_ranks_) * n_tags;
  for (std::size_t step = 0; step < combos; ++step) {
    std::size_t combo = (probe_cursor_[dst] + step) % combos;
    int src = static_cast<int>(combo / n_tags);
    Tag tag = static_cast<Tag>(combo % n_tags);
    bool skipped = false;
    for (const auto& [s, t] : skip)
      if (s == src && t == tag) {
        skipped = true;
        break;
      }
    if (skipped)
      continue;
    auto& q = channels_[channel_index(src, dst, tag)].queue;
    if (!q.empty() && q.front().ready_clock <= clock_) {
      probe_cursor_[dst] = (combo + 1) % combos;
      return ProbeResult{src, tag, q.front().head.size(),
                         q.front().body.size()};
    }
  }
  return std::nullopt;
}

TransferHandle LoopbackFabric::consume(int dst, int src, Tag tag,
                                       std::span<std::byte> head,
                                       std::span<std::byte> body) {
  std::lock_guard<std::mutex> lk(mu_);
  auto& q = channels_[channel_index(src, dst, tag)].queue;
  if (q.empty() || q.front().ready_clock > clock_)
    throw std::invalid_argument("irecv without a deliverable message");
  Message& m = q.front();
  if (head.size() != m.head.size() || body.size() != m.body.size())
    throw std::invalid_argument("irecv buffer sizes do not match the message");
  if (!m.head.empty())
    std::memcpy(head.data(), m.head.data(), m.head.size());
  if (!m.body.empty())
    std::memcpy(body.data(), m.body.data(), m.body.size());
  handle_done_[m.send_handle] = true;
  if (cfg_.keep_delivery_log)
    log_.push_back(Delivery{src, dst, tag, m.queued_clock, clock_});
  q.pop_front();
  --pending_;
  return TransferHandle{new_handle_locked(true)};
}

LoopbackTransport::LoopbackTransport(LoopbackFabric& fabric, int rank)
    : fabric_(fabric), rank_(rank) {
  if (rank < 0 || rank >= fabric.n_ranks())
    throw std::invalid_argument("rank outside the fabric");
}

TransferHandle LoopbackTransport::isend(int dest, Tag tag,
                                        std::span<const std::byte> head,
                                        std::span<const std::byte> body) {
  if (dest < 0 || dest >= fabric_.n_ranks())
    throw std::invalid_argument("isend destination outside the fabric");
  return fabric_.post(rank_, dest, tag, head, body);
}

std::optional<ProbeResult> LoopbackTransport::probe(
    std::span<const std::pair<int, Tag>> skip) {
  return fabric_.probe_for(rank_, skip);
}

TransferHandle LoopbackTransport::irecv(int source, Tag tag,
                                        std::span<std::byte> head,
                                        std::span<std::byte> body) {
  return fabric_.consume(rank_, source, tag, head, body);
}

bool LoopbackTransport::test(TransferHandle h) {
  return fabric_.handle_done(h.id);
}

void LoopbackTransport::poll() {
  if (fabric_.cfg_.auto_advance)
    fabric_.advance_clock(1);
}

}  // namespace weft

