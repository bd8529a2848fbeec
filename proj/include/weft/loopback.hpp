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

#ifndef WEFT_LOOPBACK_HPP
#define WEFT_LOOPBACK_HPP

#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <random>
#include <vector>

#include "weft/transport.hpp"

namespace weft {

// In-process fabric connecting n_ranks loopback endpoints. Delivery is
// delayed by a seeded random number of logical-clock ticks per message
// (at least one tick, so a message is never consumable at the instant it
// was queued). Per-channel FIFO order always holds; everything is
// deterministic for a fixed seed when driven from one thread.
struct LoopbackConfig {
  std::uint64_t seed = 0;
  std::uint64_t delay_min = 0;
  std::uint64_t delay_max = 0;
  // When set, every endpoint poll() advances the shared clock one tick.
  // Simulation harnesses turn this off and step the clock themselves.
  bool auto_advance = true;
  bool keep_delivery_log = false;
};

class LoopbackFabric {
 public:
  struct Delivery {
    int source;
    int dest;
    Tag tag;
    std::uint64_t queued_clock;
    std::uint64_t delivered_clock;
  };

  LoopbackFabric(int n_ranks, LoopbackConfig cfg = {});

  int n_ranks() const { return n_ranks_; }
  std::uint64_t clock() const;
  void advance_clock(std::uint64_t ticks = 1);

  // Messages queued but not yet consumed, across all channels.
  std::size_t pending_messages() const;
  std::vector<Delivery> delivery_log() const;

  // Earliest clock at which some currently blocked channel head becomes
  // deliverable; lets simulations skip ticks where nothing can happen.
  std::optional<std::uint64_t> next_ready_clock() const;

 private:
  friend class LoopbackTransport;

  struct Message {
    std::span<const std::byte> head;
    std::span<const std::byte> body;
    std::uint64_t ready_clock;
    std::uint64_t queued_clock;
    std::uint64_t send_handle;
  };

  struct Channel {
    std::deque<Message> queue;
  };

  std::size_t channel_index(int src, int dst, Tag tag) const {
    return (static_cast<std::size_t>(src) * n_ranks_ + dst) * n_tags +
           static_cast<std::size_t>(tag);
  }

  TransferHandle post(int src, int dst, Tag tag,
                      std::span<const std::byte> head,
                      std::span<const std::byte> body);
  std::optional<ProbeResult> probe_for(
      int dst, std::span<const std::pair<int, Tag>> skip);
  TransferHandle consume(int dst, int src, Tag tag, std::span<std::byte> head,
                         std::span<std::byte> body);
  bool handle_done(std::uint64_t id) const;
  std::uint64_t new_handle_locked(bool done);

  int n_ranks_;
  LoopbackConfig cfg_;
  mutable std::mutex mu_;
  std::uint64_t clock_ = 0;
  std::mt19937_64 rng_;
  std::vector<Channel> channels_;
  std::vector<std::size_t> probe_cursor_;  // per dest, rotates for fairness
  std::vector<bool> handle_done_;
  std::size_t pending_ = 0;
  std::vector<Delivery> log_;
};

class LoopbackTransport final : public Transport {
 public:
  LoopbackTransport(LoopbackFabric& fabric, int rank);

  int rank() const override { return rank_; }
  int n_ranks() const override { return fabric_.n_ranks(); }

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
  LoopbackFabric& fabric_;
  int rank_;
};

}  // namespace weft

#endif  // WEFT_LOOPBACK_HPP
