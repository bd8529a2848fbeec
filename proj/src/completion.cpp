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

#include "weft/completion.hpp"

#include <thread>

#include "weft/thread_pool.hpp"

namespace weft {

using completion::Counts;

CompletionDriver::CompletionDriver(Communicator& comm,
                                   std::function<bool()> idle)
    : comm_(comm), idle_(std::move(idle)) {
  if (comm.rank() == 0)
    root_ = std::make_unique<completion::RootState>(comm.n_ranks());

  comm_.set_protocol_handler(
      slot_count, [this](int source, std::span<const std::byte> pay) {
        if (!root_)
          throw protocol_error("COUNT delivered to a rank other than 0");
        auto [q, p] = decode_payload<std::uint64_t, std::uint64_t>(pay);
        root_->on_count(source, Counts{q, p});
        emit({TraceEvent::count, true, source, Counts{q, p}, 0, {}});
      });

  comm_.set_protocol_handler(
      slot_request, [this](int source, std::span<const std::byte> pay) {
        auto [round, flat] =
            decode_payload<std::uint64_t, view<const std::uint64_t>>(pay);
        if (flat.size() != 2 * static_cast<std::size_t>(comm_.n_ranks()))
          throw protocol_error("REQUEST snapshot has the wrong rank count");
        std::vector<Counts> snap(comm_.n_ranks());
        for (int r = 0; r < comm_.n_ranks(); ++r)
          snap[r] = Counts{flat[2 * r], flat[2 * r + 1]};
        emit({TraceEvent::request, true, source, {}, round, snap});
        rank_.on_request(round, std::move(snap));
      });

  comm_.set_protocol_handler(
      slot_confirmation, [this](int source, std::span<const std::byte> pay) {
        if (!root_)
          throw protocol_error("CONFIRMATION delivered to a rank other than 0");
        auto [round] = decode_payload<std::uint64_t>(pay);
        root_->on_confirmation(round, source);
        emit({TraceEvent::confirmation, true, source, {}, round, {}});
      });

  comm_.set_protocol_handler(
      slot_shutdown, [this](int source, std::span<const std::byte>) {
        rank_.on_shutdown();
        emit({TraceEvent::shutdown, true, source, {}, 0, {}});
      });
}

CompletionDriver::StepReport CompletionDriver::step() {
  StepReport rep;
  if (rank_.shutdown_received())
    return rep;

  // Idleness is sampled before the counters: once the workers are idle,
  // only this thread could move the counters, so the pair below is a
  // coherent idle-time snapshot.
  bool idle = idle_();
  Counts now{comm_.queued_count(), comm_.processed_count()};

  if (auto c = rank_.maybe_count(idle, now)) {
    comm_.protocol_send(0, slot_count, c->queued, c->processed);
    emit({TraceEvent::count, false, comm_.rank(), *c, 0, {}});
    rep.sent_count = true;
  }

  if (auto round = rank_.maybe_confirm(comm_.rank(), now)) {
    comm_.protocol_send(0, slot_confirmation, *round);
    emit({TraceEvent::confirmation, false, comm_.rank(), {}, *round, {}});
    rep.sent_confirmation = true;
  }

  if (root_) {
    if (auto req = root_->maybe_request()) {
      auto& [round, snap] = *req;
      std::vector<std::uint64_t> flat;
      flat.reserve(2 * snap.size());
      for (const Counts& c : snap) {
        flat.push_back(c.queued);
        flat.push_back(c.processed);
      }
      for (int dest = 0; dest < comm_.n_ranks(); ++dest)
        comm_.protocol_send(dest, slot_request, round, make_view(flat));
      emit({TraceEvent::request, false, 0, {}, round, snap});
      rep.sent_request = true;
    }
    if (root_->all_confirmed() && !root_->shutdown_sent()) {
      root_->mark_shutdown_sent();
      for (int dest = 0; dest < comm_.n_ranks(); ++dest)
        comm_.protocol_send(dest, slot_shutdown);
      emit({TraceEvent::shutdown, false, 0, {}, 0, {}});
      rep.broadcast_shutdown = true;
    }
  }
  return rep;
}

namespace detail {

void drive_until_shutdown(ThreadPool& pool, Communicator& comm) {
  CompletionDriver driver(comm, [&pool] { return pool.quiescent(); });
  while (!driver.shutdown_received()) {
    bool moved = comm.progress();
    auto rep = driver.step();
    if (!moved && !rep.any())
      std::this_thread::yield();
  }
  comm.flush();
}

}  // namespace detail

}  // namespace weft
