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

#ifndef WEFT_TESTS_SIM_WORLD_HPP
#define WEFT_TESTS_SIM_WORLD_HPP

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "weft/completion.hpp"
#include "weft/loopback.hpp"
#include "weft/messaging.hpp"

// Single-threaded multi-rank world for auditing the shutdown protocol.
// Real communicators and drivers run over a loopback fabric with random
// per-message delays, but the fabric clock only moves when the simulation
// says so, and "workers" are tick-counting task queues the simulation
// advances itself. Because everything interleaves on one thread, the
// omniscient checks below observe the exact instant rank 0 emits
// SHUTDOWN:
//
//   - every rank's task queue is empty,
//   - the ground-truth ledgers (kept outside the runtime) agree that
//     every queued user message was processed, and that all planned
//     messages were sent at all,
//   - every COUNT payload matched the ledgers when it was sent, and
//     every confirmed round's recorded counts still matched them when
//     the confirmation went out.
//
// The workload is a random message-spawn forest: processing message i
// enqueues a task for a few ticks and sends i's children, either from
// the handler or from the task body; a fifth of the messages travel as
// large two-part transfers.

namespace weft_test {

struct SimConfig {
  std::uint64_t seed = 0;
  int n_ranks = 2;
  int n_messages = 50;
  std::uint64_t delay_min = 0;
  std::uint64_t delay_max = 10;
  int max_task_ticks = 6;
};

struct SimResult {
  bool done = false;       // every rank received SHUTDOWN and drained
  bool violation = false;  // some oracle check failed
  std::string detail;
  std::uint64_t passes = 0;
  std::uint64_t shutdown_round = 0;
};

inline SimResult run_sim(const SimConfig& cfg,
                         std::uint64_t pass_budget = 1000000) {
  using weft::completion::Counts;
  const int n = cfg.n_ranks;
  const int m = cfg.n_messages;
  std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ull + 1);

  SimResult res;
  auto fail = [&](const std::string& why) {
    if (!res.violation) {
      res.violation = true;
      res.detail = why;
    }
  };

  // ---- workload plan ---------------------------------------------------
  struct Msg {
    int dest = 0;
    int ticks = 0;            // task length its processing spawns
    bool from_handler = false;  // children sent by handler, not task
    bool large = false;
    std::vector<int> children;
  };
  std::vector<Msg> plan(m);
  std::vector<std::vector<int>> roots_of(n);
  for (int i = 0; i < m; ++i) {
    plan[i].dest = static_cast<int>(rng() % n);
    plan[i].ticks = static_cast<int>(rng() % (cfg.max_task_ticks + 1));
    plan[i].from_handler = rng() % 2 == 0;
    plan[i].large = rng() % 5 == 0;
    if (i == 0 || rng() % 10 < 3)
      roots_of[rng() % n].push_back(i);
    else
      plan[rng() % i].children.push_back(i);
  }

  weft::LoopbackConfig lcfg;
  lcfg.seed = cfg.seed ^ 0x5eedf00dULL;
  lcfg.delay_min = cfg.delay_min;
  lcfg.delay_max = cfg.delay_max;
  lcfg.auto_advance = false;
  weft::LoopbackFabric fab(n, lcfg);

  struct SimTask {
    int ticks_left = 0;
    std::vector<int> sends;
  };
  struct Rank {
    std::unique_ptr<weft::LoopbackTransport> tr;
    std::unique_ptr<weft::Communicator> comm;
    std::unique_ptr<weft::CompletionDriver> driver;
    weft::ActiveMsg<std::uint64_t>* small = nullptr;
    weft::LargeActiveMsg<std::uint64_t, std::uint64_t, std::uint64_t>* big =
        nullptr;
    std::deque<SimTask> tasks;
    std::map<std::uint64_t, std::vector<std::uint8_t>> inbuf;
    std::deque<std::vector<std::uint8_t>> pinned;  // outgoing large bodies
    std::uint64_t truth_q = 0, truth_p = 0;
    std::map<std::uint64_t, std::vector<Counts>> requests_seen;
  };
  std::vector<Rank> ranks(n);

  auto send_msg = [&](int from, int i) {
    Rank& R = ranks[from];
    if (plan[i].large) {
      std::size_t len = 64 + (static_cast<std::size_t>(i) * 37) % 192;
      R.pinned.emplace_back(len);
      std::uint64_t sum = 0;
      for (std::size_t b = 0; b < len; ++b) {
        R.pinned.back()[b] = static_cast<std::uint8_t>(i * 131 + b);
        sum += R.pinned.back()[b];
      }
      R.big->send(plan[i].dest, weft::make_view(std::as_const(R.pinned.back())),
                  static_cast<std::uint64_t>(i), sum,
                  static_cast<std::uint64_t>(len));
    } else {
      R.small->send(plan[i].dest, static_cast<std::uint64_t>(i));
    }
    ++R.truth_q;
  };

  auto on_process = [&](int r, int i) {
    ++ranks[r].truth_p;
    SimTask t;
    t.ticks_left = plan[i].ticks;
    if (plan[i].from_handler) {
      for (int c : plan[i].children)
        send_msg(r, c);
    } else {
      t.sends = plan[i].children;
    }
    ranks[r].tasks.push_back(std::move(t));
  };

  for (int r = 0; r < n; ++r) {
    Rank& R = ranks[r];
    R.tr = std::make_unique<weft::LoopbackTransport>(fab, r);
    R.comm = std::make_unique<weft::Communicator>(*R.tr);
    R.small = R.comm->make_active_msg<std::uint64_t>(
        [&on_process, r](std::uint64_t id) {
          on_process(r, static_cast<int>(id));
        });
    R.big = R.comm->make_large_active_msg<std::uint64_t, std::uint64_t,
                                          std::uint64_t>(
        [&ranks, r](std::uint64_t id, std::uint64_t, std::uint64_t len) {
          auto& buf = ranks[r].inbuf[id];
          buf.assign(len, 0);
          return weft::make_view(buf);
        },
        [&ranks, &on_process, &fail, r](std::uint64_t id, std::uint64_t sum,
                                        std::uint64_t) {
          auto it = ranks[r].inbuf.find(id);
          std::uint64_t got = 0;
          for (std::uint8_t b : it->second)
            got += b;
          if (got != sum)
            fail("large-message body corrupted in flight");
          ranks[r].inbuf.erase(it);
          on_process(r, static_cast<int>(id));
        },
        [] {});
    R.driver = std::make_unique<weft::CompletionDriver>(
        *R.comm, [&ranks, r] { return ranks[r].tasks.empty(); });
    R.driver->set_trace([&, r](const weft::CompletionDriver::TraceEvent& e) {
      using TE = weft::CompletionDriver::TraceEvent;
      Rank& me = ranks[r];
      if (e.kind == TE::count && !e.received) {
        if (e.counts.queued != me.truth_q ||
            e.counts.processed != me.truth_p)
          fail("COUNT payload disagrees with the ground-truth ledger");
      } else if (e.kind == TE::request && e.received) {
        me.requests_seen[e.round] = e.snapshot;
      } else if (e.kind == TE::confirmation && !e.received) {
        // At confirmation time the confirmed round's recorded counts for
        // this rank must still be its live counts.
        auto it = me.requests_seen.find(e.round);
        if (it == me.requests_seen.end()) {
          fail("confirmation for a round never requested");
        } else if (it->second[r].queued != me.truth_q ||
                   it->second[r].processed != me.truth_p) {
          fail("recorded counts drifted from the ledger by confirmation");
        }
      }
    });
  }

  // Ranks with root messages start busy; the rest start idle.
  for (int r = 0; r < n; ++r)
    if (!roots_of[r].empty())
      ranks[r].tasks.push_back(
          SimTask{static_cast<int>(rng() % (cfg.max_task_ticks + 1)),
                  roots_of[r]});

  auto all_down = [&] {
    for (Rank& R : ranks)
      if (!R.driver->shutdown_received())
        return false;
    return true;
  };

  auto check_shutdown_instant = [&] {
    std::uint64_t sq = 0, sp = 0;
    for (int r = 0; r < n; ++r) {
      const Rank& R = ranks[r];
      if (!R.tasks.empty())
        fail("a rank still held tasks at the shutdown broadcast");
      if (!R.inbuf.empty())
        fail("a large-message body was still pending at the broadcast");
      sq += R.truth_q;
      sp += R.truth_p;
    }
    if (sq != sp)
      fail("queued and processed totals differ at the shutdown broadcast");
    if (sq != static_cast<std::uint64_t>(m)) {
      std::ostringstream os;
      os << "only " << sq << " of " << m
         << " planned messages existed at the shutdown broadcast";
      fail(os.str());
    }
  };

  while (!all_down() && res.passes < pass_budget) {
    ++res.passes;
    bool moved = false;
    bool busy = false;
    for (int r = 0; r < n; ++r) {
      Rank& R = ranks[r];
      moved |= R.comm->progress();
      if (!R.tasks.empty()) {
        busy = true;
        SimTask& t = R.tasks.front();
        if (--t.ticks_left <= 0) {
          std::vector<int> sends = std::move(t.sends);
          R.tasks.pop_front();
          for (int c : sends)
            send_msg(r, c);
        }
      }
      auto rep = R.driver->step();
      moved |= rep.any();
      if (rep.broadcast_shutdown) {
        check_shutdown_instant();
        res.shutdown_round = ranks[0].driver->root_state()->round();
      }
    }
    if (moved || busy) {
      fab.advance_clock(1);
    } else {
      // Dead air: jump straight to the next delivery. No delivery at all
      // means the protocol stalled for good, which the budget reports.
      auto next = fab.next_ready_clock();
      if (!next)
        break;
      fab.advance_clock(*next - fab.clock());
    }
  }

  if (!all_down())
    return res;  // liveness failure; res.done stays false

  // Every send must finish and the fabric must fall silent; only the
  // final SHUTDOWN deliveries should still be airborne here.
  for (int extra = 0; extra < 10000; ++extra) {
    bool pending = fab.pending_messages() > 0;
    for (Rank& R : ranks)
      pending = pending || R.comm->sends_pending();
    if (!pending)
      break;
    for (Rank& R : ranks)
      R.comm->progress();
    fab.advance_clock(1);
  }
  if (fab.pending_messages() > 0)
    fail("messages were still in flight after every rank shut down");
  for (Rank& R : ranks) {
    if (R.comm->sends_pending())
      fail("a send never completed after shutdown");
    auto rep = R.driver->step();
    if (rep.any())
      fail("a driver emitted protocol traffic after shutdown");
  }

  res.done = true;
  return res;
}

}  // namespace weft_test

#endif  // WEFT_TESTS_SIM_WORLD_HPP
