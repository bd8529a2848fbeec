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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <thread>
#include <vector>

#include "weft/loopback.hpp"
#include "weft/messaging.hpp"

using namespace weft;

namespace {

// Round-robins progress over every communicator until done() holds or the
// iteration budget runs out.
void drive(std::vector<Communicator*> comms, const std::function<bool()>& done,
           int budget = 20000) {
  for (int i = 0; i < budget && !done(); ++i)
    for (Communicator* c : comms)
      c->progress();
  REQUIRE(done());
}

}  // namespace

TEST_CASE("handler ids are dense in registration order") {
  LoopbackFabric fab(1);
  LoopbackTransport t0(fab, 0);
  Communicator c0(t0);

  auto* a = c0.make_active_msg<int>([](int) {});
  auto* b = c0.make_large_active_msg<int>(
      [](int) { return view<double>(); }, [](int) {}, [] {});
  auto* c = c0.make_active_msg<double>([](double) {});

  CHECK(a->id == 0);
  CHECK(b->id == 1);
  CHECK(c->id == 2);
}

TEST_CASE("registering after the first send is an error") {
  LoopbackFabric fab(1);
  LoopbackTransport t0(fab, 0);
  Communicator c0(t0);

  auto* am = c0.make_active_msg<int>([](int) {});
  am->send(0, 5);
  CHECK_THROWS_AS(c0.make_active_msg<int>([](int) {}), protocol_error);
  CHECK_THROWS_AS(c0.make_large_active_msg<int>(
                      [](int) { return view<double>(); }, [](int) {}, [] {}),
                  protocol_error);
}

TEST_CASE("self-sends run the handler during progress") {
  LoopbackFabric fab(1);
  LoopbackTransport t0(fab, 0);
  Communicator c0(t0);

  int got = 0;
  auto* am = c0.make_active_msg<int>([&](int x) { got = x; });
  am->send(0, 41);
  CHECK(c0.queued_count() == 1);
  CHECK(c0.processed_count() == 0);

  drive({&c0}, [&] { return got == 41; });
  CHECK(c0.processed_count() == 1);
  c0.progress();  // reaps the now-consumed send record
  CHECK_FALSE(c0.sends_pending());
}

TEST_CASE("arguments are serialized at send time") {
  LoopbackFabric fab(1);
  LoopbackTransport t0(fab, 0);
  Communicator c0(t0);

  std::vector<double> data{1.5, 2.5, 3.5};
  std::vector<double> got;
  auto* am = c0.make_active_msg<view<const double>>(
      [&](view<const double> v) { got = v.to_vector(); });

  am->send(0, make_view(std::as_const(data)));
  data.assign(data.size(), -9.0);  // must not affect the message

  drive({&c0}, [&] { return !got.empty(); });
  CHECK(got == std::vector<double>{1.5, 2.5, 3.5});
}

TEST_CASE("frames cross ranks and counters track both ends") {
  LoopbackFabric fab(2);
  LoopbackTransport t0(fab, 0), t1(fab, 1);
  Communicator c0(t0), c1(t1);

  std::vector<std::pair<std::int32_t, double>> seen0, seen1;
  auto handler = [](auto* sink) {
    return [sink](std::pair<std::int32_t, double> p) { sink->push_back(p); };
  };
  auto* am0 = c0.make_active_msg<std::pair<std::int32_t, double>>(
      handler(&seen0));
  auto* am1 = c1.make_active_msg<std::pair<std::int32_t, double>>(
      handler(&seen1));

  am0->send(1, {1, 0.5});
  am0->send(1, {2, 1.5});
  am0->send(1, {3, 2.5});
  am1->send(0, {10, -1.0});
  am1->send(0, {20, -2.0});

  drive({&c0, &c1},
        [&] { return seen0.size() == 2 && seen1.size() == 3; });

  CHECK(seen1 == std::vector<std::pair<std::int32_t, double>>{
                     {1, 0.5}, {2, 1.5}, {3, 2.5}});
  CHECK(seen0 == std::vector<std::pair<std::int32_t, double>>{
                     {10, -1.0}, {20, -2.0}});

  CHECK(c0.queued_count() == 3);
  CHECK(c0.processed_count() == 2);
  CHECK(c1.queued_count() == 2);
  CHECK(c1.processed_count() == 3);
  CHECK(c0.queued_count() + c1.queued_count() ==
        c0.processed_count() + c1.processed_count());
}

TEST_CASE("the destination must exist") {
  LoopbackFabric fab(2);
  LoopbackTransport t0(fab, 0);
  Communicator c0(t0);

  auto* am = c0.make_active_msg<int>([](int) {});
  CHECK_THROWS_AS(am->send(2, 1), std::invalid_argument);
  CHECK_THROWS_AS(am->send(-1, 1), std::invalid_argument);
}

TEST_CASE("a large message lands in the buffer alloc picked") {
  LoopbackFabric fab(2);
  LoopbackTransport t0(fab, 0), t1(fab, 1);
  Communicator c0(t0), c1(t1);

  constexpr std::size_t n = 1 << 17;  // 1 MiB of doubles
  std::vector<double> src(n);
  for (std::size_t i = 0; i < n; ++i)
    src[i] = 0.25 * static_cast<double>(i);

  std::vector<double> dst;
  std::vector<std::string> events;
  bool send_done = false;

  auto* sender = c0.make_large_active_msg<std::uint64_t>(
      [](std::uint64_t) { return view<double>(); }, [](std::uint64_t) {},
      [&] { send_done = true; });
  c1.make_large_active_msg<std::uint64_t>(
      [&](std::uint64_t count) {
        events.push_back("alloc");
        dst.assign(count, 0.0);
        return make_view(dst);
      },
      [&](std::uint64_t count) {
        events.push_back("process");
        CHECK(count == n);
      },
      [&] { events.push_back("complete"); });

  sender->send(1, make_view(std::as_const(src)), std::uint64_t{n});
  CHECK(c0.queued_count() == 1);

  // The body must leave the source before complete_fn fires, and it only
  // leaves once the receiver consumed it.
  c0.progress();
  c0.progress();
  CHECK_FALSE(send_done);

  drive({&c1}, [&] { return c1.processed_count() == 1; });
  CHECK_FALSE(send_done);  // receiver done, sender has not reaped yet
  drive({&c0}, [&] { return send_done; });

  CHECK(events == std::vector<std::string>{"alloc", "process"});
  CHECK(dst == src);
  CHECK_FALSE(c0.sends_pending());
}

TEST_CASE("a zero-length large message still runs all three hooks") {
  LoopbackFabric fab(2);
  LoopbackTransport t0(fab, 0), t1(fab, 1);
  Communicator c0(t0), c1(t1);

  int alloc_runs = 0, process_runs = 0, complete_runs = 0;
  std::vector<float> empty_buf;

  auto* sender = c0.make_large_active_msg<int>(
      [](int) { return view<float>(); }, [](int) {},
      [&] { ++complete_runs; });
  c1.make_large_active_msg<int>(
      [&](int) {
        ++alloc_runs;
        return make_view(empty_buf);
      },
      [&](int) { ++process_runs; }, [] {});

  sender->send(1, view<const float>(), 7);
  drive({&c0, &c1}, [&] {
    return complete_runs == 1 && c1.processed_count() == 1;
  });
  CHECK(alloc_runs == 1);
  CHECK(process_runs == 1);
}

TEST_CASE("alloc must size its buffer to the body") {
  LoopbackFabric fab(2);
  LoopbackTransport t0(fab, 0), t1(fab, 1);
  Communicator c0(t0), c1(t1);

  std::vector<std::uint8_t> src(64), dst(65);
  auto* sender = c0.make_large_active_msg<int>(
      [](int) { return view<std::uint8_t>(); }, [](int) {}, [] {});
  c1.make_large_active_msg<int>([&](int) { return make_view(dst); },
                                [](int) {}, [] {});

  sender->send(1, make_view(std::as_const(src)), 0);
  CHECK_THROWS_AS(
      [&] {
        for (int i = 0; i < 10; ++i) {
          c0.progress();
          c1.progress();
        }
      }(),
      protocol_error);
}

TEST_CASE("handlers can send replies") {
  LoopbackFabric fab(2);
  LoopbackTransport t0(fab, 0), t1(fab, 1);
  Communicator c0(t0), c1(t1);

  // Countdown ping-pong: each handler returns the ball until it reads 0.
  std::vector<int> log;
  ActiveMsg<int>* bounce0 = nullptr;
  ActiveMsg<int>* bounce1 = nullptr;
  bounce0 = c0.make_active_msg<int>([&](int n) {
    log.push_back(n);
    if (n > 0)
      bounce0->send(1, n - 1);
  });
  bounce1 = c1.make_active_msg<int>([&](int n) {
    log.push_back(n);
    if (n > 0)
      bounce1->send(0, n - 1);
  });

  bounce0->send(1, 10);
  drive({&c0, &c1}, [&] {
    return c0.processed_count() + c1.processed_count() == 11;
  });

  std::vector<int> want(11);
  std::iota(want.rbegin(), want.rend(), 0);
  CHECK(log == want);
  CHECK(c0.queued_count() == 6);   // 10, 8, 6, 4, 2, 0
  CHECK(c1.queued_count() == 5);   // 9, 7, 5, 3, 1
  CHECK(c0.processed_count() == 5);
  CHECK(c1.processed_count() == 6);
}

TEST_CASE("an unknown id is a protocol error") {
  LoopbackFabric fab(1);
  LoopbackTransport t0(fab, 0);
  Communicator c0(t0);
  c0.make_active_msg<int>([](int) {});

  auto frame = encode_frame(57, 7);
  t0.isend(0, Tag::regular, frame, {});
  CHECK_THROWS_AS(
      [&] {
        for (int i = 0; i < 5; ++i)
          c0.progress();
      }(),
      protocol_error);
}

TEST_CASE("protocol frames bypass the user counters") {
  LoopbackFabric fab(1);
  LoopbackTransport t0(fab, 0);
  Communicator c0(t0);

  std::uint64_t got = 0;
  int from = -1;
  c0.set_protocol_handler(5, [&](int source, std::span<const std::byte> pay) {
    from = source;
    std::tie(got) = decode_payload<std::uint64_t>(pay);
  });

  c0.protocol_send(0, 5, std::uint64_t{99});
  drive({&c0}, [&] { return got == 99; });
  CHECK(from == 0);
  CHECK(c0.queued_count() == 0);
  CHECK(c0.processed_count() == 0);

  SUBCASE("but an empty slot still raises") {
    c0.protocol_send(0, 6);
    CHECK_THROWS_AS(
        [&] {
          for (int i = 0; i < 5; ++i)
            c0.progress();
        }(),
        protocol_error);
  }
}

TEST_CASE("signature checking accepts matching registrations") {
  LoopbackFabric fab(2);
  CommConfig cfg;
  cfg.check_signatures = true;
  LoopbackTransport t0(fab, 0), t1(fab, 1);
  Communicator c0(t0, cfg), c1(t1, cfg);

  int got = 0;
  auto* am0 = c0.make_active_msg<int, double>([](int, double) {});
  c1.make_active_msg<int, double>([&](int x, double) { got = x; });

  am0->send(1, 12, 0.5);
  drive({&c0, &c1}, [&] { return got == 12; });
}

TEST_CASE("signature checking rejects divergent registration orders") {
  LoopbackFabric fab(2);
  CommConfig cfg;
  cfg.check_signatures = true;
  LoopbackTransport t0(fab, 0), t1(fab, 1);
  Communicator c0(t0, cfg), c1(t1, cfg);

  auto* am_int = c0.make_active_msg<int>([](int) {});
  c0.make_active_msg<double>([](double) {});
  // Rank 1 swapped the order, so id 0 means something else there.
  c1.make_active_msg<double>([](double) {});
  c1.make_active_msg<int>([](int) {});

  am_int->send(1, 3);
  CHECK_THROWS_AS(
      [&] {
        for (int i = 0; i < 10; ++i) {
          c0.progress();
          c1.progress();
        }
      }(),
      protocol_error);
}

TEST_CASE("sends from many threads arrive exactly once") {
  LoopbackFabric fab(1);
  LoopbackTransport t0(fab, 0);
  Communicator c0(t0);

  constexpr int per_thread = 10000;
  std::uint64_t sum = 0;  // handlers run on this thread only
  auto* am = c0.make_active_msg<std::uint64_t>(
      [&](std::uint64_t x) { sum += x; });

  auto producer = [am](std::uint64_t base) {
    for (int i = 0; i < per_thread; ++i)
      am->send(0, base + i);
  };
  std::thread p1(producer, 0), p2(producer, 1u << 20);

  drive({&c0},
        [&] { return c0.processed_count() == 2 * per_thread; }, 2000000);
  p1.join();
  p2.join();

  std::uint64_t each = std::uint64_t{per_thread} * (per_thread - 1) / 2;
  CHECK(sum == 2 * each + std::uint64_t(per_thread) * (1u << 20));
  CHECK(c0.queued_count() == 2 * per_thread);
}

TEST_CASE("flush drains every outgoing transfer") {
  LoopbackFabric fab(1);
  LoopbackTransport t0(fab, 0);
  Communicator c0(t0);

  int runs = 0;
  auto* am = c0.make_active_msg<int>([&](int) { ++runs; });
  for (int i = 0; i < 10; ++i)
    am->send(0, i);
  CHECK(c0.sends_pending());

  c0.flush();
  CHECK_FALSE(c0.sends_pending());
  CHECK(runs == 10);  // self-frames get consumed on the way
}

TEST_CASE("mixed regular and large traffic survives random delays") {
  constexpr int n_ranks = 3;
  constexpr int per_rank = 40;

  LoopbackConfig lcfg;
  lcfg.seed = 42;
  lcfg.delay_min = 0;
  lcfg.delay_max = 15;
  LoopbackFabric fab(n_ranks, lcfg);

  std::vector<std::unique_ptr<LoopbackTransport>> ts;
  std::vector<std::unique_ptr<Communicator>> cs;
  for (int r = 0; r < n_ranks; ++r) {
    ts.push_back(std::make_unique<LoopbackTransport>(fab, r));
    cs.push_back(std::make_unique<Communicator>(*ts.back()));
  }

  struct World {
    int regular_ok = 0;
    int large_ok = 0;
    std::map<std::uint64_t, std::vector<std::uint8_t>> buffers;
  } world;

  // Regular carries (sum, blob); large carries body bytes with the
  // sum and a unique id in the header so alloc can park each body.
  std::vector<ActiveMsg<std::uint64_t, view<const std::uint8_t>>*> regs;
  std::vector<LargeActiveMsg<std::uint64_t, std::uint64_t, std::uint64_t>*>
      larges;
  std::vector<int> completes(n_ranks, 0);
  for (int r = 0; r < n_ranks; ++r) {
    regs.push_back(
        cs[r]->make_active_msg<std::uint64_t, view<const std::uint8_t>>(
            [&world](std::uint64_t sum, view<const std::uint8_t> blob) {
              std::uint64_t s = 0;
              for (std::size_t i = 0; i < blob.size(); ++i)
                s += blob[i];
              CHECK(s == sum);
              ++world.regular_ok;
            }));
    larges.push_back(
        cs[r]->make_large_active_msg<std::uint64_t, std::uint64_t,
                                     std::uint64_t>(
            [&world](std::uint64_t uid, std::uint64_t, std::uint64_t n) {
              auto& buf = world.buffers[uid];
              buf.assign(n, 0);
              return make_view(buf);
            },
            [&world](std::uint64_t uid, std::uint64_t sum, std::uint64_t) {
              auto it = world.buffers.find(uid);
              REQUIRE(it != world.buffers.end());
              std::uint64_t s = 0;
              for (std::uint8_t b : it->second)
                s += b;
              CHECK(s == sum);
              world.buffers.erase(it);
              ++world.large_ok;
            },
            [&completes, r] { ++completes[r]; }));
  }

  // Sources must outlive their sends; keep every blob alive to the end.
  std::vector<std::vector<std::uint8_t>> pinned;
  pinned.reserve(n_ranks * per_rank);
  std::vector<int> large_sent(n_ranks, 0);
  for (int r = 0; r < n_ranks; ++r) {
    std::mt19937_64 rng(1000 + r);
    for (int i = 0; i < per_rank; ++i) {
      int dest = static_cast<int>(rng() % n_ranks);
      std::size_t len = rng() % 5000;
      pinned.emplace_back(len);
      std::uint64_t sum = 0;
      for (auto& b : pinned.back()) {
        b = static_cast<std::uint8_t>(rng());
        sum += b;
      }
      view<const std::uint8_t> body = make_view(std::as_const(pinned.back()));
      if (rng() % 10 < 7) {
        regs[r]->send(dest, sum, body);
      } else {
        std::uint64_t uid = std::uint64_t(r) * 1000000 + i;
        larges[r]->send(dest, body, uid, sum, std::uint64_t{len});
        ++large_sent[r];
      }
    }
  }

  std::vector<Communicator*> all;
  for (auto& c : cs)
    all.push_back(c.get());
  drive(all, [&] {
    std::uint64_t q = 0, p = 0;
    for (auto& c : cs) {
      q += c->queued_count();
      p += c->processed_count();
    }
    bool pending = false;
    for (auto& c : cs)
      pending = pending || c->sends_pending();
    return q == p && q == n_ranks * per_rank && !pending;
  });

  CHECK(world.regular_ok + world.large_ok == n_ranks * per_rank);
  CHECK(world.buffers.empty());
  for (int r = 0; r < n_ranks; ++r)
    CHECK(completes[r] == large_sent[r]);
  CHECK(fab.pending_messages() == 0);
}
