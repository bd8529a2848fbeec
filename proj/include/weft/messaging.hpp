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

#ifndef WEFT_MESSAGING_HPP
#define WEFT_MESSAGING_HPP

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "weft/codec.hpp"
#include "weft/transport.hpp"

namespace weft {

struct protocol_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Communicator;

namespace detail {

class ActiveMsgBase {
 public:
  virtual ~ActiveMsgBase() = default;
  virtual void dispatch(std::span<const std::byte> payload) = 0;
  std::uint32_t id = 0;
  std::uint32_t sig = 0;
};

class LargeActiveMsgBase {
 public:
  virtual ~LargeActiveMsgBase() = default;
  // Decodes header args and runs alloc_fn; returns the destination buffer.
  virtual view<std::byte> run_alloc(std::span<const std::byte> payload) = 0;
  // Runs process_fn against the same header args, after the body landed.
  virtual void run_process(std::span<const std::byte> payload) = 0;
  virtual void run_complete() = 0;
  std::uint32_t id = 0;
  std::uint32_t sig = 0;
};

}  // namespace detail

// Remote procedure bound to one handler on every rank. send() serializes
// its arguments into a frame immediately, so the caller may reuse or free
// the sources as soon as it returns; the handler runs on the destination's
// communication thread during progress().
template <typename... Ps>
class ActiveMsg final : public detail::ActiveMsgBase {
 public:
  void send(int dest, const Ps&... ps);

 private:
  friend class Communicator;
  explicit ActiveMsg(Communicator* comm, std::function<void(Ps...)> fn)
      : comm_(comm), handler_(std::move(fn)) {}

  void dispatch(std::span<const std::byte> payload) override {
    std::apply(handler_, decode_payload<Ps...>(payload));
  }

  Communicator* comm_;
  std::function<void(Ps...)> handler_;
};

// Bulk transfer with scalar header arguments. The receiver's alloc_fn
// picks the destination memory from the already-decoded header args, the
// body lands there with no intermediate buffer, then process_fn runs. On
// the sender, complete_fn fires once the body bytes are out the door and
// the source view may be reused. A zero-length body still runs all three.
template <typename... Ps>
class LargeActiveMsg final : public detail::LargeActiveMsgBase {
 public:
  template <typename T>
  void send(int dest, view<T> body, const Ps&... ps);

 private:
  friend class Communicator;
  LargeActiveMsg(Communicator* comm,
                 std::function<view<std::byte>(Ps...)> alloc,
                 std::function<void(Ps...)> process,
                 std::function<void()> complete)
      : comm_(comm),
        alloc_(std::move(alloc)),
        process_(std::move(process)),
        complete_(std::move(complete)) {}

  view<std::byte> run_alloc(std::span<const std::byte> payload) override {
    return std::apply(alloc_, decode_payload<Ps...>(payload));
  }
  void run_process(std::span<const std::byte> payload) override {
    std::apply(process_, decode_payload<Ps...>(payload));
  }
  void run_complete() override {
    if (complete_)
      complete_();
  }

  Communicator* comm_;
  std::function<view<std::byte>(Ps...)> alloc_;
  std::function<void(Ps...)> process_;
  std::function<void()> complete_;
};

struct CommConfig {
  // Embeds a signature hash in every frame and checks it on dispatch;
  // catches ranks whose registration orders diverged. Must match on all
  // ranks.
  bool check_signatures = false;
};

// Ties active-message ids to handlers and moves frames through a
// transport. Functions as the per-rank message engine: sends enqueue from
// any thread, while one designated communication thread calls progress()
// to push queued sends, reap finished ones, and receive + dispatch
// incoming messages.
//
// Registration must happen before any send and in the same order on every
// rank; ids are dense from 0 in registration order, which is what lets a
// sender name a remote handler it has never exchanged state with.
class Communicator {
 public:
  explicit Communicator(Transport& transport, CommConfig cfg = {});

  int rank() const { return transport_.rank(); }
  int n_ranks() const { return transport_.n_ranks(); }

  template <typename... Ps, typename F>
  ActiveMsg<Ps...>* make_active_msg(F handler) {
    static_assert(std::is_invocable_v<F, Ps...>,
                  "handler must accept the declared argument types");
    auto am = std::unique_ptr<ActiveMsg<Ps...>>(
        new ActiveMsg<Ps...>(this, std::move(handler)));
    am->sig = codec::signature_hash<Ps...>();
    ActiveMsg<Ps...>* out = am.get();
    register_am(std::move(am));
    return out;
  }

  // alloc_fn may return a view of any scalar type; it is adapted to bytes.
  template <typename... Ps, typename A, typename P, typename C>
  LargeActiveMsg<Ps...>* make_large_active_msg(A alloc, P process,
                                               C complete) {
    static_assert((codec::is_codec_type_v<Ps> && ...) &&
                      !(codec::is_view<Ps>::value || ...),
                  "large-message header args must be scalars or tuples");
    using R = std::invoke_result_t<A, Ps...>;
    static_assert(codec::is_view<R>::value,
                  "alloc_fn must return a view over writable memory");
    std::function<view<std::byte>(Ps...)> alloc_bytes =
        [f = std::move(alloc)](Ps... ps) {
          auto v = f(ps...);
          return view<std::byte>(reinterpret_cast<std::byte*>(v.data()),
                                 v.size_bytes());
        };
    auto am = std::unique_ptr<LargeActiveMsg<Ps...>>(new LargeActiveMsg<Ps...>(
        this, std::move(alloc_bytes), std::move(process), std::move(complete)));
    am->sig = codec::signature_hash<Ps...>();
    LargeActiveMsg<Ps...>* out = am.get();
    register_large_am(std::move(am));
    return out;
  }

  // One pass of the communication loop: post queued sends, reap finished
  // ones (firing complete_fn), poll the transport, then receive and
  // dispatch every deliverable message. Returns true if anything moved.
  // Only the communication thread may call this; handlers run inside.
  bool progress();

  // Drives progress until no outgoing transfer is pending.
  void flush();

  // User-message counters (queued on this rank, processed on this rank).
  // Shutdown-protocol traffic is invisible to them.
  std::uint64_t queued_count() const { return queued_.load(); }
  std::uint64_t processed_count() const { return processed_.load(); }

  // True while any outgoing transfer sits in the send queue or in flight.
  bool sends_pending() const;

  // --- shutdown-protocol plumbing -------------------------------------
  // Protocol frames share the transport but live in a reserved id space
  // and bypass the user counters.
  static constexpr std::uint32_t protocol_id_base = 0x80000000u;

  void set_protocol_handler(
      std::uint32_t slot,
      std::function<void(int source, std::span<const std::byte>)> fn);

  template <typename... Ts>
  void protocol_send(int dest, std::uint32_t slot, const Ts&... args) {
    enqueue_frame(encode_frame(protocol_id_base + slot, args...), dest,
                  /*count_user=*/false);
  }

  template <typename... Ps>
  void send_user_frame(detail::ActiveMsgBase* am, int dest, const Ps&... ps) {
    std::vector<std::byte> frame =
        cfg_.check_signatures ? encode_frame(am->id, am->sig, ps...)
                              : encode_frame(am->id, ps...);
    enqueue_frame(std::move(frame), dest, /*count_user=*/true);
  }

  template <typename... Ps>
  void send_user_large(detail::LargeActiveMsgBase* am, int dest,
                       std::span<const std::byte> body, const Ps&... ps) {
    std::vector<std::byte> header =
        cfg_.check_signatures ? encode_frame(am->id, am->sig, ps...)
                              : encode_frame(am->id, ps...);
    enqueue_large(std::move(header), dest, body, am);
  }

 private:
  struct SendRecord {
    std::vector<std::byte> head;        // frame, or 8-byte body prefix
    std::span<const std::byte> body;    // large bodies only
    Tag tag = Tag::regular;
    int dest = -1;
    detail::LargeActiveMsgBase* completer = nullptr;
    TransferHandle h;
  };

  struct PendingBody {
    detail::LargeActiveMsgBase* am;
    std::uint64_t seq;
    std::vector<std::byte> header_payload;  // args section, kept for process
    view<std::byte> dest_buf;
  };

  void register_am(std::unique_ptr<detail::ActiveMsgBase> am);
  void register_large_am(std::unique_ptr<detail::LargeActiveMsgBase> am);
  void enqueue_frame(std::vector<std::byte> frame, int dest, bool count_user);
  void enqueue_large(std::vector<std::byte> header, int dest,
                     std::span<const std::byte> body,
                     detail::LargeActiveMsgBase* am);
  void dispatch_regular(int source, std::span<const std::byte> frame);
  void dispatch_large_header(int source, std::span<const std::byte> frame);
  bool receive_one(std::vector<std::pair<int, Tag>>& skip);
  std::span<const std::byte> checked_payload(std::uint32_t sig,
                                             std::span<const std::byte> pay);

  Transport& transport_;
  CommConfig cfg_;

  mutable std::mutex send_mu_;
  std::deque<SendRecord> ready_sends_;
  bool send_seen_ = false;
  std::vector<std::uint64_t> next_body_seq_;  // per dest, under send_mu_

  std::vector<SendRecord> inflight_;  // communication thread only
  std::vector<std::deque<PendingBody>> pending_bodies_;  // per source
  std::vector<std::uint64_t> next_recv_seq_;             // per source

  // One dense id space across both kinds; exactly one side of an entry is
  // set.
  struct Registration {
    std::unique_ptr<detail::ActiveMsgBase> regular;
    std::unique_ptr<detail::LargeActiveMsgBase> large;
  };
  std::vector<Registration> registry_;
  std::vector<std::function<void(int, std::span<const std::byte>)>>
      protocol_handlers_;

  std::atomic<std::uint64_t> queued_{0};
  std::atomic<std::uint64_t> processed_{0};
};

template <typename... Ps>
void ActiveMsg<Ps...>::send(int dest, const Ps&... ps) {
  comm_->send_user_frame(this, dest, ps...);
}

template <typename... Ps>
template <typename T>
void LargeActiveMsg<Ps...>::send(int dest, view<T> body, const Ps&... ps) {
  comm_->send_user_large(
      this, dest,
      std::span<const std::byte>(
          reinterpret_cast<const std::byte*>(body.data()), body.size_bytes()),
      ps...);
}

}  // namespace weft

#endif  // WEFT_MESSAGING_HPP
