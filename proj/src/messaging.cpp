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

#include "weft/messaging.hpp"

#include <algorithm>
#include <thread>

namespace weft {

namespace {
constexpr std::size_t frame_limit = std::size_t{1} << 31;
constexpr std::size_t body_prefix_bytes = 8;
}  // namespace

Communicator::Communicator(Transport& transport, CommConfig cfg)
    : transport_(transport), cfg_(cfg) {
  next_body_seq_.assign(transport.n_ranks(), 0);
  next_recv_seq_.assign(transport.n_ranks(), 0);
  pending_bodies_.resize(transport.n_ranks());
  protocol_handlers_.resize(8);
}

void Communicator::register_am(std::unique_ptr<detail::ActiveMsgBase> am) {
  std::lock_guard<std::mutex> lk(send_mu_);
  if (send_seen_)
    throw protocol_error("active messages must be registered before sending");
  am->id = static_cast<std::uint32_t>(registry_.size());
  registry_.push_back(Registration{std::move(am), nullptr});
}

void Communicator::register_large_am(
    std::unique_ptr<detail::LargeActiveMsgBase> am) {
  std::lock_guard<std::mutex> lk(send_mu_);
  if (send_seen_)
    throw protocol_error("active messages must be registered before sending");
  am->id = static_cast<std::uint32_t>(registry_.size());
  registry_.push_back(Registration{nullptr, std::move(am)});
}

void Communicator::set_protocol_handler(
    std::uint32_t slot,
    std::function<void(int source, std::span<const std::byte>)> fn) {
  protocol_handlers_.at(slot) = std::move(fn);
}

void Communicator::enqueue_frame(std::vector<std::byte> frame, int dest,
                                 bool count_user) {
  if (dest < 0 || dest >= n_ranks())
    throw std::invalid_argument("send destination out of range");
  if (frame.size() >= frame_limit)
    throw std::invalid_argument("frame exceeds the 2 GiB transfer limit");
  SendRecord rec;
  rec.head = std::move(frame);
  rec.tag = Tag::regular;
  rec.dest = dest;
  std::lock_guard<std::mutex> lk(send_mu_);
  send_seen_ = true;
  if (count_user)
    queued_.fetch_add(1);
  ready_sends_.push_back(std::move(rec));
}

void Communicator::enqueue_large(std::vector<std::byte> header, int dest,
                                 std::span<const std::byte> body,
                                 detail::LargeActiveMsgBase* am) {
  if (dest < 0 || dest >= n_ranks())
    throw std::invalid_argument("send destination out of range");
  if (header.size() >= frame_limit || body.size() >= frame_limit)
    throw std::invalid_argument("frame exceeds the 2 GiB transfer limit");

  SendRecord head_rec;
  head_rec.head = std::move(header);
  head_rec.tag = Tag::large_header;
  head_rec.dest = dest;

  SendRecord body_rec;
  body_rec.body = body;
  body_rec.tag = Tag::large_body;
  body_rec.dest = dest;
  body_rec.completer = am;

  std::lock_guard<std::mutex> lk(send_mu_);
  send_seen_ = true;
  queued_.fetch_add(1);  // one user message, two transfers
  std::uint64_t seq = next_body_seq_[dest]++;
  body_rec.head.resize(body_prefix_bytes);
  codec::le_store<std::uint64_t>(body_rec.head.data(), seq);
  ready_sends_.push_back(std::move(head_rec));
  ready_sends_.push_back(std::move(body_rec));
}

bool Communicator::sends_pending() const {
  // inflight_ belongs to the communication thread; callers poll this from
  // there or after it has gone quiet.
  std::lock_guard<std::mutex> lk(send_mu_);
  return !ready_sends_.empty() || !inflight_.empty();
}

std::span<const std::byte> Communicator::checked_payload(
    std::uint32_t sig, std::span<const std::byte> pay) {
  if (!cfg_.check_signatures)
    return pay;
  if (pay.size() < 4)
    throw malformed_frame("frame too short for its signature field");
  auto [got] = decode_payload<std::uint32_t>(pay.first(4));
  if (got != sig)
    throw protocol_error(
        "signature mismatch: registration order differs across ranks");
  return pay.subspan(4);
}

void Communicator::dispatch_regular(int source,
                                    std::span<const std::byte> frame) {
  frame_view fv = parse_frame(frame);
  if (fv.am_id >= protocol_id_base) {
    std::uint32_t slot = fv.am_id - protocol_id_base;
    if (slot >= protocol_handlers_.size() || !protocol_handlers_[slot])
      throw protocol_error("frame names an unknown protocol handler");
    protocol_handlers_[slot](source, fv.payload);
    return;
  }
  if (fv.am_id >= registry_.size() || !registry_[fv.am_id].regular)
    throw protocol_error("frame names an unknown active message");
  detail::ActiveMsgBase* am = registry_[fv.am_id].regular.get();
  am->dispatch(checked_payload(am->sig, fv.payload));
  processed_.fetch_add(1);
}

void Communicator::dispatch_large_header(int source,
                                         std::span<const std::byte> frame) {
  frame_view fv = parse_frame(frame);
  if (fv.am_id >= registry_.size() || !registry_[fv.am_id].large)
    throw protocol_error("header names an unknown large active message");
  detail::LargeActiveMsgBase* am = registry_[fv.am_id].large.get();
  std::span<const std::byte> payload = checked_payload(am->sig, fv.payload);

  PendingBody pb;
  pb.am = am;
  pb.seq = next_recv_seq_[source]++;
  pb.header_payload.assign(payload.begin(), payload.end());
  pb.dest_buf = am->run_alloc(pb.header_payload);
  pending_bodies_[source].push_back(std::move(pb));
}

bool Communicator::receive_one(std::vector<std::pair<int, Tag>>& skip) {
  auto pr = transport_.probe(skip);
  if (!pr)
    return false;
  switch (pr->tag) {
    case Tag::regular: {
      std::vector<std::byte> buf(pr->head_bytes);
      transport_.irecv(pr->source, pr->tag, buf, {});
      dispatch_regular(pr->source, buf);
      return true;
    }
    case Tag::large_header: {
      std::vector<std::byte> buf(pr->head_bytes);
      transport_.irecv(pr->source, pr->tag, buf, {});
      dispatch_large_header(pr->source, buf);
      return true;
    }
    case Tag::large_body: {
      auto& q = pending_bodies_[pr->source];
      if (q.empty()) {
        // Header still in flight on its own channel; come back for the
        // body once it has been processed.
        skip.emplace_back(pr->source, Tag::large_body);
        return true;
      }
      PendingBody pb = std::move(q.front());
      q.pop_front();
      if (pb.dest_buf.size() != pr->body_bytes)
        throw protocol_error("alloc_fn buffer does not match the body size");
      std::array<std::byte, body_prefix_bytes> prefix;
      transport_.irecv(pr->source, pr->tag, prefix,
                       std::span<std::byte>(pb.dest_buf.data(),
                                            pb.dest_buf.size()));
      std::uint64_t seq = codec::le_load<std::uint64_t>(prefix.data());
      if (seq != pb.seq)
        throw protocol_error("large-message body arrived out of order");
      pb.am->run_process(pb.header_payload);
      processed_.fetch_add(1);
      return true;
    }
  }
  return false;
}

bool Communicator::progress() {
  bool moved = false;

  // 1. Post queued sends.
  std::deque<SendRecord> batch;
  {
    std::lock_guard<std::mutex> lk(send_mu_);
    batch.swap(ready_sends_);
  }
  for (auto& rec : batch) {
    rec.h = transport_.isend(rec.dest, rec.tag, rec.head, rec.body);
    inflight_.push_back(std::move(rec));
    moved = true;
  }

  // 2. Reap finished sends.
  for (std::size_t i = 0; i < inflight_.size();) {
    if (transport_.test(inflight_[i].h)) {
      if (inflight_[i].completer != nullptr)
        inflight_[i].completer->run_complete();
      inflight_[i] = std::move(inflight_.back());
      inflight_.pop_back();
      moved = true;
    } else {
      ++i;
    }
  }

  transport_.poll();

  // 3. Receive and dispatch everything deliverable.
  std::vector<std::pair<int, Tag>> skip;
  while (receive_one(skip))
    moved = true;
  return moved;
}

void Communicator::flush() {
  while (sends_pending()) {
    if (!progress())
      std::this_thread::yield();
  }
}

}  // namespace weft
