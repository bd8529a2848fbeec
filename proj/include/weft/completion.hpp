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

#ifndef WEFT_COMPLETION_HPP
#define WEFT_COMPLETION_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "weft/messaging.hpp"

// Distributed shutdown detection. The program is finished exactly when
// every rank is idle and every queued user message has been processed;
// since no rank can see that directly, the runtime counts messages:
//
//   1. An idle rank whose (queued, processed) counters changed since its
//      last report sends COUNT(q, p) to rank 0.
//   2. Rank 0 tracks the per-rank maxima of received counts. Once every
//      rank has reported, the sums satisfy sum(q) == sum(p), and that sum
//      is new, it snapshots the counts and broadcasts REQUEST(counts, t)
//      with a fresh round number t.
//   3. A rank receiving the request confirms round t only if the recorded
//      counts for it still equal its current counters (tracking only the
//      largest round seen).
//   4. When all ranks confirm round t, rank 0 broadcasts SHUTDOWN.
//   5. A rank receiving SHUTDOWN stops its communication loop.
//
// The second phase is what makes this safe: between a rank's COUNT and
// its confirmation nothing changed on it, so one global instant existed
// at which all counters matched the snapshot, all ranks were idle, and
// (because the sums balance) no message was in flight.
//
// The state machines below are pure decision logic with no I/O, so the
// same code drives the real communication thread and the single-stepped
// simulator used to verify the protocol.

namespace weft {

namespace completion {

struct Counts {
  std::uint64_t queued = 0;
  std::uint64_t processed = 0;
  friend bool operator==(const Counts&, const Counts&) = default;
};

// Decision logic every rank runs (including rank 0 for itself).
class RankState {
 public:
  // Step 1: counts to report now, if idle and changed since the last
  // report. Idleness must be sampled before `now` so the counters cannot
  // have moved in between.
  std::optional<Counts> maybe_count(bool idle, Counts now) {
    if (!idle || (last_sent_ && *last_sent_ == now))
      return std::nullopt;
    last_sent_ = now;
    return now;
  }

  // Step 3 input. Only the largest round is kept.
  void on_request(std::uint64_t round, std::vector<Counts> recorded) {
    if (!pending_ || pending_->first < round)
      pending_ = {round, std::move(recorded)};
  }

  // Step 3 output: the round to confirm, if the pending request's entry
  // for this rank still matches. A mismatch discards the request: the
  // counters are monotone, so they can never match that snapshot again.
  std::optional<std::uint64_t> maybe_confirm(int my_rank, Counts now) {
    if (!pending_)
      return std::nullopt;
    auto [round, recorded] = std::move(*pending_);
    pending_.reset();
    if (my_rank < static_cast<int>(recorded.size()) &&
        recorded[my_rank] == now)
      return round;
    return std::nullopt;
  }

  void on_shutdown() { shutdown_ = true; }
  bool shutdown_received() const { return shutdown_; }

  bool has_pending_request() const { return pending_.has_value(); }
  const std::vector<Counts>& pending_recorded() const {
    return pending_->second;
  }

 private:
  std::optional<Counts> last_sent_;
  std::optional<std::pair<std::uint64_t, std::vector<Counts>>> pending_;
  bool shutdown_ = false;
};

// Rank 0's tally. Counts are merged as componentwise running maxima,
// which (with per-channel FIFO delivery) is simply the latest report.
class RootState {
 public:
  explicit RootState(int n_ranks)
      : best_(n_ranks), confirmed_(n_ranks, 0) {}

  void on_count(int rank, Counts c) {
    auto& b = best_[rank];
    if (!b)
      b = c;
    else {
      b->queued = std::max(b->queued, c.queued);
      b->processed = std::max(b->processed, c.processed);
    }
  }

  // Step 2: a new round's snapshot, or nothing. Requires a report from
  // every rank: the snapshot must consist of idle-time counts only, and a
  // fabricated (0,0) for a silent rank could match a rank that merely has
  // not sent anything yet.
  std::optional<std::pair<std::uint64_t, std::vector<Counts>>>
  maybe_request() {
    if (shutdown_sent_)
      return std::nullopt;
    std::uint64_t sq = 0, sp = 0;
    std::vector<Counts> snap;
    snap.reserve(best_.size());
    for (const auto& b : best_) {
      if (!b)
        return std::nullopt;
      sq += b->queued;
      sp += b->processed;
      snap.push_back(*b);
    }
    if (sq != sp || (last_request_sum_ && *last_request_sum_ == sq))
      return std::nullopt;
    last_request_sum_ = sq;
    ++round_;
    std::fill(confirmed_.begin(), confirmed_.end(), 0);
    n_confirmed_ = 0;
    return {{round_, std::move(snap)}};
  }

  // Step 4 input; stale rounds are ignored.
  void on_confirmation(std::uint64_t round, int rank) {
    if (round != round_ || confirmed_[rank])
      return;
    confirmed_[rank] = 1;
    ++n_confirmed_;
  }

  bool all_confirmed() const {
    return round_ > 0 && n_confirmed_ == static_cast<int>(confirmed_.size());
  }

  void mark_shutdown_sent() { shutdown_sent_ = true; }
  bool shutdown_sent() const { return shutdown_sent_; }
  std::uint64_t round() const { return round_; }

 private:
  std::vector<std::optional<Counts>> best_;
  std::vector<char> confirmed_;
  int n_confirmed_ = 0;
  std::uint64_t round_ = 0;
  std::optional<std::uint64_t> last_request_sum_;
  bool shutdown_sent_ = false;
};

}  // namespace completion

// Runs the shutdown protocol over a communicator. Construct before the
// first progress() call; step() belongs to the communication thread,
// between progress passes.
class CompletionDriver {
 public:
  struct StepReport {
    bool sent_count = false;
    bool sent_confirmation = false;
    bool sent_request = false;
    bool broadcast_shutdown = false;
    bool any() const {
      return sent_count || sent_confirmation || sent_request ||
             broadcast_shutdown;
    }
  };

  struct TraceEvent {
    enum Kind { count, request, confirmation, shutdown } kind;
    bool received = false;       // false: this driver sent it
    int source = -1;             // sending rank
    completion::Counts counts;   // count events
    std::uint64_t round = 0;     // request / confirmation events
    std::vector<completion::Counts> snapshot;  // request events
  };

  CompletionDriver(Communicator& comm, std::function<bool()> idle);

  StepReport step();

  bool shutdown_received() const { return rank_.shutdown_received(); }
  const completion::RankState& rank_state() const { return rank_; }
  const completion::RootState* root_state() const { return root_.get(); }

  // Receives every protocol message this driver sends or handles.
  void set_trace(std::function<void(const TraceEvent&)> sink) {
    trace_ = std::move(sink);
  }

 private:
  static constexpr std::uint32_t slot_count = 0;
  static constexpr std::uint32_t slot_request = 1;
  static constexpr std::uint32_t slot_confirmation = 2;
  static constexpr std::uint32_t slot_shutdown = 3;

  void emit(const TraceEvent& e) {
    if (trace_)
      trace_(e);
  }

  Communicator& comm_;
  std::function<bool()> idle_;
  completion::RankState rank_;
  std::unique_ptr<completion::RootState> root_;
  std::function<void(const TraceEvent&)> trace_;
};

}  // namespace weft

#endif  // WEFT_COMPLETION_HPP
