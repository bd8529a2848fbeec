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

#ifndef WEFT_TASKFLOW_HPP
#define WEFT_TASKFLOW_HPP

#include <atomic>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "weft/messaging.hpp"
#include "weft/thread_pool.hpp"

namespace weft {

// A task graph described by functions over a key space instead of stored
// nodes. Nothing is allocated for a task until its first dependency is
// fulfilled; a small map entry holds the countdown until the last one, at
// which point the entry is erased and the task goes to the pool. Task k
// runs on worker mapping(k), which also owns k's map entry: all countdown
// updates happen on that worker (cross-thread fulfills hop through its
// intake mailbox), so the per-worker maps need no locks.
//
// All key functions must be pure. indegree(k) must be at least 1 and
// exact: task k runs after exactly indegree(k) fulfill_promise(k) calls,
// and fulfilling a key beyond that corrupts the countdown (detectable with
// track_fired).
template <typename K>
class Taskflow {
 public:
  // track_fired keeps a tombstone per fired key so over-fulfilling is
  // caught instead of silently re-arming the task. Costs memory linear in
  // the number of keys; meant for tests and debugging.
  explicit Taskflow(ThreadPool* pool, bool track_fired = false)
      : pool_(pool), track_fired_(track_fired) {
    if (pool == nullptr)
      throw std::invalid_argument("taskflow needs a pool");
    shards_.resize(pool->n_threads());
  }

  Taskflow(const Taskflow&) = delete;
  Taskflow& operator=(const Taskflow&) = delete;

  Taskflow& set_task(std::function<void(K)> f) {
    run_ = std::move(f);
    return *this;
  }
  Taskflow& set_indegree(std::function<int(K)> f) {
    indegree_ = std::move(f);
    return *this;
  }
  Taskflow& set_mapping(std::function<int(K)> f) {
    mapping_ = std::move(f);
    return *this;
  }
  Taskflow& set_priority(std::function<double(K)> f) {
    priority_ = std::move(f);
    return *this;
  }
  // True binds task k to worker mapping(k); default leaves it stealable.
  Taskflow& set_binding(std::function<bool(K)> f) {
    binding_ = std::move(f);
    return *this;
  }
  Taskflow& set_name(std::function<std::string(K)> f) {
    name_ = std::move(f);
    return *this;
  }

  // Opens this taskflow to fulfills from other ranks by registering an
  // active message whose handler fulfills locally. Every rank must share
  // its taskflows in the same order (ids must line up), before any send.
  Taskflow& share(Communicator& comm) {
    if (remote_ != nullptr)
      throw std::logic_error("taskflow is already shared");
    remote_ = comm.make_active_msg<K>([this](K k) { fulfill_promise(k); });
    return *this;
  }

  // Counts one dependency of k as satisfied; the indegree(k)-th call
  // queues the task. Callable from anywhere: task bodies, message
  // handlers, or the main thread before start().
  void fulfill_promise(K k) {
    if (!run_ || !indegree_ || !mapping_)
      throw std::logic_error("task, indegree and mapping must be set first");
    int owner = mapping_(k);
    if (owner < 0 || owner >= pool_->n_threads())
      throw std::invalid_argument("mapping sent a key outside the pool");
    int d = indegree_(k);
    if (d < 1)
      throw std::invalid_argument("indegree must be at least 1");
    if (pool_->current_worker() == owner)
      apply(k, owner, d);
    else
      pool_->post_intake(owner, [this, k, owner, d] { apply(k, owner, d); });
  }

  // Counts one dependency of k on rank dest, which may be this rank; the
  // key takes a message round-trip either way. Requires share().
  void fulfill_promise(K k, int dest) {
    if (remote_ == nullptr)
      throw std::logic_error("taskflow is not shared over a communicator");
    remote_->send(dest, k);
  }

  // Set after a fulfill hit a key that already fired (track_fired mode).
  bool overfulfill_detected() const { return overfulfill_.load(); }

  // Keys currently waiting on further fulfills. Only meaningful while the
  // pool is quiescent; not synchronized against running workers.
  std::size_t resident_keys() const {
    std::size_t n = 0;
    for (const auto& s : shards_)
      for (const auto& [k, remaining] : s)
        if (remaining != fired_sentinel)
          ++n;
    return n;
  }

 private:
  static constexpr int fired_sentinel = -1;

  void apply(K k, int owner, int d) {
    auto& shard = shards_[owner];
    auto it = shard.find(k);
    if (it == shard.end()) {
      if (d == 1)
        fire(k, owner, shard);
      else
        shard.emplace(k, d - 1);
      return;
    }
    if (it->second == fired_sentinel) {
      // apply() always runs on a worker thread, so flag instead of throw.
      overfulfill_.store(true);
      return;
    }
    if (--it->second == 0) {
      shard.erase(it);
      fire(k, owner, shard);
    }
  }

  void fire(K k, int owner, std::map<K, int>& shard) {
    TaskInstance t;
    t.body = [this, k] { run_(k); };
    t.priority = priority_ ? priority_(k) : 0.0;
    t.stealable = binding_ ? !binding_(k) : true;
    if (name_)
      t.label = name_(k);
    if (track_fired_)
      shard.emplace(k, fired_sentinel);
    pool_->insert(std::move(t), owner);
  }

  ThreadPool* pool_;
  bool track_fired_;
  std::vector<std::map<K, int>> shards_;
  std::function<void(K)> run_;
  std::function<int(K)> indegree_;
  std::function<int(K)> mapping_;
  std::function<double(K)> priority_;
  std::function<bool(K)> binding_;
  std::function<std::string(K)> name_;
  ActiveMsg<K>* remote_ = nullptr;
  std::atomic<bool> overfulfill_{false};
};

}  // namespace weft

#endif  // WEFT_TASKFLOW_HPP
