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

#ifndef WEFT_THREAD_POOL_HPP
#define WEFT_THREAD_POOL_HPP

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "weft/task.hpp"

namespace weft {

class Communicator;

struct PoolConfig {
  bool enable_trace = false;
  // Failed acquire attempts (with yields) before a worker parks on its
  // condition variable.
  int spin_iterations = 64;
  // Parked workers also wake on this timeout so they can steal work that
  // appeared on other queues.
  std::chrono::microseconds park_timeout{500};
};

// Work-stealing pool. Each worker owns a stealable and a bound priority
// queue plus an intake mailbox of deferred actions (used for cross-thread
// dependency updates: only the owning worker touches its dependency shard).
//
// Pop order is priority descending, then insertion sequence ascending;
// when both local heads tie on that order the bound task wins. A worker out
// of local work scans the other stealable queues starting at the next
// worker id and takes the first head it finds.
class ThreadPool {
 public:
  explicit ThreadPool(int n_threads, Communicator* comm = nullptr,
                      PoolConfig cfg = {});
  ~ThreadPool();

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  void start();

  // Queues a task on worker `target`. Callable from any thread, including
  // task bodies and message handlers.
  void insert(TaskInstance t, int target);

  // Queues an action the target worker runs before picking its next task.
  // Actions are not tasks: they never migrate and bypass the priority
  // queues.
  void post_intake(int target, std::function<void()> action);

  // Blocks until all work (local and, with a communicator attached,
  // distributed) is finished, then stops the workers. With a communicator
  // the calling thread becomes the communication thread, driving message
  // progress and the shutdown protocol until every rank agrees the program
  // is done. Idempotent after the first return.
  void join();

  int n_threads() const { return n_threads_; }
  Communicator* communicator() const { return comm_; }

  // Worker id when called on a pool thread, -1 otherwise.
  int current_worker() const;

  // True when every worker's queues and mailbox were empty at the sampling
  // instant. Pair with work_epoch() for a race-free emptiness check.
  bool all_idle() const;

  // Counter bumped by every insert, intake post, and steal. If it reads
  // equal around an all_idle() scan, no work existed anywhere during the
  // scan.
  std::uint64_t work_epoch() const { return epoch_.load(); }

  bool quiescent() const;

  // Per-task records in execution order per worker; stable after join()
  // when tracing is enabled.
  std::vector<TaskTraceEntry> trace() const;

 private:
  struct Worker;

  bool try_pop_local(Worker& w, TaskInstance& out);
  bool try_steal(int self, TaskInstance& out);
  void run_task(int self, TaskInstance& t);
  void worker_loop(int self);

  int n_threads_;
  Communicator* comm_;
  PoolConfig cfg_;
  std::vector<std::unique_ptr<Worker>> workers_;
  std::vector<std::thread> threads_;
  std::atomic<std::uint64_t> seq_{0};
  std::atomic<std::uint64_t> epoch_{0};
  std::atomic<bool> stop_{false};
  bool started_ = false;
  bool joined_ = false;
};

}  // namespace weft

#endif  // WEFT_THREAD_POOL_HPP
