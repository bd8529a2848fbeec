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

#include "weft/thread_pool.hpp"

#include <algorithm>
#include <stdexcept>

namespace weft {

namespace detail {
// Implemented with the shutdown protocol; runs the communication loop on
// the joining thread until every rank has agreed to stop.
void drive_until_shutdown(ThreadPool& pool, Communicator& comm);
}  // namespace detail

namespace {

struct TaskOrder {
  // Heap comparator: "less" means runs later. Higher priority first, then
  // lower seq.
  bool operator()(const TaskInstance& a, const TaskInstance& b) const {
    if (a.priority != b.priority)
      return a.priority < b.priority;
    return a.seq > b.seq;
  }
};

// True when a should run before b. Used for the cross-queue pick; the
// final bound-wins tiebreak is unreachable while seq values are unique but
// kept for completeness.
bool runs_before(const TaskInstance& a, const TaskInstance& b) {
  if (a.priority != b.priority)
    return a.priority > b.priority;
  return a.seq < b.seq;
}

struct ThreadSlot {
  const void* pool = nullptr;
  int id = -1;
};
thread_local ThreadSlot t_slot;

}  // namespace

struct ThreadPool::Worker {
  std::mutex mu;
  std::condition_variable cv;
  std::vector<TaskInstance> stealable;  // binary heaps via std::push_heap
  std::vector<TaskInstance> bound;
  std::deque<std::function<void()>> intake;
  std::atomic<bool> idle{true};
  std::vector<TaskTraceEntry> trace;
};

ThreadPool::ThreadPool(int n_threads, Communicator* comm, PoolConfig cfg)
    : n_threads_(n_threads), comm_(comm), cfg_(cfg) {
  if (n_threads < 1)
    throw std::invalid_argument("pool needs at least one thread");
  workers_.reserve(n_threads);
  for (int i = 0; i < n_threads; ++i)
    workers_.push_back(std::make_unique<Worker>());
}

ThreadPool::~ThreadPool() {
  if (started_ && !joined_) {
    // Emergency stop: callers are expected to join(); this only keeps a
    // thrown exception from taking the process down via std::terminate.
    stop_.store(true);
    for (auto& w : workers_)
      w->cv.notify_all();
    for (auto& t : threads_)
      if (t.joinable())
        t.join();
  }
}

void ThreadPool::start() {
  if (started_)
    throw std::logic_error("pool already started");
  started_ = true;
  threads_.reserve(n_threads_);
  for (int i = 0; i < n_threads_; ++i)
    threads_.emplace_back([this, i] { worker_loop(i); });
}

void ThreadPool::insert(TaskInstance t, int target) {
  if (target < 0 || target >= n_threads_)
    throw std::invalid_argument("insert target out of range");
  if (joined_)
    throw std::logic_error("insert after join");
  Worker& w = *workers_[target];
  {
    std::lock_guard<std::mutex> lk(w.mu);
    t.seq = seq_.fetch_add(1);
    auto& q = t.stealable ? w.stealable : w.bound;
    q.push_back(std::move(t));
    std::push_heap(q.begin(), q.end(), TaskOrder{});
    w.idle.store(false);
    epoch_.fetch_add(1);
  }
  w.cv.notify_one();
}

void ThreadPool::post_intake(int target, std::function<void()> action) {
  if (target < 0 || target >= n_threads_)
    throw std::invalid_argument("intake target out of range");
  Worker& w = *workers_[target];
  {
    std::lock_guard<std::mutex> lk(w.mu);
    w.intake.push_back(std::move(action));
    w.idle.store(false);
    epoch_.fetch_add(1);
  }
  w.cv.notify_one();
}

int ThreadPool::current_worker() const {
  return t_slot.pool == this ? t_slot.id : -1;
}

bool ThreadPool::all_idle() const {
  for (const auto& w : workers_)
    if (!w->idle.load())
      return false;
  return true;
}

bool ThreadPool::quiescent() const {
  std::uint64_t before = epoch_.load();
  if (!all_idle())
    return false;
  return epoch_.load() == before;
}

std::vector<TaskTraceEntry> ThreadPool::trace() const {
  std::vector<TaskTraceEntry> out;
  for (const auto& w : workers_)
    out.insert(out.end(), w->trace.begin(), w->trace.end());
  return out;
}

bool ThreadPool::try_pop_local(Worker& w, TaskInstance& out) {
  std::lock_guard<std::mutex> lk(w.mu);
  bool has_b = !w.bound.empty();
  bool has_s = !w.stealable.empty();
  if (!has_b && !has_s)
    return false;
  bool pick_bound =
      has_b && (!has_s || !runs_before(w.stealable.front(), w.bound.front()));
  auto& q = pick_bound ? w.bound : w.stealable;
  std::pop_heap(q.begin(), q.end(), TaskOrder{});
  out = std::move(q.back());
  q.pop_back();
  w.idle.store(false);
  return true;
}

bool ThreadPool::try_steal(int self, TaskInstance& out) {
  for (int off = 1; off < n_threads_; ++off) {
    Worker& v = *workers_[(self + off) % n_threads_];
    std::lock_guard<std::mutex> lk(v.mu);
    if (v.stealable.empty())
      continue;
    std::pop_heap(v.stealable.begin(), v.stealable.end(), TaskOrder{});
    out = std::move(v.stealable.back());
    v.stealable.pop_back();
    // Migration makes the victim's emptiness and our idle flag disagree for
    // a moment; the epoch bump keeps quiescent() honest across it.
    epoch_.fetch_add(1);
    return true;
  }
  return false;
}

void ThreadPool::run_task(int self, TaskInstance& t) {
  if (cfg_.enable_trace) {
    TaskTraceEntry e;
    e.label = std::move(t.label);
    e.thread = self;
    e.start = std::chrono::steady_clock::now();
    t.body();
    e.stop = std::chrono::steady_clock::now();
    workers_[self]->trace.push_back(std::move(e));
  } else {
    t.body();
  }
}

void ThreadPool::worker_loop(int self) {
  t_slot = {this, self};
  Worker& w = *workers_[self];
  int spins = 0;
  std::deque<std::function<void()>> batch;
  while (true) {
    {
      std::lock_guard<std::mutex> lk(w.mu);
      if (!w.intake.empty())
        batch.swap(w.intake);
    }
    if (!batch.empty()) {
      for (auto& a : batch)
        a();
      batch.clear();
      spins = 0;
    }

    TaskInstance t;
    bool got = try_pop_local(w, t);
    if (!got && n_threads_ > 1) {
      w.idle.store(false);
      got = try_steal(self, t);
    }
    if (got) {
      run_task(self, t);
      spins = 0;
      continue;
    }

    // Nothing anywhere. Mark idle only while provably empty locally.
    {
      std::lock_guard<std::mutex> lk(w.mu);
      if (!w.intake.empty() || !w.bound.empty() || !w.stealable.empty())
        continue;
      w.idle.store(true);
    }
    if (stop_.load()) {
      std::lock_guard<std::mutex> lk(w.mu);
      if (w.intake.empty() && w.bound.empty() && w.stealable.empty())
        return;
      continue;
    }
    if (spins < cfg_.spin_iterations) {
      ++spins;
      std::this_thread::yield();
      continue;
    }
    std::unique_lock<std::mutex> lk(w.mu);
    if (w.intake.empty() && w.bound.empty() && w.stealable.empty() &&
        !stop_.load())
      w.cv.wait_for(lk, cfg_.park_timeout);
    spins = 0;
  }
}

void ThreadPool::join() {
  if (!started_)
    throw std::logic_error("join before start");
  if (joined_)
    return;
  if (comm_ != nullptr) {
    detail::drive_until_shutdown(*this, *comm_);
  } else {
    while (!quiescent())
      std::this_thread::yield();
  }
  stop_.store(true);
  for (auto& w : workers_)
    w->cv.notify_all();
  for (auto& t : threads_)
    t.join();
  threads_.clear();
  joined_ = true;
}

}  // namespace weft
