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

#include "weft/bench.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <mutex>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>

#include "weft/loopback.hpp"
#include "weft/messaging.hpp"
#include "weft/taskflow.hpp"
#include "weft/thread_pool.hpp"

namespace weft::bench {

namespace {

using clock_t_ = std::chrono::steady_clock;

double seconds_since(clock_t_::time_point t0) {
  return std::chrono::duration<double>(clock_t_::now() - t0).count();
}

// CPU-bound by design: sleeping would hide scheduler overhead instead of
// competing with it.
void spin_for(double seconds) {
  auto until = clock_t_::now() + std::chrono::duration_cast<clock_t_::duration>(
                                     std::chrono::duration<double>(seconds));
  while (clock_t_::now() < until) {
  }
}

double efficiency(double spin_seconds, std::uint64_t n_tasks, int n_threads,
                  double run_seconds) {
  double ideal = spin_seconds * static_cast<double>(n_tasks) / n_threads;
  return ideal / std::max(run_seconds, 1e-12);
}

}  // namespace

// ---- kernels ---------------------------------------------------------------

bool potrf_block(int b, double* a) {
  for (int j = 0; j < b; ++j) {
    double d = a[j * b + j];
    for (int k = 0; k < j; ++k)
      d -= a[j * b + k] * a[j * b + k];
    if (!(d > 0.0))
      return false;
    d = std::sqrt(d);
    a[j * b + j] = d;
    for (int i = j + 1; i < b; ++i) {
      double s = a[i * b + j];
      for (int k = 0; k < j; ++k)
        s -= a[i * b + k] * a[j * b + k];
      a[i * b + j] = s / d;
    }
    for (int k = j + 1; k < b; ++k)
      a[j * b + k] = 0.0;  // leave a clean triangular factor
  }
  return true;
}

void trsm_block(int b, const double* l, double* a) {
  for (int r = 0; r < b; ++r)
    for (int c = 0; c < b; ++c) {
      double s = a[r * b + c];
      for (int t = 0; t < c; ++t)
        s -= a[r * b + t] * l[c * b + t];
      a[r * b + c] = s / l[c * b + c];
    }
}

void gemm_nt_block(int b, const double* x, const double* y, double* c) {
  for (int r = 0; r < b; ++r)
    for (int col = 0; col < b; ++col) {
      double s = 0.0;
      for (int t = 0; t < b; ++t)
        s += x[r * b + t] * y[col * b + t];
      c[r * b + col] -= s;
    }
}

void gemm_nn_block(int b, const double* x, const double* y, double* c) {
  for (int r = 0; r < b; ++r)
    for (int col = 0; col < b; ++col) {
      double s = 0.0;
      for (int t = 0; t < b; ++t)
        s += x[r * b + t] * y[t * b + col];
      c[r * b + col] += s;
    }
}

// ---- distribution and data -------------------------------------------------

RankGrid::RankGrid(int n_ranks) {
  if (n_ranks < 1)
    throw std::invalid_argument("rank grid needs at least one rank");
  for (int d = 1; d * d <= n_ranks; ++d)
    if (n_ranks % d == 0)
      p = d;
  q = n_ranks / p;
}

std::vector<double> random_block(std::uint64_t seed, std::uint32_t stream,
                                 int i, int j, int b) {
  std::seed_seq sq{static_cast<std::uint32_t>(seed),
                   static_cast<std::uint32_t>(seed >> 32), stream,
                   static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)};
  std::mt19937_64 gen(sq);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> out(static_cast<std::size_t>(b) * b);
  for (double& x : out)
    x = u(gen);
  return out;
}

std::vector<double> spd_block(std::uint64_t seed, int i, int j, int b,
                              int n_blocks) {
  std::vector<double> out(static_cast<std::size_t>(b) * b, 0.0);
  for (int k = 0; k < n_blocks; ++k) {
    auto mi = random_block(seed, 'M', i, k, b);
    auto mj = random_block(seed, 'M', j, k, b);
    for (int r = 0; r < b; ++r)
      for (int c = 0; c < b; ++c) {
        double s = 0.0;
        for (int t = 0; t < b; ++t)
          s += mi[r * b + t] * mj[c * b + t];
        out[r * b + c] += s;
      }
  }
  if (i == j) {
    // Diagonal shift by the matrix size keeps the spectrum safely positive.
    double shift = static_cast<double>(n_blocks) * b;
    for (int r = 0; r < b; ++r)
      out[r * b + r] += shift;
  }
  return out;
}

BlockMap cholesky_reference(std::uint64_t seed, int N, int b) {
  int n = N / b;
  BlockMap full;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j)
      full[{i, j}] = spd_block(seed, i, j, b, n);
  for (int j = 0; j < n; ++j) {
    for (int i = j; i < n; ++i)
      for (int k = 0; k < j; ++k)
        gemm_nt_block(b, full.at({i, k}).data(), full.at({j, k}).data(),
                      full.at({i, j}).data());
    if (!potrf_block(b, full.at({j, j}).data()))
      throw std::runtime_error("reference factorization hit a nonpositive "
                               "pivot in diagonal block " +
                               std::to_string(j));
    for (int i = j + 1; i < n; ++i)
      trsm_block(b, full.at({j, j}).data(), full.at({i, j}).data());
  }
  return full;
}

double cholesky_residual(const BlockMap& factor, std::uint64_t seed, int N,
                         int b) {
  int n = N / b;
  // Assemble the factor densely; diagonal blocks are already upper-zeroed.
  std::vector<double> L(static_cast<std::size_t>(N) * N, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      const auto& blk = factor.at({i, j});
      for (int r = 0; r < b; ++r)
        for (int c = 0; c < b; ++c)
          L[static_cast<std::size_t>(i * b + r) * N + j * b + c] =
              blk[r * b + c];
    }
  double a_max = 0.0, r_max = 0.0;
  for (int bi = 0; bi < n; ++bi)
    for (int bj = 0; bj <= bi; ++bj) {
      auto a = spd_block(seed, bi, bj, b, n);
      for (int r = 0; r < b; ++r)
        for (int c = 0; c < b; ++c) {
          double v = 0.0;
          const double* row_i = &L[static_cast<std::size_t>(bi * b + r) * N];
          const double* row_j = &L[static_cast<std::size_t>(bj * b + c) * N];
          for (int t = 0; t < N; ++t)
            v += row_i[t] * row_j[t];
          a_max = std::max(a_max, std::abs(a[r * b + c]));
          r_max = std::max(r_max, std::abs(a[r * b + c] - v));
        }
    }
  return r_max / a_max;
}

// ---- spin benchmarks -------------------------------------------------------

SpinResult bench_nodeps(int n_threads, int n_tasks, double spin_seconds,
                        bool trace) {
  if (n_threads < 1 || n_tasks < 1 || spin_seconds < 0)
    throw std::invalid_argument("nodeps needs threads >= 1, tasks >= 1, "
                                "nonnegative spin");
  SpinResult out;
  out.tasks_run = static_cast<std::uint64_t>(n_tasks);

  auto one_pass = [&](bool timed_insertion) {
    PoolConfig cfg;
    cfg.enable_trace = trace && !timed_insertion;
    ThreadPool pool(n_threads, nullptr, cfg);
    Taskflow<int> tf(&pool);
    std::atomic<std::uint64_t> ran{0};
    tf.set_task([&](int) {
        spin_for(spin_seconds);
        ran.fetch_add(1, std::memory_order_relaxed);
      })
        .set_indegree([](int) { return 1; })
        .set_mapping([n_threads](int k) { return k % n_threads; });
    if (cfg.enable_trace)
      tf.set_name([](int k) { return "spin " + std::to_string(k); });

    if (timed_insertion) {
      auto t0 = clock_t_::now();
      pool.start();
      auto i0 = clock_t_::now();
      for (int k = 0; k < n_tasks; ++k)
        tf.fulfill_promise(k);
      out.insert_seconds = seconds_since(i0);
      pool.join();
      out.run_timed_seconds = seconds_since(t0);
    } else {
      for (int k = 0; k < n_tasks; ++k)
        tf.fulfill_promise(k);  // queued while the workers are still down
      auto t0 = clock_t_::now();
      pool.start();
      pool.join();
      out.run_untimed_seconds = seconds_since(t0);
      if (cfg.enable_trace)
        out.trace = pool.trace();
    }
    if (ran.load() != static_cast<std::uint64_t>(n_tasks))
      throw std::runtime_error("nodeps task count mismatch");
  };

  one_pass(/*timed_insertion=*/false);
  one_pass(/*timed_insertion=*/true);
  out.efficiency_timed =
      efficiency(spin_seconds, out.tasks_run, n_threads, out.run_timed_seconds);
  out.efficiency_untimed = efficiency(spin_seconds, out.tasks_run, n_threads,
                                      out.run_untimed_seconds);
  return out;
}

GridResult bench_deps(int n_threads, int nrows, int ncols, int ndeps,
                      double spin_seconds, bool trace) {
  if (n_threads < 1 || nrows < 1 || ncols < 1 || spin_seconds < 0)
    throw std::invalid_argument("deps needs threads, rows, columns >= 1 and "
                                "nonnegative spin");
  if (ndeps < 1 || ndeps > nrows)
    throw std::invalid_argument("ndeps must be between 1 and nrows");

  PoolConfig cfg;
  cfg.enable_trace = trace;
  ThreadPool pool(n_threads, nullptr, cfg);
  Taskflow<std::array<int, 2>> tf(&pool);
  std::atomic<std::uint64_t> ran{0};
  tf.set_task([&](std::array<int, 2> t) {
      auto [i, j] = t;
      spin_for(spin_seconds);
      ran.fetch_add(1, std::memory_order_relaxed);
      if (j + 1 < ncols)
        for (int k = 0; k < ndeps; ++k)
          tf.fulfill_promise({(i + k) % nrows, j + 1});
    })
      .set_indegree([ndeps](std::array<int, 2> t) {
        return t[1] == 0 ? 1 : ndeps;
      })
      .set_mapping([n_threads](std::array<int, 2> t) {
        return t[0] % n_threads;
      });
  if (trace)
    tf.set_name([](std::array<int, 2> t) {
      return "grid " + std::to_string(t[0]) + " " + std::to_string(t[1]);
    });

  for (int i = 0; i < nrows; ++i)
    tf.fulfill_promise({i, 0});
  auto t0 = clock_t_::now();
  pool.start();
  pool.join();

  GridResult out;
  out.run_seconds = seconds_since(t0);
  out.tasks_run = ran.load();
  std::uint64_t expect =
      static_cast<std::uint64_t>(nrows) * static_cast<std::uint64_t>(ncols);
  if (out.tasks_run != expect)
    throw std::runtime_error("deps grid ran " + std::to_string(out.tasks_run) +
                             " of " + std::to_string(expect) + " tasks");
  out.efficiency =
      efficiency(spin_seconds, out.tasks_run, n_threads, out.run_seconds);
  if (trace)
    out.trace = pool.trace();
  return out;
}

// ---- distributed GEMM ------------------------------------------------------

GemmRankOutcome run_gemm_rank(Transport& tr, int n_threads, int N, int b,
                              std::uint64_t seed) {
  if (n_threads < 1)
    throw std::invalid_argument("at least one thread per rank");
  if (b < 1 || N % b != 0)
    throw std::invalid_argument("N must be a positive multiple of the block "
                                "size");
  const int n = N / b;
  const int me = tr.rank();
  const RankGrid grid(tr.n_ranks());

  // Owned inputs and outputs. C follows the same layout as the inputs.
  BlockMap a_blocks, b_blocks, c_blocks;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (grid.owner(i, j) != me)
        continue;
      a_blocks[{i, j}] = random_block(seed, 'A', i, j, b);
      b_blocks[{i, j}] = random_block(seed, 'B', i, j, b);
      c_blocks[{i, j}] =
          std::vector<double>(static_cast<std::size_t>(b) * b, 0.0);
    }

  // Input blocks that arrived from other ranks, keyed (which, i, j) with
  // which 0 = A, 1 = B. The comm thread inserts, workers read.
  std::mutex cache_mu;
  std::map<std::tuple<int, int, int>, std::vector<double>> cache;

  Communicator comm(tr);
  ThreadPool pool(n_threads, &comm);
  Taskflow<std::array<int, 3>> tf(&pool);  // {i, k, j}: C_ij += A_ik B_kj

  auto input = [&](int which, int i, int j) -> const double* {
    const BlockMap& own = which == 0 ? a_blocks : b_blocks;
    auto it = own.find({i, j});
    if (it != own.end())
      return it->second.data();
    std::lock_guard<std::mutex> lk(cache_mu);
    return cache.at({which, i, j}).data();
  };

  std::atomic<std::uint64_t> tasks_run{0};
  tf.set_task([&](std::array<int, 3> t) {
      auto [i, k, j] = t;
      gemm_nn_block(b, input(0, i, k), input(1, k, j),
                    c_blocks.at({i, j}).data());
      tasks_run.fetch_add(1, std::memory_order_relaxed);
      if (k + 1 < n)
        tf.fulfill_promise({i, k + 1, j});  // fixed summation order per C_ij
    })
      .set_indegree([](std::array<int, 3> t) { return t[1] == 0 ? 2 : 3; })
      .set_mapping([n_threads](std::array<int, 3> t) {
        return (t[0] + t[2]) % n_threads;
      })
      .set_priority([](std::array<int, 3> t) {
        return static_cast<double>(t[1]);
      });

  // One arrived (or locally available) input block releases every task
  // here that multiplies it.
  auto release = [&](int which, int bi, int bj) {
    if (which == 0) {  // A_ik feeds row bi of C
      for (int j = 0; j < n; ++j)
        if (grid.owner(bi, j) == me)
          tf.fulfill_promise({bi, bj, j});
    } else {  // B_kj feeds column bj of C
      for (int i = 0; i < n; ++i)
        if (grid.owner(i, bj) == me)
          tf.fulfill_promise({i, bi, bj});
    }
  };

  auto* ship = comm.make_large_active_msg<int, int, int>(
      [&](int which, int i, int j) {
        std::lock_guard<std::mutex> lk(cache_mu);
        auto& buf = cache[{which, i, j}];
        buf.resize(static_cast<std::size_t>(b) * b);
        return make_view(buf);
      },
      [&](int which, int i, int j) { release(which, i, j); },
      [] {});

  auto t0 = clock_t_::now();
  pool.start();

  // Ship every owned input block to each rank that multiplies it.
  auto broadcast_input = [&](int which, const BlockMap& own) {
    for (const auto& [ij, blk] : own) {
      auto [bi, bj] = ij;
      std::set<int> dests;
      if (which == 0)
        for (int j = 0; j < n; ++j)
          dests.insert(grid.owner(bi, j));
      else
        for (int i = 0; i < n; ++i)
          dests.insert(grid.owner(i, bj));
      for (int d : dests) {
        if (d == me)
          release(which, bi, bj);
        else
          ship->send(d, make_view(blk), which, bi, bj);
      }
    }
  };
  broadcast_input(0, a_blocks);
  broadcast_input(1, b_blocks);

  pool.join();

  GemmRankOutcome out;
  out.run_seconds = seconds_since(t0);
  out.tasks_run = tasks_run.load();

  // Direct-multiply oracle over the owned output blocks, regenerating
  // remote inputs and accumulating in the same k order.
  std::vector<double> ref(static_cast<std::size_t>(b) * b);
  for (const auto& [ij, cblk] : c_blocks) {
    auto [i, j] = ij;
    std::fill(ref.begin(), ref.end(), 0.0);
    for (int k = 0; k < n; ++k) {
      auto ak = random_block(seed, 'A', i, k, b);
      auto bk = random_block(seed, 'B', k, j, b);
      gemm_nn_block(b, ak.data(), bk.data(), ref.data());
    }
    for (std::size_t x = 0; x < ref.size(); ++x)
      out.max_abs_err = std::max(out.max_abs_err, std::abs(cblk[x] - ref[x]));
  }
  return out;
}

namespace {

// Runs one body per rank on its own thread over a shared loopback fabric.
// A body that throws after its pool joined is reported; the first
// exception wins.
void run_rank_threads(int n_ranks, const std::function<void(int)>& body) {
  std::vector<std::thread> ranks;
  std::mutex err_mu;
  std::exception_ptr first_error;
  for (int r = 0; r < n_ranks; ++r)
    ranks.emplace_back([&, r] {
      try {
        body(r);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!first_error)
          first_error = std::current_exception();
      }
    });
  for (auto& t : ranks)
    t.join();
  if (first_error)
    std::rethrow_exception(first_error);
}

void validate_world(int n_ranks, int n_threads, int N, int b) {
  if (n_ranks < 1)
    throw std::invalid_argument("at least one rank");
  if (n_threads < 1)
    throw std::invalid_argument("at least one thread per rank");
  if (b < 1 || N % b != 0)
    throw std::invalid_argument("N must be a positive multiple of the block "
                                "size");
}

}  // namespace

GemmResult bench_gemm2d(int n_ranks, int n_threads, int N, int b,
                        std::uint64_t seed) {
  validate_world(n_ranks, n_threads, N, b);
  LoopbackFabric fab(n_ranks);
  std::vector<GemmRankOutcome> outs(n_ranks);
  run_rank_threads(n_ranks, [&](int r) {
    LoopbackTransport rank_tr(fab, r);
    outs[r] = run_gemm_rank(rank_tr, n_threads, N, b, seed);
  });

  GemmResult out;
  for (const auto& o : outs) {
    out.run_seconds = std::max(out.run_seconds, o.run_seconds);
    out.max_abs_err = std::max(out.max_abs_err, o.max_abs_err);
    out.tasks_run += o.tasks_run;
  }
  return out;
}

// ---- distributed Cholesky --------------------------------------------------

CholeskyRankOutcome run_cholesky_rank(Transport& tr, int n_threads, int N,
                                      int b, std::uint64_t seed) {
  if (n_threads < 1)
    throw std::invalid_argument("at least one thread per rank");
  if (b < 1 || N % b != 0)
    throw std::invalid_argument("N must be a positive multiple of the block "
                                "size");
  const int n = N / b;
  const int me = tr.rank();
  const RankGrid grid(tr.n_ranks());

  // Owned blocks of the lower triangle, factored in place.
  BlockMap mine;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j)
      if (grid.owner(i, j) == me)
        mine[{i, j}] = spd_block(seed, i, j, b, n);

  // Factor blocks received from other ranks, keyed (i, j).
  std::mutex cache_mu;
  BlockMap cache;

  Communicator comm(tr);
  ThreadPool pool(n_threads, &comm);
  Taskflow<int> potrf_tf(&pool);                  // j: factor diagonal j
  Taskflow<std::array<int, 2>> trsm_tf(&pool);    // {i, j}: panel solve
  Taskflow<std::array<int, 3>> gemm_tf(&pool);    // {k, i, j}: A_ij -= L_ik L_jk^T

  auto factor_block = [&](int i, int j) -> const double* {
    if (grid.owner(i, j) == me)
      return mine.at({i, j}).data();
    std::lock_guard<std::mutex> lk(cache_mu);
    return cache.at({i, j}).data();
  };

  // Finished factor block (bi, bj) releases the tasks here that read it:
  // a diagonal block feeds the panel under it, a panel block feeds the
  // trailing updates it multiplies into.
  auto release = [&](int bi, int bj) {
    if (bi == bj) {
      for (int i = bj + 1; i < n; ++i)
        if (grid.owner(i, bj) == me)
          trsm_tf.fulfill_promise({i, bj});
    } else {
      for (int c = bj + 1; c <= bi; ++c)
        if (grid.owner(bi, c) == me)
          gemm_tf.fulfill_promise({bj, bi, c});
      for (int r = bi + 1; r < n; ++r)
        if (grid.owner(r, bi) == me)
          gemm_tf.fulfill_promise({bj, r, bi});
    }
  };

  auto* ship = comm.make_large_active_msg<int, int>(
      [&](int i, int j) {
        std::lock_guard<std::mutex> lk(cache_mu);
        auto& buf = cache[{i, j}];
        buf.resize(static_cast<std::size_t>(b) * b);
        return make_view(buf);
      },
      [&](int i, int j) { release(i, j); },
      [] {});

  // Sends the finished block (bi, bj) to every rank with a consumer task,
  // releasing local consumers directly.
  auto distribute = [&](int bi, int bj) {
    std::set<int> dests;
    if (bi == bj)
      for (int i = bj + 1; i < n; ++i)
        dests.insert(grid.owner(i, bj));
    else {
      for (int c = bj + 1; c <= bi; ++c)
        dests.insert(grid.owner(bi, c));
      for (int r = bi + 1; r < n; ++r)
        dests.insert(grid.owner(r, bi));
    }
    for (int d : dests) {
      if (d == me)
        release(bi, bj);
      else
        ship->send(d, make_view(mine.at({bi, bj})), bi, bj);
    }
  };

  std::atomic<std::uint64_t> potrf_n{0}, trsm_n{0}, gemm_n{0};
  std::atomic<int> bad_pivot_block{-1};

  potrf_tf
      .set_task([&](int j) {
        potrf_n.fetch_add(1, std::memory_order_relaxed);
        if (!potrf_block(b, mine.at({j, j}).data()))
          bad_pivot_block.store(j);
        distribute(j, j);
      })
      .set_indegree([](int) { return 1; })
      .set_mapping([n_threads](int j) { return j % n_threads; })
      .set_priority([](int j) { return 3.0 * j + 2.0; });

  trsm_tf
      .set_task([&](std::array<int, 2> t) {
        auto [i, j] = t;
        trsm_n.fetch_add(1, std::memory_order_relaxed);
        trsm_block(b, factor_block(j, j), mine.at({i, j}).data());
        distribute(i, j);
      })
      .set_indegree([](std::array<int, 2> t) { return t[1] == 0 ? 1 : 2; })
      .set_mapping([n_threads](std::array<int, 2> t) {
        return (t[0] + t[1]) % n_threads;
      })
      .set_priority([](std::array<int, 2> t) { return 3.0 * t[1] + 1.0; });

  gemm_tf
      .set_task([&](std::array<int, 3> t) {
        auto [k, i, j] = t;
        gemm_n.fetch_add(1, std::memory_order_relaxed);
        gemm_nt_block(b, factor_block(i, k), factor_block(j, k),
                      mine.at({i, j}).data());
        if (k + 1 < j)
          gemm_tf.fulfill_promise({k + 1, i, j});
        else if (i == j)
          potrf_tf.fulfill_promise(j);  // last update on the diagonal
        else
          trsm_tf.fulfill_promise({i, j});
      })
      .set_indegree([](std::array<int, 3> t) {
        return (t[1] == t[2] ? 1 : 2) + (t[0] > 0 ? 1 : 0);
      })
      .set_mapping([n_threads](std::array<int, 3> t) {
        return (t[1] + t[2]) % n_threads;
      })
      .set_priority([](std::array<int, 3> t) { return 3.0 * t[0]; });

  auto t0 = clock_t_::now();
  pool.start();
  if (grid.owner(0, 0) == me)
    potrf_tf.fulfill_promise(0);
  pool.join();

  CholeskyRankOutcome out;
  out.run_seconds = seconds_since(t0);
  if (bad_pivot_block.load() >= 0)
    throw std::runtime_error("matrix is not positive definite at diagonal "
                             "block " +
                             std::to_string(bad_pivot_block.load()));
  out.potrf_tasks = potrf_n.load();
  out.trsm_tasks = trsm_n.load();
  out.gemm_tasks = gemm_n.load();

  BlockMap ref = cholesky_reference(seed, N, b);
  for (const auto& [ij, blk] : mine) {
    const auto& rblk = ref.at(ij);
    for (std::size_t x = 0; x < blk.size(); ++x)
      out.max_block_dev =
          std::max(out.max_block_dev, std::abs(blk[x] - rblk[x]));
  }
  out.factor = std::move(mine);
  return out;
}

CholeskyResult bench_cholesky(int n_ranks, int n_threads, int N, int b,
                              std::uint64_t seed) {
  validate_world(n_ranks, n_threads, N, b);
  LoopbackFabric fab(n_ranks);
  std::vector<CholeskyRankOutcome> outs(n_ranks);
  run_rank_threads(n_ranks, [&](int r) {
    LoopbackTransport rank_tr(fab, r);
    outs[r] = run_cholesky_rank(rank_tr, n_threads, N, b, seed);
  });

  CholeskyResult out;
  for (auto& o : outs) {
    out.run_seconds = std::max(out.run_seconds, o.run_seconds);
    out.max_block_dev = std::max(out.max_block_dev, o.max_block_dev);
    out.potrf_tasks += o.potrf_tasks;
    out.trsm_tasks += o.trsm_tasks;
    out.gemm_tasks += o.gemm_tasks;
    out.factor.merge(o.factor);
  }
  out.residual = cholesky_residual(out.factor, seed, N, b);
  return out;
}

}  // namespace weft::bench
