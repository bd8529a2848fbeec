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

#ifndef WEFT_BENCH_HPP
#define WEFT_BENCH_HPP

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "weft/task.hpp"
#include "weft/transport.hpp"

// Workloads that exercise the runtime end to end: spin-task overhead
// measurements, a dependent task grid, and distributed dense linear
// algebra (block GEMM and tiled Cholesky) with built-in correctness
// oracles. Kernels are plain loops; the point is scheduling and
// communication, not peak FLOPs.

namespace weft::bench {

// ---- dense b-by-b block kernels, row major --------------------------------

// In-place lower Cholesky factor; zeroes the strict upper triangle.
// Returns false when a pivot is not positive (input not positive definite).
bool potrf_block(int b, double* a);

// A <- A * L^-T with L lower triangular: the panel solve producing L_ij
// from the updated A_ij and the diagonal factor L_jj.
void trsm_block(int b, const double* l, double* a);

// C -= X * Y^T, the trailing update (Y == X gives the symmetric case).
void gemm_nt_block(int b, const double* x, const double* y, double* c);

// C += X * Y, the plain multiply-accumulate.
void gemm_nn_block(int b, const double* x, const double* y, double* c);

// ---- block distribution and seeded data -----------------------------------

// 2D block-cyclic layout over a near-square grid: p is the largest
// divisor of n_ranks not above sqrt(n_ranks), q = n_ranks / p, and block
// (i, j) lives on rank (i mod p) * q + (j mod q).
struct RankGrid {
  int p = 1;
  int q = 1;
  explicit RankGrid(int n_ranks);
  int owner(int i, int j) const { return (i % p) * q + (j % q); }
};

// Uniform [-1, 1] entries, deterministic per (seed, stream, i, j), so any
// rank can regenerate any block without communication.
std::vector<double> random_block(std::uint64_t seed, std::uint32_t stream,
                                 int i, int j, int b);

// Block (i, j) of the symmetric positive definite matrix M * M^T + N * I,
// where M has random_block entries (stream 'M') and N = n_blocks * b.
std::vector<double> spd_block(std::uint64_t seed, int i, int j, int b,
                              int n_blocks);

// Factor blocks keyed (block row, block column).
using BlockMap = std::map<std::pair<int, int>, std::vector<double>>;

// Sequential tiled Cholesky of the seeded SPD matrix, applying updates in
// ascending k per block: the same floating-point order the task graph
// uses, so distributed runs should match it bitwise.
BlockMap cholesky_reference(std::uint64_t seed, int N, int b);

// max |A - L L^T| / max |A| over the full matrix, with A regenerated from
// the seed. The factor must hold every block of the lower triangle.
double cholesky_residual(const BlockMap& factor, std::uint64_t seed, int N,
                         int b);

// ---- spin-task overhead benchmarks ----------------------------------------

// Efficiency compares against perfect scaling (eff = ideal / measured
// with ideal = spin * tasks / threads) and is reported both with task
// insertion inside the timed window and with tasks inserted up front.
struct SpinResult {
  std::uint64_t tasks_run = 0;
  double insert_seconds = 0;       // enqueue cost in the timed mode
  double run_timed_seconds = 0;    // insertion included
  double run_untimed_seconds = 0;  // tasks queued before the clock starts
  double efficiency_timed = 0;
  double efficiency_untimed = 0;
  std::vector<TaskTraceEntry> trace;  // untimed run, when requested
};
SpinResult bench_nodeps(int n_threads, int n_tasks, double spin_seconds,
                        bool trace = false);

// Grid of spin tasks where (i, j) releases ((i + k) mod nrows, j + 1) for
// k < ndeps; column 0 is seeded externally. ndeps must be in [1, nrows].
struct GridResult {
  std::uint64_t tasks_run = 0;
  double run_seconds = 0;
  double efficiency = 0;
  std::vector<TaskTraceEntry> trace;
};
GridResult bench_deps(int n_threads, int nrows, int ncols, int ndeps,
                      double spin_seconds, bool trace = false);

// ---- distributed linear algebra -------------------------------------------

// One rank's share of C = A * B over an already-connected transport.
// Input blocks ship to consumer ranks as large messages; task (i, k, j)
// accumulates A_ik * B_kj into C_ij in ascending k. max_abs_err compares
// the owned C blocks against a locally regenerated direct multiply.
struct GemmRankOutcome {
  double run_seconds = 0;
  double max_abs_err = 0;
  std::uint64_t tasks_run = 0;
};
GemmRankOutcome run_gemm_rank(Transport& tr, int n_threads, int N, int b,
                              std::uint64_t seed);

// One rank's share of the tiled Cholesky factorization. factor holds the
// owned result blocks; max_block_dev compares them against the sequential
// reference computed locally.
struct CholeskyRankOutcome {
  double run_seconds = 0;
  double max_block_dev = 0;
  std::uint64_t potrf_tasks = 0;
  std::uint64_t trsm_tasks = 0;
  std::uint64_t gemm_tasks = 0;
  BlockMap factor;
};
CholeskyRankOutcome run_cholesky_rank(Transport& tr, int n_threads, int N,
                                      int b, std::uint64_t seed);

// Whole-world runs: every rank as an in-process thread on a loopback
// fabric. Times are the slowest rank's; the Cholesky residual is computed
// from the assembled distributed factor.
struct GemmResult {
  double run_seconds = 0;
  double max_abs_err = 0;
  std::uint64_t tasks_run = 0;
};
GemmResult bench_gemm2d(int n_ranks, int n_threads, int N, int b,
                        std::uint64_t seed);

struct CholeskyResult {
  double run_seconds = 0;
  double residual = 0;
  double max_block_dev = 0;
  std::uint64_t potrf_tasks = 0;
  std::uint64_t trsm_tasks = 0;
  std::uint64_t gemm_tasks = 0;
  BlockMap factor;
};
CholeskyResult bench_cholesky(int n_ranks, int n_threads, int N, int b,
                              std::uint64_t seed);

}  // namespace weft::bench

#endif  // WEFT_BENCH_HPP
