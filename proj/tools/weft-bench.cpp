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

// Benchmark driver. Emits one whitespace-separated table per run, with a
// header row, to stdout or --output. Distributed benchmarks run either
// with every rank as an in-process thread (loopback) or one process per
// rank over sockets (tcp, with --rank-table and --rank).

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "weft/bench.hpp"
#include "weft/tcp.hpp"

namespace {

using namespace weft;
using namespace weft::bench;

// Correctness gates: a benchmark whose oracle misses these is a failure,
// not a data point.
constexpr double gemm_tol_per_n = 1e-10;     // scaled by the matrix size
constexpr double cholesky_residual_tol = 1e-10;

struct Options {
  std::string bench;
  int threads = 4;
  int ranks = 1;
  double spin = 100e-6;
  int tasks = 1000;
  int nrows = 32;
  int ncols = 10;
  int ndeps = 2;
  int N = 256;
  int block_size = 64;
  int reps = 1;
  std::uint64_t seed = 42;
  std::string transport = "loopback";
  std::string rank_table;
  int rank = -1;
  std::string output;
  bool trace = false;
};

void print_trace(const std::vector<TaskTraceEntry>& trace) {
  if (trace.empty())
    return;
  auto origin = trace.front().start;
  for (const auto& e : trace)
    origin = std::min(origin, e.start);
  std::cerr << "# task thread start_us stop_us\n";
  for (const auto& e : trace) {
    auto us = [&](std::chrono::steady_clock::time_point t) {
      return std::chrono::duration_cast<std::chrono::microseconds>(t - origin)
          .count();
    };
    std::cerr << e.label << '\t' << e.thread << '\t' << us(e.start) << '\t'
              << us(e.stop) << '\n';
  }
}

int run(const Options& opt, std::ostream& out) {
  const bool tcp = opt.transport == "tcp";

  if (opt.bench == "nodeps" || opt.bench == "deps") {
    if (tcp || opt.ranks != 1) {
      std::cerr << "error: " << opt.bench << " is a single-rank benchmark\n";
      return 1;
    }
  }

  // Socket setup happens once; repetitions reuse the mesh.
  std::unique_ptr<TcpTransport> tcp_tr;
  int world = opt.ranks;
  if (tcp) {
    if (opt.rank_table.empty() || opt.rank < 0) {
      std::cerr << "error: tcp transport needs --rank-table and --rank\n";
      return 1;
    }
    auto table = read_rank_table(opt.rank_table);
    world = static_cast<int>(table.size());
    tcp_tr = std::make_unique<TcpTransport>(opt.rank, world,
                                            port_of(table[opt.rank]));
    tcp_tr->connect_mesh(table);
  }

  out.precision(12);
  bool failed = false;

  if (opt.bench == "nodeps") {
    out << "bench threads tasks spin_s insert_s run_timed_s run_untimed_s "
           "eff_timed eff_untimed\n";
    for (int rep = 0; rep < opt.reps; ++rep) {
      auto r = bench_nodeps(opt.threads, opt.tasks, opt.spin,
                            opt.trace && rep == 0);
      out << "nodeps " << opt.threads << ' ' << opt.tasks << ' ' << opt.spin
          << ' ' << r.insert_seconds << ' ' << r.run_timed_seconds << ' '
          << r.run_untimed_seconds << ' ' << r.efficiency_timed << ' '
          << r.efficiency_untimed << '\n';
      if (opt.trace && rep == 0)
        print_trace(r.trace);
    }
  } else if (opt.bench == "deps") {
    out << "bench threads nrows ncols ndeps spin_s tasks run_s eff\n";
    for (int rep = 0; rep < opt.reps; ++rep) {
      auto r = bench_deps(opt.threads, opt.nrows, opt.ncols, opt.ndeps,
                          opt.spin, opt.trace && rep == 0);
      out << "deps " << opt.threads << ' ' << opt.nrows << ' ' << opt.ncols
          << ' ' << opt.ndeps << ' ' << opt.spin << ' ' << r.tasks_run << ' '
          << r.run_seconds << ' ' << r.efficiency << '\n';
      if (opt.trace && rep == 0)
        print_trace(r.trace);
    }
  } else if (opt.bench == "gemm2d") {
    out << "bench rank ranks threads N b tasks run_s max_err\n";
    double tol = gemm_tol_per_n * opt.N;
    for (int rep = 0; rep < opt.reps; ++rep) {
      double err;
      if (tcp) {
        auto r = run_gemm_rank(*tcp_tr, opt.threads, opt.N, opt.block_size,
                               opt.seed);
        out << "gemm2d " << opt.rank << ' ' << world << ' ' << opt.threads
            << ' ' << opt.N << ' ' << opt.block_size << ' ' << r.tasks_run
            << ' ' << r.run_seconds << ' ' << r.max_abs_err << '\n';
        err = r.max_abs_err;
      } else {
        auto r = bench_gemm2d(world, opt.threads, opt.N, opt.block_size,
                              opt.seed);
        out << "gemm2d all " << world << ' ' << opt.threads << ' ' << opt.N
            << ' ' << opt.block_size << ' ' << r.tasks_run << ' '
            << r.run_seconds << ' ' << r.max_abs_err << '\n';
        err = r.max_abs_err;
      }
      if (err > tol) {
        std::cerr << "error: gemm deviation " << err << " exceeds " << tol
                  << '\n';
        failed = true;
      }
    }
  } else if (opt.bench == "cholesky") {
    out << "bench rank ranks threads N b potrf trsm gemm run_s residual "
           "block_dev\n";
    for (int rep = 0; rep < opt.reps; ++rep) {
      if (tcp) {
        auto r = run_cholesky_rank(*tcp_tr, opt.threads, opt.N,
                                   opt.block_size, opt.seed);
        // The full residual needs the whole factor; a single process
        // reports its blockwise deviation from the reference instead.
        out << "cholesky " << opt.rank << ' ' << world << ' ' << opt.threads
            << ' ' << opt.N << ' ' << opt.block_size << ' ' << r.potrf_tasks
            << ' ' << r.trsm_tasks << ' ' << r.gemm_tasks << ' '
            << r.run_seconds << ' ' << std::nan("") << ' ' << r.max_block_dev
            << '\n';
        if (r.max_block_dev > cholesky_residual_tol) {
          std::cerr << "error: factor deviation " << r.max_block_dev
                    << " exceeds " << cholesky_residual_tol << '\n';
          failed = true;
        }
      } else {
        auto r = bench_cholesky(world, opt.threads, opt.N, opt.block_size,
                                opt.seed);
        out << "cholesky all " << world << ' ' << opt.threads << ' ' << opt.N
            << ' ' << opt.block_size << ' ' << r.potrf_tasks << ' '
            << r.trsm_tasks << ' ' << r.gemm_tasks << ' ' << r.run_seconds
            << ' ' << r.residual << ' ' << r.max_block_dev << '\n';
        if (r.residual > cholesky_residual_tol) {
          std::cerr << "error: residual " << r.residual << " exceeds "
                    << cholesky_residual_tol << '\n';
          failed = true;
        }
      }
    }
  } else {
    std::cerr << "error: unknown benchmark " << opt.bench << '\n';
    return 1;
  }
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"task-runtime benchmarks"};
  Options opt;

  app.add_option("--bench", opt.bench, "nodeps, deps, gemm2d, or cholesky")
      ->required()
      ->check(CLI::IsMember({"nodeps", "deps", "gemm2d", "cholesky"}));
  app.add_option("--threads", opt.threads, "worker threads per rank");
  app.add_option("--ranks", opt.ranks, "rank count (loopback transport)");
  app.add_option("--spin", opt.spin, "seconds each spin task burns");
  app.add_option("--tasks", opt.tasks, "task count for nodeps");
  app.add_option("--nrows", opt.nrows, "grid rows for deps");
  app.add_option("--ncols", opt.ncols, "grid columns for deps");
  app.add_option("--ndeps", opt.ndeps, "dependencies per grid task");
  app.add_option("--N", opt.N, "matrix size");
  app.add_option("--block-size", opt.block_size, "block size");
  app.add_option("--reps", opt.reps, "repetitions (one table row each)");
  app.add_option("--seed", opt.seed, "seed for matrix data");
  app.add_option("--transport", opt.transport, "loopback or tcp")
      ->check(CLI::IsMember({"loopback", "tcp"}));
  app.add_option("--rank-table", opt.rank_table,
                 "file of 'rank host:port' lines (tcp)");
  app.add_option("--rank", opt.rank, "this process's rank (tcp)");
  app.add_option("--output", opt.output, "write the table here, not stdout");
  app.add_flag("--trace", opt.trace,
               "dump per-task spans to stderr (single-rank benchmarks)");
  CLI11_PARSE(app, argc, argv);

  try {
    if (!opt.output.empty()) {
      std::ofstream f(opt.output);
      if (!f) {
        std::cerr << "error: cannot open " << opt.output << '\n';
        return 1;
      }
      return run(opt, f);
    }
    return run(opt, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
