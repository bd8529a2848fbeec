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

#ifndef WEFT_TASK_HPP
#define WEFT_TASK_HPP

#include <chrono>
#include <cstdint>
#include <functional>
#include <string>

namespace weft {

// One ready-to-run task. seq is stamped by the pool at insertion and breaks
// priority ties oldest-first. Bodies must not throw and must not block on
// other tasks; stealable tasks may run on any worker, bound tasks only on
// their target.
struct TaskInstance {
  std::function<void()> body;
  double priority = 0.0;
  bool stealable = true;
  std::string label;
  std::uint64_t seq = 0;
};

struct TaskTraceEntry {
  std::string label;
  int thread = -1;
  std::chrono::steady_clock::time_point start;
  std::chrono::steady_clock::time_point stop;
};

}  // namespace weft

#endif  // WEFT_TASK_HPP
