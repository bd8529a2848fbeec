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

#ifndef WEFT_TRANSPORT_HPP
#define WEFT_TRANSPORT_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>

namespace weft {

struct transport_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Message streams between a rank pair. Each (source, dest, tag) triple is an
// independent FIFO channel.
enum class Tag : std::uint8_t { regular = 0, large_header = 1, large_body = 2 };

inline constexpr int n_tags = 3;

struct TransferHandle {
  std::uint64_t id = 0;
};

struct ProbeResult {
  int source = -1;
  Tag tag = Tag::regular;
  std::size_t head_bytes = 0;
  std::size_t body_bytes = 0;
};

// Byte transport between ranks.
//
// Sends are scatter-gather: a head span and a body span travel as one
// message. Frames use head only; large-body messages put their 8-byte
// pairing prefix in head and the raw payload in body, which lets a receiver
// land the payload straight into user memory. On transports with a flat
// wire format the split is recovered from the tag (large_body: first 8
// bytes are head).
//
// Only one thread per rank may drive probe/irecv/test/poll (the
// communication thread); isend may be called from any thread.
class Transport {
 public:
  virtual ~Transport() = default;

  virtual int rank() const = 0;
  virtual int n_ranks() const = 0;

  // Posts a send. Both spans must stay valid until test() on the returned
  // handle is true. Self-sends (dest == rank()) loop through the transport
  // like any other message.
  virtual TransferHandle isend(int dest, Tag tag,
                               std::span<const std::byte> head,
                               std::span<const std::byte> body) = 0;

  // Reports one deliverable incoming message without consuming it, or
  // nothing when idle. Channels whose (source, tag) appears in skip are
  // passed over, letting the caller defer a stream it cannot accept yet.
  virtual std::optional<ProbeResult> probe(
      std::span<const std::pair<int, Tag>> skip) = 0;

  std::optional<ProbeResult> probe() { return probe({}); }

  // Consumes the front message of (source, tag). Buffer sizes must equal
  // the sizes just probed; anything else throws std::invalid_argument.
  virtual TransferHandle irecv(int source, Tag tag, std::span<std::byte> head,
                               std::span<std::byte> body) = 0;

  // True once the transfer is finished (sent bytes fully handed off, or
  // received bytes landed). Monotone.
  virtual bool test(TransferHandle h) = 0;

  // Advances internal machinery; called once per progress pass.
  virtual void poll() = 0;
};

}  // namespace weft

#endif  // WEFT_TRANSPORT_HPP
