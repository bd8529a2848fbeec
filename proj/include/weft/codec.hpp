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

#ifndef WEFT_CODEC_HPP
#define WEFT_CODEC_HPP

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <type_traits>
#include <utility>
#include <vector>

// Message frame layout, identical on every transport:
//
//   u32 am_id | arg0 | arg1 | ...
//
// All integers little-endian. Scalars are written at their fixed width
// (floats via their IEEE-754 bit pattern). Tuple-like values are their
// fields in order, no padding. A view<T> is a u64 byte length followed by
// the raw element bytes. No alignment padding anywhere, so a peer in
// another language can parse frames with nothing but the signature.

namespace weft {

struct malformed_frame : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-owning typed window over contiguous memory. Decoded views point into
// the frame buffer and may be unaligned; operator[] loads through memcpy so
// element access is always safe.
template <typename T>
struct view {
  T* ptr = nullptr;
  std::size_t count = 0;

  view() = default;
  view(T* p, std::size_t n) : ptr(p), count(n) {}

  T* data() const { return ptr; }
  std::size_t size() const { return count; }
  std::size_t size_bytes() const { return count * sizeof(T); }
  bool empty() const { return count == 0; }

  std::remove_const_t<T> operator[](std::size_t i) const {
    std::remove_const_t<T> out;
    std::memcpy(&out, reinterpret_cast<const char*>(ptr) + i * sizeof(T),
                sizeof(T));
    return out;
  }

  std::vector<std::remove_const_t<T>> to_vector() const {
    std::vector<std::remove_const_t<T>> out(count);
    if (count > 0)
      std::memcpy(out.data(), ptr, size_bytes());
    return out;
  }
};

template <typename T>
view<const T> make_view(const T* p, std::size_t n) {
  return view<const T>(p, n);
}

template <typename T>
view<T> make_view(T* p, std::size_t n) {
  return view<T>(p, n);
}

template <typename T>
view<const T> make_view(const std::vector<T>& v) {
  return view<const T>(v.data(), v.size());
}

template <typename T>
view<T> make_view(std::vector<T>& v) {
  return view<T>(v.data(), v.size());
}

namespace codec {

template <typename T>
inline constexpr bool is_scalar_v =
    (std::is_integral_v<T> || std::is_floating_point_v<T>) &&
    !std::is_same_v<T, bool>;

template <typename T>
struct is_view : std::false_type {};
template <typename T>
struct is_view<view<T>> : std::true_type {
  static_assert(is_scalar_v<std::remove_const_t<T>>,
                "views must hold fixed-width scalar elements");
};

template <typename T>
struct is_tuple_like : std::false_type {};
template <typename... Ts>
struct is_tuple_like<std::tuple<Ts...>> : std::true_type {};
template <typename A, typename B>
struct is_tuple_like<std::pair<A, B>> : std::true_type {};
template <typename T, std::size_t N>
struct is_tuple_like<std::array<T, N>> : std::true_type {};

template <typename T>
inline constexpr bool is_codec_type_v =
    is_scalar_v<T> || is_view<T>::value || is_tuple_like<T>::value;

// Little-endian load/store for any supported scalar, alignment-free.
template <typename T>
void le_store(std::byte* dst, T value) {
  static_assert(is_scalar_v<T>);
  if constexpr (std::is_floating_point_v<T>) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    le_store<U>(dst, std::bit_cast<U>(value));
  } else {
    using U = std::make_unsigned_t<T>;
    U u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i)
      dst[i] = static_cast<std::byte>((u >> (8 * i)) & 0xff);
  }
}

template <typename T>
T le_load(const std::byte* src) {
  static_assert(is_scalar_v<T>);
  if constexpr (std::is_floating_point_v<T>) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    return std::bit_cast<T>(le_load<U>(src));
  } else {
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      u |= static_cast<U>(std::to_integer<std::uint8_t>(src[i])) << (8 * i);
    return static_cast<T>(u);
  }
}

template <typename T>
std::size_t encoded_size(const T& v) {
  static_assert(is_codec_type_v<T>, "unsupported value kind");
  if constexpr (is_scalar_v<T>) {
    return sizeof(T);
  } else if constexpr (is_view<T>::value) {
    return sizeof(std::uint64_t) + v.size_bytes();
  } else {
    return std::apply(
        [](const auto&... fs) {
          return (std::size_t{0} + ... + encoded_size(fs));
        },
        v);
  }
}

template <typename T>
void encode_value(std::vector<std::byte>& out, const T& v) {
  static_assert(is_codec_type_v<T>, "unsupported value kind");
  if constexpr (is_scalar_v<T>) {
    std::size_t at = out.size();
    out.resize(at + sizeof(T));
    le_store(out.data() + at, v);
  } else if constexpr (is_view<T>::value) {
    std::size_t at = out.size();
    out.resize(at + sizeof(std::uint64_t) + v.size_bytes());
    le_store<std::uint64_t>(out.data() + at, v.size_bytes());
    if (v.size_bytes() > 0)
      std::memcpy(out.data() + at + sizeof(std::uint64_t), v.data(),
                  v.size_bytes());
  } else {
    std::apply([&out](const auto&... fs) { (encode_value(out, fs), ...); }, v);
  }
}

struct cursor {
  const std::byte* at;
  const std::byte* end;

  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end - at) < n)
      throw malformed_frame("frame truncated");
  }
};

template <typename T>
T decode_value(cursor& c) {
  static_assert(is_codec_type_v<T>, "unsupported value kind");
  if constexpr (is_scalar_v<T>) {
    c.need(sizeof(T));
    T v = le_load<T>(c.at);
    c.at += sizeof(T);
    return v;
  } else if constexpr (is_view<T>::value) {
    c.need(sizeof(std::uint64_t));
    std::uint64_t nbytes = le_load<std::uint64_t>(c.at);
    c.at += sizeof(std::uint64_t);
    using E = typename std::remove_const_t<
        std::remove_pointer_t<decltype(std::declval<T>().data())>>;
    if (nbytes % sizeof(E) != 0)
      throw malformed_frame("view length not a multiple of element size");
    c.need(nbytes);
    // Frames live in mutable buffers owned by the receiver, so handing out
    // a non-const element pointer is sound.
    T v(reinterpret_cast<decltype(std::declval<T>().data())>(
            const_cast<std::byte*>(c.at)),
        nbytes / sizeof(E));
    c.at += nbytes;
    return v;
  } else {
    return [&c]<std::size_t... I>(std::index_sequence<I...>) {
      T out{};
      ((std::get<I>(out) =
            decode_value<std::tuple_element_t<I, T>>(c)),
       ...);
      return out;
    }(std::make_index_sequence<std::tuple_size_v<T>>{});
  }
}

// Compact signature descriptor, hashed into frames when a communicator runs
// with signature checking on. Mismatched registration order across ranks then
// surfaces as a decode-time error instead of a silently wrong handler.
template <typename T>
void describe(std::string& out) {
  static_assert(is_codec_type_v<T>, "unsupported value kind");
  if constexpr (is_scalar_v<T>) {
    out += std::is_floating_point_v<T> ? 'f' : (std::is_signed_v<T> ? 'i' : 'u');
    out += static_cast<char>('0' + sizeof(T));
  } else if constexpr (is_view<T>::value) {
    out += 'v';
    describe<std::remove_const_t<
        std::remove_pointer_t<decltype(std::declval<T>().data())>>>(out);
  } else {
    out += '(';
    [&out]<std::size_t... I>(std::index_sequence<I...>) {
      (describe<std::tuple_element_t<I, T>>(out), ...);
    }(std::make_index_sequence<std::tuple_size_v<T>>{});
    out += ')';
  }
}

inline std::uint32_t fnv1a(const std::string& s) {
  std::uint32_t h = 2166136261u;
  for (char ch : s) {
    h ^= static_cast<std::uint8_t>(ch);
    h *= 16777619u;
  }
  return h;
}

template <typename... Ts>
std::uint32_t signature_hash() {
  std::string d;
  (describe<Ts>(d), ...);
  return fnv1a(d);
}

}  // namespace codec

template <typename... Ts>
std::vector<std::byte> encode_frame(std::uint32_t am_id, const Ts&... args) {
  std::vector<std::byte> out;
  out.reserve(sizeof(std::uint32_t) + (std::size_t{0} + ... +
                                       codec::encoded_size(args)));
  out.resize(sizeof(std::uint32_t));
  codec::le_store<std::uint32_t>(out.data(), am_id);
  (codec::encode_value(out, args), ...);
  return out;
}

struct frame_view {
  std::uint32_t am_id;
  std::span<const std::byte> payload;
};

inline frame_view parse_frame(std::span<const std::byte> frame) {
  if (frame.size() < sizeof(std::uint32_t))
    throw malformed_frame("frame shorter than its id field");
  return {codec::le_load<std::uint32_t>(frame.data()),
          frame.subspan(sizeof(std::uint32_t))};
}

// Decodes the argument section of a frame. The whole payload must be
// consumed: both truncated and oversized payloads are malformed.
template <typename... Ts>
std::tuple<Ts...> decode_payload(std::span<const std::byte> payload) {
  codec::cursor c{payload.data(), payload.data() + payload.size()};
  std::tuple<Ts...> out{codec::decode_value<Ts>(c)...};
  if (c.at != c.end)
    throw malformed_frame("trailing bytes after last argument");
  return out;
}

}  // namespace weft

#endif  // WEFT_CODEC_HPP
