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

#ifndef WEFT_TESTS_CODEC_FUZZ_HPP
#define WEFT_TESTS_CODEC_FUZZ_HPP

#include <cstring>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "weft/codec.hpp"

// Round-trip fuzzer for the frame codec. Signatures are assembled at run
// time from type-erased per-argument cases; every case carries its own
// reference serializer that writes the documented wire layout with nothing
// from the codec (explicit shifts and memcpy only), so an agreeing byte
// string really is two independent derivations.

namespace weft_test {

// Reference little-endian append, deliberately not using weft::codec.
template <typename T>
void ref_append_scalar(std::vector<std::byte>& out, T v) {
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  // Host is little-endian on every platform this runs on; byte-reverse if
  // not so the reference stays canonical.
  std::uint64_t u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    u |= static_cast<std::uint64_t>(raw[i]) << (8 * i);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<std::byte>((u >> (8 * i)) & 0xff));
}

struct arg_case {
  // Appends the value through the codec under test.
  std::function<void(std::vector<std::byte>&)> encode;
  // Appends the value through the reference serializer.
  std::function<void(std::vector<std::byte>&)> reference;
  // Decodes from the cursor and returns true iff the value round-tripped.
  std::function<bool(weft::codec::cursor&)> check_decode;
};

template <typename T>
arg_case make_scalar_case(std::mt19937_64& rng) {
  T v;
  if constexpr (std::is_floating_point_v<T>) {
    std::uniform_real_distribution<T> d(T(-1e6), T(1e6));
    v = d(rng);
  } else {
    v = static_cast<T>(rng());
  }
  return arg_case{
      [v](std::vector<std::byte>& out) { weft::codec::encode_value(out, v); },
      [v](std::vector<std::byte>& out) { ref_append_scalar(out, v); },
      [v](weft::codec::cursor& c) {
        return weft::codec::decode_value<T>(c) == v;
      }};
}

template <typename T>
arg_case make_view_case(std::mt19937_64& rng) {
  auto data = std::make_shared<std::vector<T>>();
  std::size_t n = rng() % 18;
  data->reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if constexpr (std::is_floating_point_v<T>)
      data->push_back(static_cast<T>(std::uniform_real_distribution<double>(
          -1e6, 1e6)(rng)));
    else
      data->push_back(static_cast<T>(rng()));
  }
  return arg_case{
      [data](std::vector<std::byte>& out) {
        weft::codec::encode_value(out, weft::make_view(*data));
      },
      [data](std::vector<std::byte>& out) {
        ref_append_scalar<std::uint64_t>(out, data->size() * sizeof(T));
        for (T e : *data)
          ref_append_scalar(out, e);
      },
      [data](weft::codec::cursor& c) {
        auto v = weft::codec::decode_value<weft::view<const T>>(c);
        return v.to_vector() == *data;
      }};
}

template <typename T>
void fill_random(T& v, std::mt19937_64& rng) {
  if constexpr (weft::codec::is_tuple_like<T>::value) {
    std::apply([&rng](auto&... fs) { (fill_random(fs, rng), ...); }, v);
  } else if constexpr (std::is_floating_point_v<T>) {
    v = static_cast<T>(std::uniform_real_distribution<double>(-1e6, 1e6)(rng));
  } else {
    v = static_cast<T>(rng());
  }
}

template <typename T>
void ref_append_value(std::vector<std::byte>& out, const T& v) {
  if constexpr (weft::codec::is_tuple_like<T>::value)
    std::apply(
        [&out](const auto&... fs) { (ref_append_value(out, fs), ...); }, v);
  else
    ref_append_scalar(out, v);
}

template <typename Tup>
arg_case make_tuple_case(std::mt19937_64& rng) {
  auto v = std::make_shared<Tup>();
  fill_random(*v, rng);
  return arg_case{
      [v](std::vector<std::byte>& out) { weft::codec::encode_value(out, *v); },
      [v](std::vector<std::byte>& out) { ref_append_value(out, *v); },
      [v](weft::codec::cursor& c) {
        return weft::codec::decode_value<Tup>(c) == *v;
      }};
}

inline arg_case make_random_case(std::mt19937_64& rng) {
  switch (rng() % 26) {
    case 0: return make_scalar_case<std::int8_t>(rng);
    case 1: return make_scalar_case<std::uint8_t>(rng);
    case 2: return make_scalar_case<std::int16_t>(rng);
    case 3: return make_scalar_case<std::uint16_t>(rng);
    case 4: return make_scalar_case<std::int32_t>(rng);
    case 5: return make_scalar_case<std::uint32_t>(rng);
    case 6: return make_scalar_case<std::int64_t>(rng);
    case 7: return make_scalar_case<std::uint64_t>(rng);
    case 8: return make_scalar_case<float>(rng);
    case 9: return make_scalar_case<double>(rng);
    case 10: return make_view_case<std::int8_t>(rng);
    case 11: return make_view_case<std::uint8_t>(rng);
    case 12: return make_view_case<std::int16_t>(rng);
    case 13: return make_view_case<std::uint16_t>(rng);
    case 14: return make_view_case<std::int32_t>(rng);
    case 15: return make_view_case<std::uint32_t>(rng);
    case 16: return make_view_case<std::int64_t>(rng);
    case 17: return make_view_case<std::uint64_t>(rng);
    case 18: return make_view_case<float>(rng);
    case 19: return make_view_case<double>(rng);
    case 20: return make_tuple_case<std::tuple<std::int32_t, double>>(rng);
    case 21: return make_tuple_case<std::pair<std::uint8_t, std::int64_t>>(rng);
    case 22: return make_tuple_case<std::array<std::int32_t, 3>>(rng);
    case 23:
      return make_tuple_case<std::tuple<std::uint16_t, std::uint16_t, float>>(
          rng);
    case 24:
      return make_tuple_case<
          std::tuple<std::tuple<std::int32_t, std::int32_t>, double>>(rng);
    default: return make_tuple_case<std::array<std::uint64_t, 2>>(rng);
  }
}

// Builds one random frame, checks codec bytes against the reference bytes
// and then decodes with full-consumption and round-trip checks. Returns
// false on any mismatch.
inline bool fuzz_one_frame(std::mt19937_64& rng) {
  std::uint32_t am_id = static_cast<std::uint32_t>(rng());
  std::size_t nargs = rng() % 9;
  std::vector<arg_case> args;
  args.reserve(nargs);
  for (std::size_t i = 0; i < nargs; ++i)
    args.push_back(make_random_case(rng));

  std::vector<std::byte> got = weft::encode_frame(am_id);
  for (auto& a : args)
    a.encode(got);

  std::vector<std::byte> want;
  ref_append_scalar<std::uint32_t>(want, am_id);
  for (auto& a : args)
    a.reference(want);
  if (got != want)
    return false;

  auto fv = weft::parse_frame(got);
  if (fv.am_id != am_id)
    return false;
  weft::codec::cursor c{fv.payload.data(),
                        fv.payload.data() + fv.payload.size()};
  for (auto& a : args)
    if (!a.check_decode(c))
      return false;
  return c.at == c.end;
}

}  // namespace weft_test

#endif  // WEFT_TESTS_CODEC_FUZZ_HPP
