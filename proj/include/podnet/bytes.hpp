// Copyright 2026 The podnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace podnet {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;
using Tick = std::uint64_t;
using Rng = std::mt19937_64;

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline std::string to_hex(ByteView data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

inline std::optional<Bytes> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

// Fixed-width byte value. The tag keeps digests, keys and nonces apart at the
// type level even though they share a width.
template <std::size_t N, typename Tag>
struct FixedBytes {
  static constexpr std::size_t kSize = N;
  std::array<std::uint8_t, N> bytes{};

  static std::optional<FixedBytes> from(ByteView data) {
    if (data.size() != N) return std::nullopt;
    FixedBytes out;
    std::copy(data.begin(), data.end(), out.bytes.begin());
    return out;
  }

  static std::optional<FixedBytes> from_hex(std::string_view hex) {
    auto raw = podnet::from_hex(hex);
    if (!raw) return std::nullopt;
    return from(*raw);
  }

  static FixedBytes random(Rng& rng) {
    FixedBytes out;
    for (auto& b : out.bytes) b = static_cast<std::uint8_t>(rng() & 0xff);
    return out;
  }

  ByteView view() const { return {bytes.data(), bytes.size()}; }
  std::uint8_t* data() { return bytes.data(); }
  const std::uint8_t* data() const { return bytes.data(); }
  constexpr std::size_t size() const { return N; }
  std::string hex() const { return to_hex(view()); }
  Bytes to_vector() const { return Bytes(bytes.begin(), bytes.end()); }

  auto operator<=>(const FixedBytes&) const = default;
  bool operator==(const FixedBytes&) const = default;
};

struct FixedBytesHash {
  template <std::size_t N, typename Tag>
  std::size_t operator()(const FixedBytes<N, Tag>& v) const noexcept {
    static_assert(N >= sizeof(std::size_t));
    std::size_t h;
    std::memcpy(&h, v.bytes.data(), sizeof h);
    return h;
  }
};

inline void append(Bytes& out, ByteView data) { out.insert(out.end(), data.begin(), data.end()); }

template <typename... Views>
Bytes concat(const Views&... parts) {
  Bytes out;
  (append(out, ByteView(parts)), ...);
  return out;
}

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

inline Bytes u64_bytes(std::uint64_t v) {
  Bytes out;
  put_u64(out, v);
  return out;
}

inline std::optional<std::uint64_t> read_u64(ByteView data) {
  if (data.size() != 8) return std::nullopt;
  std::uint64_t v = 0;
  for (auto b : data) v = (v << 8) | b;
  return v;
}

/// Canonical tuple encoding: each field is a 4-byte big-endian length
/// followed by the raw bytes. Used for contract calls, wire messages and the
/// update package so that digests of encoded values are stable across runs.
class TupleWriter {
 public:
  TupleWriter& field(ByteView data) {
    put_u32(out_, static_cast<std::uint32_t>(data.size()));
    append(out_, data);
    return *this;
  }
  TupleWriter& field(std::string_view s) { return field(as_bytes(s)); }
  TupleWriter& field(const Bytes& b) { return field(ByteView(b)); }
  template <std::size_t N, typename Tag>
  TupleWriter& field(const FixedBytes<N, Tag>& v) {
    return field(v.view());
  }
  TupleWriter& u64(std::uint64_t v) { return field(u64_bytes(v)); }

  Bytes finish() && { return std::move(out_); }
  const Bytes& bytes() const { return out_; }

 private:
  Bytes out_;
};

/// Splits a canonical tuple back into fields. Returns nullopt on any framing
/// error, including trailing bytes.
inline std::optional<std::vector<ByteView>> read_tuple(ByteView data) {
  std::vector<ByteView> fields;
  std::size_t pos = 0;
  while (pos < data.size()) {
    if (data.size() - pos < 4) return std::nullopt;
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len = (len << 8) | data[pos + i];
    pos += 4;
    if (data.size() - pos < len) return std::nullopt;
    fields.push_back(data.subspan(pos, len));
    pos += len;
  }
  return fields;
}

template <std::size_t N, typename Tag>
std::optional<FixedBytes<N, Tag>> read_fixed(ByteView field) {
  return FixedBytes<N, Tag>::from(field);
}

inline std::string to_string(ByteView b) { return {reinterpret_cast<const char*>(b.data()), b.size()}; }

inline bool contains(ByteView haystack, ByteView needle) {
  if (needle.empty()) return true;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

inline void fill_random(Rng& rng, std::span<std::uint8_t> out) {
  for (auto& b : out) b = static_cast<std::uint8_t>(rng() & 0xff);
}

inline Bytes random_bytes(Rng& rng, std::size_t n) {
  Bytes out(n);
  fill_random(rng, out);
  return out;
}

}  // namespace podnet
