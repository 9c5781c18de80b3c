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

// Hash, signatures and the symmetric cipher. The concrete standards are fixed
// for the whole library:
//   H        SHA-256
//   Sign     Ed25519 (deterministic, 32-byte public keys, 64-byte signatures)
//   Enc/Dec  ChaCha20 (IETF) with an all-zero nonce, key = SHA-256(tag || r)

#include <sodium.h>

#include <stdexcept>

#include "podnet/bytes.hpp"

namespace podnet::crypto {

struct DigestTag {};
struct PublicKeyTag {};
struct SignatureTag {};
struct SecretSeedTag {};
struct SymKeyTag {};
struct Nonce16Tag {};
struct Nonce32Tag {};

using Digest = FixedBytes<32, DigestTag>;
using PublicKey = FixedBytes<32, PublicKeyTag>;
using Signature = FixedBytes<64, SignatureTag>;
using SecretSeed = FixedBytes<32, SecretSeedTag>;
using Nonce16 = FixedBytes<16, Nonce16Tag>;
using Nonce32 = FixedBytes<32, Nonce32Tag>;

inline void ensure_sodium() {
  static const bool ok = [] { return sodium_init() >= 0; }();
  if (!ok) throw std::runtime_error("libsodium initialization failed");
}

inline Digest hash(ByteView data) {
  ensure_sodium();
  Digest out;
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

/// H(a || b || ...) without materializing the concatenation.
template <typename... Views>
Digest hash_parts(const Views&... parts) {
  ensure_sodium();
  crypto_hash_sha256_state st;
  crypto_hash_sha256_init(&st);
  (
      [&] {
        ByteView v(parts);
        crypto_hash_sha256_update(&st, v.data(), v.size());
      }(),
      ...);
  Digest out;
  crypto_hash_sha256_final(&st, out.data());
  return out;
}

/// Deterministic 64-bit seed for a named sub-stream of a run.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  auto d = hash_parts(u64_bytes(seed), as_bytes(label));
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out = (out << 8) | d.bytes[i];
  return out;
}

class KeyPair {
 public:
  static KeyPair from_seed(const SecretSeed& seed) {
    ensure_sodium();
    KeyPair kp;
    kp.seed_ = seed;
    crypto_sign_seed_keypair(kp.public_.data(), kp.expanded_.data(), seed.data());
    return kp;
  }

  static KeyPair generate(Rng& rng) { return from_seed(SecretSeed::random(rng)); }

  const PublicKey& public_key() const { return public_; }
  const SecretSeed& secret() const { return seed_; }

  Signature sign(ByteView message) const {
    Signature sig;
    crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), expanded_.data());
    return sig;
  }

 private:
  KeyPair() = default;

  SecretSeed seed_;
  PublicKey public_;
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> expanded_{};
};

inline Signature sign(const KeyPair& key, ByteView message) { return key.sign(message); }

/// Accepts raw signature bytes so that malformed input from the wire reports
/// false instead of failing earlier.
inline bool verify_signature(const PublicKey& pk, ByteView signature, ByteView message) {
  ensure_sodium();
  if (signature.size() != Signature::kSize) return false;
  return crypto_sign_verify_detached(signature.data(), message.data(), message.size(), pk.data()) == 0;
}

inline bool verify_signature(const PublicKey& pk, const Signature& signature, ByteView message) {
  return verify_signature(pk, signature.view(), message);
}

struct SymKey {
  FixedBytes<32, SymKeyTag> key;

  static SymKey derive(const Digest& r) {
    static constexpr std::string_view kLabel = "podnet/enc-key/v1";
    return SymKey{FixedBytes<32, SymKeyTag>::from(hash_parts(as_bytes(kLabel), r.view()).view()).value()};
  }
};

// Unauthenticated stream cipher; a wrong key yields garbage of the same length.
inline Bytes encrypt(ByteView plain, const SymKey& key) {
  ensure_sodium();
  Bytes out(plain.size());
  std::array<std::uint8_t, crypto_stream_chacha20_ietf_NONCEBYTES> nonce{};
  if (!plain.empty()) {
    crypto_stream_chacha20_ietf_xor(out.data(), plain.data(), plain.size(), nonce.data(), key.key.data());
  }
  return out;
}

inline Bytes decrypt(ByteView cipher, const SymKey& key) { return encrypt(cipher, key); }

}  // namespace podnet::crypto
