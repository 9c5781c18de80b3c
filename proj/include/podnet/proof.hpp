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

// Proof-of-distribution proof system: setup / prove / verify for the statement
//
//   exists r : H(r) = s  and  H(Dec(ciphertext, KDF(r))) = u_id
//
// ProofBackend is the seam where a real zk-SNARK would plug in. The bundled
// SimulatedProofBackend behaves as an ideal functionality: it holds a master
// key that nobody else sees, seals the per-setup secret inside both public
// keys, and only mints a tag after checking the statement itself.

#include <memory>

#include "podnet/crypto.hpp"

namespace podnet::crypto {

struct TrapdoorTag {};
using Trapdoor = FixedBytes<32, TrapdoorTag>;

struct ProofKeys {
  Bytes proving;
  Bytes verifying;
  Digest statement_id;

  bool operator==(const ProofKeys&) const = default;
};

struct ProofInstance {
  Digest ciphertext;  // H(ciphertext)
  Digest s;
  Digest u_id;

  static constexpr std::size_t kEncodedSize = 3 * Digest::kSize;

  Bytes encode() const { return concat(ciphertext.view(), s.view(), u_id.view()); }

  static std::optional<ProofInstance> decode(ByteView data) {
    if (data.size() != kEncodedSize) return std::nullopt;
    ProofInstance out;
    out.ciphertext = *Digest::from(data.subspan(0, 32));
    out.s = *Digest::from(data.subspan(32, 32));
    out.u_id = *Digest::from(data.subspan(64, 32));
    return out;
  }

  bool operator==(const ProofInstance&) const = default;
};

/// Opaque proof bytes. Size is constant: instance (96) followed by a 32-byte
/// tag, independent of the ciphertext length.
struct Proof {
  Bytes bytes;

  static constexpr std::size_t kSize = ProofInstance::kEncodedSize + 32;

  std::optional<ProofInstance> instance() const {
    if (bytes.size() != kSize) return std::nullopt;
    return ProofInstance::decode(ByteView(bytes).first(ProofInstance::kEncodedSize));
  }

  bool operator==(const Proof&) const = default;
};

struct SetupResult {
  ProofKeys keys;
  Trapdoor trapdoor;  // retained by whoever ran setup
};

class ProvingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Independent statement oracle. Shared by the prover-side check and by tests.
inline bool statement_holds(ByteView ciphertext, const Digest& s, const Digest& u_id, const Digest& r) {
  if (hash(r.view()) != s) return false;
  return hash(decrypt(ciphertext, SymKey::derive(r))) == u_id;
}

class ProofBackend {
 public:
  virtual ~ProofBackend() = default;

  virtual SetupResult setup(const Digest& statement_id, Rng& rng) const = 0;

  /// Throws ProvingError when the statement is false for the given witness.
  virtual Proof prove(const ProofKeys& keys, ByteView ciphertext, const Digest& s, const Digest& u_id,
                      const Digest& witness) const = 0;

  virtual bool verify(ByteView verifying_key, ByteView ciphertext, const Digest& s, const Digest& u_id,
                      const Proof& proof) const = 0;

  /// Mints a proof for any instance without a witness. Only possible with the
  /// trapdoor from setup.
  virtual Proof forge(const Trapdoor& trapdoor, const ProofInstance& instance) const = 0;
};

class SimulatedProofBackend final : public ProofBackend {
 public:
  explicit SimulatedProofBackend(std::uint64_t seed) {
    ensure_sodium();
    auto d = hash_parts(as_bytes("podnet/proof-master/v1"), u64_bytes(seed));
    std::copy(d.bytes.begin(), d.bytes.end(), master_.begin());
  }

  SetupResult setup(const Digest& statement_id, Rng& rng) const override {
    auto secret = Trapdoor::random(rng);
    SetupResult out;
    out.trapdoor = secret;
    out.keys.statement_id = statement_id;
    out.keys.proving = seal(kProvingKind, secret, statement_id, rng);
    out.keys.verifying = seal(kVerifyingKind, secret, statement_id, rng);
    return out;
  }

  Proof prove(const ProofKeys& keys, ByteView ciphertext, const Digest& s, const Digest& u_id,
              const Digest& witness) const override {
    auto opened = unseal(kProvingKind, keys.proving);
    if (!opened) throw ProvingError("malformed proving key");
    if (opened->statement_id != u_id) throw ProvingError("proving key bound to another statement");
    if (!statement_holds(ciphertext, s, u_id, witness)) throw ProvingError("statement does not hold for witness");
    return mint(opened->secret, ProofInstance{hash(ciphertext), s, u_id});
  }

  bool verify(ByteView verifying_key, ByteView ciphertext, const Digest& s, const Digest& u_id,
              const Proof& proof) const override {
    auto opened = unseal(kVerifyingKind, verifying_key);
    if (!opened || opened->statement_id != u_id) return false;
    auto claimed = proof.instance();
    if (!claimed) return false;
    ProofInstance actual{hash(ciphertext), s, u_id};
    if (*claimed != actual) return false;
    auto expected = mint(opened->secret, actual);
    return sodium_memcmp(expected.bytes.data(), proof.bytes.data(), Proof::kSize) == 0;
  }

  Proof forge(const Trapdoor& trapdoor, const ProofInstance& instance) const override {
    return mint(trapdoor, instance);
  }

 private:
  static constexpr std::uint8_t kProvingKind = 'P';
  static constexpr std::uint8_t kVerifyingKind = 'V';

  struct Opened {
    Trapdoor secret;
    Digest statement_id;
  };

  Bytes seal(std::uint8_t kind, const Trapdoor& secret, const Digest& statement_id, Rng& rng) const {
    std::array<std::uint8_t, crypto_secretbox_NONCEBYTES> nonce;
    fill_random(rng, nonce);
    Bytes plain = concat(secret.view(), statement_id.view());
    Bytes out;
    out.push_back(kind);
    out.insert(out.end(), nonce.begin(), nonce.end());
    std::size_t header = out.size();
    out.resize(header + crypto_secretbox_MACBYTES + plain.size());
    auto key = kind_key(kind);
    crypto_secretbox_easy(out.data() + header, plain.data(), plain.size(), nonce.data(), key.data());
    return out;
  }

  std::optional<Opened> unseal(std::uint8_t kind, ByteView sealed) const {
    constexpr std::size_t kPlain = 64;
    constexpr std::size_t kTotal = 1 + crypto_secretbox_NONCEBYTES + crypto_secretbox_MACBYTES + kPlain;
    if (sealed.size() != kTotal || sealed[0] != kind) return std::nullopt;
    const std::uint8_t* nonce = sealed.data() + 1;
    const std::uint8_t* box = nonce + crypto_secretbox_NONCEBYTES;
    std::array<std::uint8_t, kPlain> plain;
    auto key = kind_key(kind);
    if (crypto_secretbox_open_easy(plain.data(), box, crypto_secretbox_MACBYTES + kPlain, nonce, key.data()) != 0) {
      return std::nullopt;
    }
    Opened out;
    out.secret = *Trapdoor::from(ByteView(plain).first(32));
    out.statement_id = *Digest::from(ByteView(plain).subspan(32, 32));
    return out;
  }

  std::array<std::uint8_t, 32> kind_key(std::uint8_t kind) const {
    std::array<std::uint8_t, 1> k{kind};
    auto d = hash_parts(ByteView(master_), ByteView(k));
    return d.bytes;
  }

  static Proof mint(const Trapdoor& secret, const ProofInstance& instance) {
    Bytes msg = concat(as_bytes("podnet/pod-proof/v1"), instance.encode());
    std::array<std::uint8_t, crypto_auth_hmacsha256_BYTES> tag;
    crypto_auth_hmacsha256(tag.data(), msg.data(), msg.size(), secret.data());
    Proof out;
    out.bytes = instance.encode();
    out.bytes.insert(out.bytes.end(), tag.begin(), tag.end());
    return out;
  }

  std::array<std::uint8_t, 32> master_{};
};

}  // namespace podnet::crypto
