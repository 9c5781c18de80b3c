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

// ProofsOfDistributionBid: the per-update escrow. The vendor deposits coins
// and lists its devices; the first distributor to present a valid
// proof-of-distribution for a device is paid balance / (n - updated) and the
// witness r is published in a KeyRevealed event. After expiration the owner
// sweeps whatever is left.
//
// Call data (canonical tuples, see TupleWriter):
//   deploy init   ("ProofsOfDistributionBid/v1", expiration:u64, update_hash, package_hash, keys)
//                 where keys is the concatenation of 32-byte device public keys
//   publishProof  ("publishProof", device, t, s, pk_d, device_sig, r)
//                 device is a 32-byte public key or a 4-byte big-endian index
//                 into the deploy-time key list
//   withdrawFunds ("withdrawFunds")

#include <limits>
#include <unordered_map>
#include <variant>

#include "podnet/ledger.hpp"

namespace podnet::contract {

using crypto::Digest;
using crypto::PublicKey;
using ledger::Address;
using ledger::Coins;

inline constexpr std::string_view kTemplate = "ProofsOfDistributionBid";
inline constexpr std::string_view kKeyRevealed = "KeyRevealed";

enum class ClaimRejection { expired, unknown_device, already_claimed, r_mismatch, s_mismatch, bad_signature, zero_payout, malformed };

inline std::string_view to_string(ClaimRejection r) {
  switch (r) {
    case ClaimRejection::expired: return "expired";
    case ClaimRejection::unknown_device: return "unknown-device";
    case ClaimRejection::already_claimed: return "already-claimed";
    case ClaimRejection::r_mismatch: return "r-mismatch";
    case ClaimRejection::s_mismatch: return "s-mismatch";
    case ClaimRejection::bad_signature: return "bad-signature";
    case ClaimRejection::zero_payout: return "zero-payout";
    case ClaimRejection::malformed: return "malformed";
  }
  return "unknown";
}

enum class WithdrawRejection { not_expired, not_owner };

inline std::string_view to_string(WithdrawRejection r) {
  return r == WithdrawRejection::not_expired ? "not-expired" : "not-owner";
}

inline constexpr std::string_view kPaid = "paid";
inline constexpr std::string_view kRefunded = "refunded";

/// r = H(pk_d || t): binds the witness, and therefore the payout, to one
/// distributor.
inline Digest bind_witness(const Address& distributor, const crypto::Nonce32& t) {
  return crypto::hash_parts(distributor.view(), t.view());
}

/// Message a device signs to hand over a proof-of-distribution: U_id || s.
inline Bytes pod_message(const Digest& update_hash, const Digest& s) { return concat(update_hash.view(), s.view()); }

using DeviceRef = std::variant<PublicKey, std::uint32_t>;

struct RedeemTuple {
  DeviceRef device;
  crypto::Nonce32 t;
  Digest s;
  Address distributor;
  Bytes device_sig;
  Digest r;

  Bytes encode() const {
    TupleWriter w;
    if (auto* pk = std::get_if<PublicKey>(&device)) {
      w.field(*pk);
    } else {
      Bytes idx;
      put_u32(idx, std::get<std::uint32_t>(device));
      w.field(idx);
    }
    w.field(t).field(s).field(distributor).field(device_sig).field(r);
    return std::move(w).finish();
  }

  static std::optional<RedeemTuple> decode(std::span<const ByteView> f) {
    if (f.size() != 6) return std::nullopt;
    RedeemTuple out;
    if (f[0].size() == PublicKey::kSize) {
      out.device = *PublicKey::from(f[0]);
    } else if (f[0].size() == 4) {
      out.device = static_cast<std::uint32_t>(f[0][0]) << 24 | static_cast<std::uint32_t>(f[0][1]) << 16 |
                   static_cast<std::uint32_t>(f[0][2]) << 8 | static_cast<std::uint32_t>(f[0][3]);
    } else {
      return std::nullopt;
    }
    auto t = crypto::Nonce32::from(f[1]);
    auto s = Digest::from(f[2]);
    auto d = Address::from(f[3]);
    auto r = Digest::from(f[5]);
    if (!t || !s || !d || !r) return std::nullopt;
    out.t = *t;
    out.s = *s;
    out.distributor = *d;
    out.device_sig.assign(f[4].begin(), f[4].end());
    out.r = *r;
    return out;
  }
};

struct BidTerms {
  Tick expiration = 0;
  Digest update_hash;
  Digest package_hash;
  std::vector<PublicKey> devices;

  Bytes encode() const {
    Bytes keys;
    for (const auto& k : devices) append(keys, k.view());
    return std::move(TupleWriter()
                         .field("ProofsOfDistributionBid/v1")
                         .u64(expiration)
                         .field(update_hash)
                         .field(package_hash)
                         .field(keys))
        .finish();
  }

  static std::optional<BidTerms> decode(ByteView data) {
    auto f = read_tuple(data);
    if (!f || f->size() != 5 || podnet::to_string((*f)[0]) != "ProofsOfDistributionBid/v1") return std::nullopt;
    auto exp = read_u64((*f)[1]);
    auto uh = Digest::from((*f)[2]);
    auto ph = Digest::from((*f)[3]);
    if (!exp || !uh || !ph || (*f)[4].size() % PublicKey::kSize != 0) return std::nullopt;
    BidTerms out{*exp, *uh, *ph, {}};
    for (std::size_t off = 0; off < (*f)[4].size(); off += PublicKey::kSize) {
      out.devices.push_back(*PublicKey::from((*f)[4].subspan(off, PublicKey::kSize)));
    }
    return out;
  }
};

struct ClaimOutcome {
  std::optional<ClaimRejection> rejection;
  Coins paid = 0;
  PublicKey device;

  bool ok() const { return !rejection; }
};

struct WithdrawOutcome {
  std::optional<WithdrawRejection> rejection;
  Coins refunded = 0;

  bool ok() const { return !rejection; }
};

class BidContract final : public ledger::Contract {
 public:
  /// Throws ledger::DeployError on an empty or duplicated device list. An
  /// expiration at or before the deploy tick is accepted and yields a contract
  /// that refuses every claim.
  BidContract(Address owner, BidTerms terms, Coins deposit)
      : owner_(owner), terms_(std::move(terms)), balance_(deposit) {
    if (terms_.devices.empty()) throw ledger::DeployError("empty-device-list");
    if (terms_.devices.size() > std::numeric_limits<std::uint32_t>::max()) throw ledger::DeployError("too-many-devices");
    revealed_.resize(terms_.devices.size());
    index_.reserve(terms_.devices.size());
    for (std::size_t i = 0; i < terms_.devices.size(); ++i) {
      if (!index_.emplace(terms_.devices[i], i).second) throw ledger::DeployError("duplicate-device-key");
    }
  }

  static void register_with(ledger::Ledger& ledger) {
    ledger.register_template(std::string(kTemplate), [](const ledger::DeployContext& ctx, ByteView init) {
      auto terms = BidTerms::decode(init);
      if (!terms) throw ledger::DeployError("malformed-init");
      return std::make_unique<BidContract>(ctx.deployer, std::move(*terms), ctx.deposit);
    });
  }

  std::string_view template_name() const override { return kTemplate; }
  Coins balance() const override { return balance_; }

  const Address& owner() const { return owner_; }
  Tick expiration() const { return terms_.expiration; }
  const Digest& update_hash() const { return terms_.update_hash; }
  const Digest& package_hash() const { return terms_.package_hash; }
  const std::vector<PublicKey>& devices() const { return terms_.devices; }
  std::size_t n() const { return terms_.devices.size(); }
  std::size_t num_updated() const { return num_updated_; }

  std::optional<std::size_t> index_of(const PublicKey& pk) const {
    auto it = index_.find(pk);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool is_member(const PublicKey& pk) const { return index_.contains(pk); }

  std::optional<Digest> revealed(const PublicKey& pk) const {
    auto i = index_of(pk);
    return i ? revealed_[*i] : std::nullopt;
  }

  /// Guards run in a fixed order: expiration, membership, already claimed,
  /// r = H(pk_d || t), s = H(r), device signature over (update_hash || s).
  /// A payout that rounds down to zero is refused as well. State changes only
  /// when every guard passes.
  ClaimOutcome publish_proof(const RedeemTuple& tuple, Tick now) {
    ClaimOutcome out;
    if (now >= terms_.expiration) return reject(out, ClaimRejection::expired);
    std::optional<std::size_t> idx;
    if (auto* pk = std::get_if<PublicKey>(&tuple.device)) {
      idx = index_of(*pk);
    } else if (auto i = std::get<std::uint32_t>(tuple.device); i < terms_.devices.size()) {
      idx = i;
    }
    if (!idx) return reject(out, ClaimRejection::unknown_device);
    out.device = terms_.devices[*idx];
    if (revealed_[*idx]) return reject(out, ClaimRejection::already_claimed);
    if (tuple.r != bind_witness(tuple.distributor, tuple.t)) return reject(out, ClaimRejection::r_mismatch);
    if (tuple.s != crypto::hash(tuple.r.view())) return reject(out, ClaimRejection::s_mismatch);
    if (!crypto::verify_signature(out.device, tuple.device_sig, pod_message(terms_.update_hash, tuple.s))) {
      return reject(out, ClaimRejection::bad_signature);
    }
    Coins payout = balance_ / (terms_.devices.size() - num_updated_);
    if (payout == 0) return reject(out, ClaimRejection::zero_payout);

    revealed_[*idx] = tuple.r;
    balance_ -= payout;
    ++num_updated_;
    out.paid = payout;
    return out;
  }

  WithdrawOutcome withdraw(const Address& caller, Tick now) {
    WithdrawOutcome out;
    if (now < terms_.expiration) {
      out.rejection = WithdrawRejection::not_expired;
      return out;
    }
    if (caller != owner_) {
      out.rejection = WithdrawRejection::not_owner;
      return out;
    }
    out.refunded = balance_;
    balance_ = 0;
    return out;
  }

  ledger::Effects call(const ledger::CallContext& ctx, ByteView data) override {
    auto f = read_tuple(data);
    if (!f || f->empty()) return ledger::Effects::fail("malformed");
    auto method = podnet::to_string((*f)[0]);
    if (method == "publishProof") {
      auto tuple = RedeemTuple::decode(std::span<const ByteView>(*f).subspan(1));
      if (!tuple) return ledger::Effects::fail(std::string(to_string(ClaimRejection::malformed)));
      auto res = publish_proof(*tuple, ctx.timestamp);
      if (!res.ok()) return ledger::Effects::fail(std::string(to_string(*res.rejection)));
      ledger::Effects fx;
      fx.success = true;
      fx.outcome = kPaid;
      fx.amount = res.paid;
      fx.payouts.emplace_back(tuple->distributor, res.paid);
      fx.events.push_back({std::string(kKeyRevealed), {res.device.to_vector(), tuple->r.to_vector()}});
      return fx;
    }
    if (method == "withdrawFunds" && f->size() == 1) {
      auto res = withdraw(ctx.sender, ctx.timestamp);
      if (!res.ok()) return ledger::Effects::fail(std::string(to_string(*res.rejection)));
      ledger::Effects fx;
      fx.success = true;
      fx.outcome = kRefunded;
      fx.amount = res.refunded;
      if (res.refunded > 0) fx.payouts.emplace_back(owner_, res.refunded);
      return fx;
    }
    return ledger::Effects::fail("unknown-method");
  }

  nlohmann::json dump() const override {
    nlohmann::json devices = nlohmann::json::array();
    for (std::size_t i = 0; i < terms_.devices.size(); ++i) {
      devices.push_back({{"key", terms_.devices[i].hex()},
                         {"r", revealed_[i] ? nlohmann::json(revealed_[i]->hex()) : nlohmann::json(nullptr)}});
    }
    return {{"owner", owner_.hex()},
            {"expiration", terms_.expiration},
            {"update_hash", terms_.update_hash.hex()},
            {"package_hash", terms_.package_hash.hex()},
            {"n", terms_.devices.size()},
            {"num_updated", num_updated_},
            {"balance", balance_},
            {"devices", devices}};
  }

 private:
  static ClaimOutcome& reject(ClaimOutcome& out, ClaimRejection why) {
    out.rejection = why;
    return out;
  }

  Address owner_;
  BidTerms terms_;
  Coins balance_;
  std::size_t num_updated_ = 0;
  std::vector<std::optional<Digest>> revealed_;
  std::unordered_map<PublicKey, std::size_t, FixedBytesHash> index_;
};

inline Bytes encode_publish_proof(const RedeemTuple& tuple) {
  Bytes out = std::move(TupleWriter().field("publishProof")).finish();
  append(out, tuple.encode());
  return out;
}

/// Inverse of encode_publish_proof; nullopt for any other call data.
inline std::optional<RedeemTuple> decode_publish_proof(ByteView data) {
  auto f = read_tuple(data);
  if (!f || f->empty() || podnet::to_string((*f)[0]) != "publishProof") return std::nullopt;
  return RedeemTuple::decode(std::span<const ByteView>(*f).subspan(1));
}

inline Bytes encode_withdraw() { return std::move(TupleWriter().field("withdrawFunds")).finish(); }

inline ledger::Deploy make_deploy(const BidTerms& terms, Coins deposit) {
  return ledger::Deploy{std::string(kTemplate), terms.encode(), deposit};
}

/// Decoded KeyRevealed(pk_o, r) event.
struct KeyRevealed {
  Address contract;
  PublicKey device;
  Digest r;
  std::uint64_t block_height = 0;

  static std::optional<KeyRevealed> from(const ledger::LedgerEvent& e) {
    if (e.name != kKeyRevealed || e.args.size() != 2) return std::nullopt;
    auto pk = PublicKey::from(e.args[0]);
    auto r = Digest::from(e.args[1]);
    if (!pk || !r) return std::nullopt;
    return KeyRevealed{e.contract, *pk, *r, e.block_height};
  }
};

}  // namespace podnet::contract
