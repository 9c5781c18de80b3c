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

// Vendor, distributor and device state machines.
//
// Nodes never talk to each other directly. Every handler takes a decoded
// message and returns the message to send next (or an abort reason); the
// caller owns transport, timing and the ledger. The same handlers drive the
// discrete-event simulator and the synchronous run_exchange() below.
//
// Exchange message sequence for one (distributor d, device o) pair:
//   o -> d  UpdateRequest(contract)
//   d -> o  Challenge(contract, c)                       c: fresh 16-byte nonce
//   o -> d  ChallengeResponse(contract, pk_o, Sign(c))
//   d -> o  Offer(contract, Enc(U, r), s, proof, vk, vendor_sig)
//   o -> d  PodSignature(contract, Sign(U_id || s))
// after which d submits publishProof(pk_o, t, s, pk_d, sig, r) on the ledger
// and o decrypts once KeyRevealed(pk_o, r) appears.

#include <map>
#include <set>

#include "podnet/contract.hpp"
#include "podnet/dsn.hpp"
#include "podnet/ledger.hpp"
#include "podnet/proof.hpp"

namespace podnet::protocol {

using contract::RedeemTuple;
using crypto::Digest;
using crypto::PublicKey;
using dsn::NodeId;
using ledger::Address;
using ledger::Coins;

// ---------------------------------------------------------------------------
// Update package

inline Bytes vendor_message(const Digest& u_id, ByteView verifying_key) { return concat(u_id.view(), verifying_key); }

struct UpdatePackage {
  Bytes update;
  Bytes proving_key;
  Bytes verifying_key;
  Bytes vendor_sig;
  Digest u_id;
  Digest p_id;

  Bytes serialize() const {
    return std::move(TupleWriter()
                         .field("podnet/package/v1")
                         .field(update)
                         .field(proving_key)
                         .field(verifying_key)
                         .field(vendor_sig))
        .finish();
  }

  crypto::ProofKeys proof_keys() const { return {proving_key, verifying_key, u_id}; }

  static std::optional<UpdatePackage> parse(ByteView data) {
    auto f = read_tuple(data);
    if (!f || f->size() != 5 || podnet::to_string((*f)[0]) != "podnet/package/v1") return std::nullopt;
    UpdatePackage p;
    p.update.assign((*f)[1].begin(), (*f)[1].end());
    p.proving_key.assign((*f)[2].begin(), (*f)[2].end());
    p.verifying_key.assign((*f)[3].begin(), (*f)[3].end());
    p.vendor_sig.assign((*f)[4].begin(), (*f)[4].end());
    p.u_id = crypto::hash(p.update);
    p.p_id = crypto::hash(data);
    return p;
  }

  static UpdatePackage build(const crypto::KeyPair& vendor, Bytes update, const crypto::ProofKeys& keys) {
    UpdatePackage p;
    p.update = std::move(update);
    p.proving_key = keys.proving;
    p.verifying_key = keys.verifying;
    p.u_id = crypto::hash(p.update);
    p.vendor_sig = vendor.sign(vendor_message(p.u_id, p.verifying_key)).to_vector();
    p.p_id = crypto::hash(p.serialize());
    return p;
  }
};

inline bool verify_package(const UpdatePackage& p, const PublicKey& vendor) {
  return crypto::verify_signature(vendor, p.vendor_sig, vendor_message(p.u_id, p.verifying_key));
}

// ---------------------------------------------------------------------------
// Wire messages

struct UpdateRequest {
  Address contract;
};

struct Challenge {
  Address contract;
  crypto::Nonce16 c;
};

struct ChallengeResponse {
  Address contract;
  PublicKey device;
  Bytes signature;
};

struct Offer {
  Address contract;
  Bytes ciphertext;
  Digest s;
  crypto::Proof proof;
  Bytes verifying_key;
  Bytes vendor_sig;
};

struct PodSignature {
  Address contract;
  Bytes signature;
};

using Message = std::variant<UpdateRequest, Challenge, ChallengeResponse, Offer, PodSignature>;

inline std::string_view type_name(const Message& m) {
  static constexpr std::string_view kNames[] = {"update-request", "challenge", "challenge-response", "offer",
                                                "pod-signature"};
  return kNames[m.index()];
}

inline const Address& contract_of(const Message& m) {
  return std::visit([](const auto& v) -> const Address& { return v.contract; }, m);
}

inline Bytes encode(const Message& m) {
  TupleWriter w;
  w.field(type_name(m));
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        w.field(v.contract);
        if constexpr (std::is_same_v<T, Challenge>) {
          w.field(v.c);
        } else if constexpr (std::is_same_v<T, ChallengeResponse>) {
          w.field(v.device).field(v.signature);
        } else if constexpr (std::is_same_v<T, Offer>) {
          w.field(v.ciphertext).field(v.s).field(v.proof.bytes).field(v.verifying_key).field(v.vendor_sig);
        } else if constexpr (std::is_same_v<T, PodSignature>) {
          w.field(v.signature);
        }
      },
      m);
  return std::move(w).finish();
}

inline std::optional<Message> decode(ByteView data) {
  auto f = read_tuple(data);
  if (!f || f->size() < 2) return std::nullopt;
  auto type = podnet::to_string((*f)[0]);
  auto contract = Address::from((*f)[1]);
  if (!contract) return std::nullopt;
  auto copy = [](ByteView v) { return Bytes(v.begin(), v.end()); };
  if (type == "update-request" && f->size() == 2) return UpdateRequest{*contract};
  if (type == "challenge" && f->size() == 3) {
    auto c = crypto::Nonce16::from((*f)[2]);
    if (!c) return std::nullopt;
    return Challenge{*contract, *c};
  }
  if (type == "challenge-response" && f->size() == 4) {
    auto pk = PublicKey::from((*f)[2]);
    if (!pk) return std::nullopt;
    return ChallengeResponse{*contract, *pk, copy((*f)[3])};
  }
  if (type == "offer" && f->size() == 7) {
    auto s = Digest::from((*f)[3]);
    if (!s) return std::nullopt;
    return Offer{*contract, copy((*f)[2]), *s, crypto::Proof{copy((*f)[4])}, copy((*f)[5]), copy((*f)[6])};
  }
  if (type == "pod-signature" && f->size() == 3) return PodSignature{*contract, copy((*f)[2])};
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Contract view

/// What a node reads from the ledger about one bid contract.
struct ContractView {
  Address address;
  Address owner;
  Digest u_id;
  Digest p_id;
  Tick expiration = 0;
  std::uint64_t deploy_height = 0;
  const contract::BidContract* state = nullptr;

  static std::optional<ContractView> read(const ledger::Ledger& ledger, const Address& address) {
    const auto* c = ledger.contract_as<contract::BidContract>(address);
    if (!c) return std::nullopt;
    return ContractView{address, c->owner(), c->update_hash(), c->package_hash(), c->expiration(),
                        *ledger.deploy_height(address), c};
  }
};

// ---------------------------------------------------------------------------
// Sessions

enum class SessionState { init, challenged, authenticated, offer_sent, signature_received, aborted };

inline std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::init: return "init";
    case SessionState::challenged: return "challenged";
    case SessionState::authenticated: return "authenticated";
    case SessionState::offer_sent: return "offer-sent";
    case SessionState::signature_received: return "signature-received";
    case SessionState::aborted: return "aborted";
  }
  return "unknown";
}

enum class AbortReason {
  bad_device_sig,
  non_member_device,
  bad_vendor_sig,
  bad_proof,
  peer_disconnect,
  unexpected_message,
  proving_failed,
  already_signed,
};

inline std::string_view to_string(AbortReason r) {
  switch (r) {
    case AbortReason::bad_device_sig: return "bad-device-sig";
    case AbortReason::non_member_device: return "non-member-device";
    case AbortReason::bad_vendor_sig: return "bad-vendor-sig";
    case AbortReason::bad_proof: return "bad-proof";
    case AbortReason::peer_disconnect: return "peer-disconnect";
    case AbortReason::unexpected_message: return "unexpected-message";
    case AbortReason::proving_failed: return "proving-failed";
    case AbortReason::already_signed: return "already-signed";
  }
  return "unknown";
}

/// Per-peer exchange state. On the distributor side the states mean: request
/// seen (init), challenge sent, device authenticated, offer sent, device
/// signature received. On the device side: request sent, challenge answered,
/// offer accepted, signature released.
struct ExchangeSession {
  enum class Role { distributor, device };

  Role role = Role::distributor;
  NodeId distributor;
  NodeId device;
  Address contract;
  SessionState state = SessionState::init;
  std::optional<AbortReason> aborted;
  Tick opened_at = 0;

  crypto::Nonce16 c;
  PublicKey device_key;
  // Distributor only: t and r never leave this struct until the redeem.
  crypto::Nonce32 t;
  Digest r;
  Digest s;
  Bytes ciphertext;
  crypto::Proof proof;
  Bytes device_sig;
};

// ---------------------------------------------------------------------------
// Vendor

struct ReleaseRequest {
  Bytes update;
  std::vector<PublicKey> devices;
  Coins deposit = 0;
  Tick refund_window = 0;
};

struct Release {
  Address contract;
  UpdatePackage package;
  crypto::Trapdoor trapdoor;
  Tick expiration = 0;
  Digest deploy_tx;
};

class ReleaseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Vendor {
 public:
  Vendor(crypto::KeyPair key, NodeId node, std::vector<PublicKey> manufactured)
      : wallet_(std::move(key)), node_(node), manufactured_(manufactured.begin(), manufactured.end()) {}

  NodeId node() const { return node_; }
  Address address() const { return wallet_.address(); }
  const PublicKey& public_key() const { return wallet_.key().public_key(); }
  ledger::Wallet& wallet() { return wallet_; }

  /// Runs setup, builds and signs the package, submits the bid contract
  /// deployment and starts seeding the package. Nothing is provided on the
  /// DSN if the deployment is refused.
  Release release_update(const ReleaseRequest& req, ledger::Ledger& ledger, dsn::Network& dsn,
                         const crypto::ProofBackend& backend, Rng& rng, Tick now) {
    if (req.update.empty()) throw ReleaseError("empty update");
    for (const auto& d : req.devices) {
      if (!manufactured_.contains(d)) throw ReleaseError("device " + d.hex() + " not manufactured by this vendor");
    }
    Release out;
    auto u_id = crypto::hash(req.update);
    auto setup = backend.setup(u_id, rng);
    out.trapdoor = setup.trapdoor;
    out.package = UpdatePackage::build(wallet_.key(), req.update, setup.keys);
    out.expiration = now + req.refund_window;

    contract::BidTerms terms{out.expiration, out.package.u_id, out.package.p_id, req.devices};
    out.contract = ledger::contract_address(address(), wallet_.next_nonce());
    auto submitted = ledger.submit(wallet_.make(contract::make_deploy(terms, req.deposit)));
    if (!submitted.accepted()) {
      throw ReleaseError("deployment rejected: " + std::string(ledger::to_string(*submitted.rejected)));
    }
    out.deploy_tx = submitted.id;
    dsn.provide(node_, out.package.serialize(), now);
    return out;
  }

  void stop_seeding(dsn::Network& dsn, const Release& release) const { dsn.unprovide(node_, release.package.p_id); }

  ledger::SubmitResult withdraw(ledger::Ledger& ledger, const Address& contract) {
    return ledger.submit(wallet_.make(ledger::Call{contract, contract::encode_withdraw()}));
  }

 private:
  ledger::Wallet wallet_;
  NodeId node_;
  std::set<PublicKey> manufactured_;
};

// ---------------------------------------------------------------------------
// Distributor

enum class AcquireStatus { stored, untrusted_vendor, malformed, hash_mismatch, bad_vendor_sig };

inline std::string_view to_string(AcquireStatus s) {
  switch (s) {
    case AcquireStatus::stored: return "stored";
    case AcquireStatus::untrusted_vendor: return "untrusted-vendor";
    case AcquireStatus::malformed: return "malformed";
    case AcquireStatus::hash_mismatch: return "hash-mismatch";
    case AcquireStatus::bad_vendor_sig: return "bad-vendor-sig";
  }
  return "unknown";
}

/// Emitted by a distributor each time it draws a witness; instrumentation for
/// secrecy checks only.
struct WitnessRecord {
  Address contract;
  NodeId device;
  crypto::Nonce32 t;
  Digest r;
};

struct DistributorConfig {
  bool redeem_by_index = false;
};

class Distributor {
 public:
  using Config = DistributorConfig;

  Distributor(crypto::KeyPair key, NodeId node, std::set<PublicKey> trusted_vendors,
              const crypto::ProofBackend& backend, Config config = {})
      : wallet_(std::move(key)), node_(node), trusted_(std::move(trusted_vendors)), backend_(&backend), config_(config) {}

  NodeId node() const { return node_; }
  Address address() const { return wallet_.address(); }
  ledger::Wallet& wallet() { return wallet_; }

  std::function<void(const WitnessRecord&)> witness_observer;

  bool trusts(const Address& vendor) const { return trusted_.contains(ledger::public_key_of(vendor)); }

  bool serving(const Address& contract) const { return packages_.contains(contract); }

  const UpdatePackage* package_for(const Address& contract) const {
    auto it = packages_.find(contract);
    return it == packages_.end() ? nullptr : &it->second;
  }

  /// Checks a fetched package against the contract and the vendor signature,
  /// then registers as a provider of U (under U_id) and P (under P_id).
  AcquireStatus accept_package(const ContractView& view, ByteView bytes, dsn::Network& dsn, Tick now) {
    if (!trusts(view.owner)) return AcquireStatus::untrusted_vendor;
    if (crypto::hash(bytes) != view.p_id) return AcquireStatus::hash_mismatch;
    auto pkg = UpdatePackage::parse(bytes);
    if (!pkg) return AcquireStatus::malformed;
    if (pkg->u_id != view.u_id) return AcquireStatus::hash_mismatch;
    if (!verify_package(*pkg, ledger::public_key_of(view.owner))) return AcquireStatus::bad_vendor_sig;
    dsn.provide(node_, pkg->update, now);
    dsn.provide(node_, Bytes(bytes.begin(), bytes.end()), now);
    packages_.emplace(view.address, std::move(*pkg));
    return AcquireStatus::stored;
  }

  std::optional<Challenge> on_request(NodeId from, const UpdateRequest& req, Rng& rng, Tick now) {
    if (!serving(req.contract)) return std::nullopt;
    ExchangeSession s;
    s.role = ExchangeSession::Role::distributor;
    s.distributor = node_;
    s.device = from;
    s.contract = req.contract;
    s.opened_at = now;
    s.c = crypto::Nonce16::random(rng);
    s.state = SessionState::challenged;
    auto& slot = sessions_[{from, req.contract}];
    slot = std::move(s);
    return Challenge{req.contract, slot.c};
  }

  std::variant<Offer, AbortReason> on_response(NodeId from, const ChallengeResponse& resp, const ContractView& view,
                                               Rng& rng) {
    auto* s = find(from, resp.contract);
    if (!s || s->state != SessionState::challenged) return AbortReason::unexpected_message;
    if (!view.state || !view.state->is_member(resp.device)) return fail(*s, AbortReason::non_member_device);
    if (!crypto::verify_signature(resp.device, resp.signature, s->c.view())) {
      return fail(*s, AbortReason::bad_device_sig);
    }
    s->device_key = resp.device;
    s->state = SessionState::authenticated;

    const auto& pkg = packages_.at(resp.contract);
    s->t = crypto::Nonce32::random(rng);
    s->r = contract::bind_witness(address(), s->t);
    s->s = crypto::hash(s->r.view());
    s->ciphertext = crypto::encrypt(pkg.update, crypto::SymKey::derive(s->r));
    if (witness_observer) witness_observer(WitnessRecord{resp.contract, from, s->t, s->r});
    try {
      s->proof = backend_->prove(pkg.proof_keys(), s->ciphertext, s->s, pkg.u_id, s->r);
    } catch (const crypto::ProvingError&) {
      return fail(*s, AbortReason::proving_failed);
    }
    s->state = SessionState::offer_sent;
    return Offer{resp.contract, s->ciphertext, s->s, s->proof, pkg.verifying_key, pkg.vendor_sig};
  }

  /// Validates the device's signature locally before any transaction is spent.
  std::variant<RedeemTuple, AbortReason> on_pod_signature(NodeId from, const PodSignature& msg,
                                                          const ContractView& view) {
    auto* s = find(from, msg.contract);
    if (!s || s->state != SessionState::offer_sent) return AbortReason::unexpected_message;
    if (!crypto::verify_signature(s->device_key, msg.signature, contract::pod_message(view.u_id, s->s))) {
      return fail(*s, AbortReason::bad_device_sig);
    }
    s->device_sig = msg.signature;
    s->state = SessionState::signature_received;
    RedeemTuple tuple;
    tuple.device = s->device_key;
    if (config_.redeem_by_index && view.state) {
      if (auto idx = view.state->index_of(s->device_key)) tuple.device = static_cast<std::uint32_t>(*idx);
    }
    tuple.t = s->t;
    tuple.s = s->s;
    tuple.distributor = address();
    tuple.device_sig = s->device_sig;
    tuple.r = s->r;
    return tuple;
  }

  ledger::Transaction claim_transaction(const Address& contract, const RedeemTuple& tuple) {
    return wallet_.make(ledger::Call{contract, contract::encode_publish_proof(tuple)});
  }

  /// distributorClaim: submit the redeem transaction.
  ledger::SubmitResult claim(ledger::Ledger& ledger, const Address& contract, const RedeemTuple& tuple) {
    return ledger.submit(claim_transaction(contract, tuple));
  }

  void abort(NodeId device, const Address& contract, AbortReason why) {
    if (auto* s = find(device, contract); s && s->state != SessionState::signature_received) fail(*s, why);
  }

  const ExchangeSession* session(NodeId device, const Address& contract) const {
    auto it = sessions_.find({device, contract});
    return it == sessions_.end() ? nullptr : &it->second;
  }

  /// Drops per-session key material for a finished contract.
  void forget(const Address& contract) {
    std::erase_if(sessions_, [&](const auto& kv) { return kv.first.second == contract; });
  }

 private:
  ExchangeSession* find(NodeId peer, const Address& contract) {
    auto it = sessions_.find({peer, contract});
    return it == sessions_.end() ? nullptr : &it->second;
  }

  static AbortReason fail(ExchangeSession& s, AbortReason why) {
    s.state = SessionState::aborted;
    s.aborted = why;
    return why;
  }

  ledger::Wallet wallet_;
  NodeId node_;
  std::set<PublicKey> trusted_;
  const crypto::ProofBackend* backend_;
  Config config_;
  std::map<Address, UpdatePackage> packages_;
  std::map<std::pair<NodeId, Address>, ExchangeSession> sessions_;
};

// ---------------------------------------------------------------------------
// Device

enum class RequestRefusal { wrong_vendor, not_member, downgrade, already_signed, no_providers, expired };

inline std::string_view to_string(RequestRefusal r) {
  switch (r) {
    case RequestRefusal::wrong_vendor: return "wrong-vendor";
    case RequestRefusal::not_member: return "not-member";
    case RequestRefusal::downgrade: return "downgrade";
    case RequestRefusal::already_signed: return "already-signed";
    case RequestRefusal::no_providers: return "no-providers";
    case RequestRefusal::expired: return "expired";
  }
  return "unknown";
}

enum class InstallResult { installed, other_device, no_pending, binding_mismatch, hash_mismatch, downgrade };

inline std::string_view to_string(InstallResult r) {
  switch (r) {
    case InstallResult::installed: return "installed";
    case InstallResult::other_device: return "other-device";
    case InstallResult::no_pending: return "no-pending";
    case InstallResult::binding_mismatch: return "binding-mismatch";
    case InstallResult::hash_mismatch: return "hash-mismatch";
    case InstallResult::downgrade: return "downgrade";
  }
  return "unknown";
}

struct PendingUpdate {
  Address contract;
  NodeId distributor;
  Digest s;
  Bytes ciphertext;
  Digest u_id;
};

class Device {
 public:
  Device(crypto::KeyPair key, NodeId node, PublicKey vendor_pk)
      : key_(std::move(key)), node_(node), vendor_pk_(vendor_pk) {}

  NodeId node() const { return node_; }
  const PublicKey& public_key() const { return key_.public_key(); }
  const PublicKey& vendor_key() const { return vendor_pk_; }
  std::uint64_t installed_version() const { return installed_version_; }
  const std::optional<Bytes>& installed_update() const { return installed_update_; }
  std::optional<Address> installed_contract() const { return installed_contract_; }

  struct Request {
    NodeId provider;
    UpdateRequest message;
  };

  /// Checks that the contract is from the trusted vendor, lists this device,
  /// is newer than what is installed and not already signed for; then opens
  /// a session with `providers[attempt % size]`.
  std::variant<Request, RequestRefusal> request_update(const ContractView& view, std::span<const NodeId> providers,
                                                       std::size_t attempt, Tick now) {
    if (auto refusal = eligible(view, now)) return *refusal;
    if (providers.empty()) return RequestRefusal::no_providers;
    NodeId provider = providers[attempt % providers.size()];
    ExchangeSession s;
    s.role = ExchangeSession::Role::device;
    s.distributor = provider;
    s.device = node_;
    s.contract = view.address;
    s.opened_at = now;
    s.device_key = public_key();
    sessions_[{view.address, provider}] = std::move(s);
    return Request{provider, UpdateRequest{view.address}};
  }

  std::optional<RequestRefusal> eligible(const ContractView& view, Tick now) const {
    if (ledger::public_key_of(view.owner) != vendor_pk_) return RequestRefusal::wrong_vendor;
    if (!view.state || !view.state->is_member(public_key())) return RequestRefusal::not_member;
    if (view.deploy_height <= installed_version_) return RequestRefusal::downgrade;
    if (signed_.contains(view.address)) return RequestRefusal::already_signed;
    if (now >= view.expiration) return RequestRefusal::expired;
    return std::nullopt;
  }

  std::optional<ChallengeResponse> on_challenge(NodeId from, const Challenge& ch) {
    auto* s = find(ch.contract, from);
    if (!s || s->state != SessionState::init) return std::nullopt;
    s->c = ch.c;
    s->state = SessionState::challenged;
    return ChallengeResponse{ch.contract, public_key(), key_.sign(ch.c.view()).to_vector()};
  }

  /// Verifies the vendor signature and the proof. Signs (U_id || s) at most
  /// once per contract.
  std::variant<PodSignature, AbortReason> on_offer(NodeId from, const Offer& offer, const ContractView& view,
                                                   const crypto::ProofBackend& backend) {
    auto* s = find(offer.contract, from);
    if (!s || s->state != SessionState::challenged) return AbortReason::unexpected_message;
    if (signed_.contains(offer.contract)) return fail(*s, AbortReason::already_signed);
    if (!crypto::verify_signature(vendor_pk_, offer.vendor_sig, vendor_message(view.u_id, offer.verifying_key))) {
      return fail(*s, AbortReason::bad_vendor_sig);
    }
    if (!backend.verify(offer.verifying_key, offer.ciphertext, offer.s, view.u_id, offer.proof)) {
      return fail(*s, AbortReason::bad_proof);
    }
    s->s = offer.s;
    s->ciphertext = offer.ciphertext;
    s->proof = offer.proof;
    s->state = SessionState::offer_sent;
    pending_[offer.contract] = PendingUpdate{offer.contract, from, offer.s, offer.ciphertext, view.u_id};
    signed_.insert(offer.contract);
    auto sig = key_.sign(contract::pod_message(view.u_id, offer.s)).to_vector();
    s->device_sig = sig;
    s->state = SessionState::signature_received;
    return PodSignature{offer.contract, std::move(sig)};
  }

  void abort_session(const Address& contract, NodeId provider, AbortReason why) {
    if (auto* s = find(contract, provider); s && s->state != SessionState::signature_received) fail(*s, why);
  }

  /// deviceCompleteUpdate.
  InstallResult on_key_revealed(const contract::KeyRevealed& ev, const ContractView& view) {
    if (ev.device != public_key()) return InstallResult::other_device;
    auto it = pending_.find(ev.contract);
    if (it == pending_.end()) return InstallResult::no_pending;
    const auto& p = it->second;
    if (crypto::hash(ev.r.view()) != p.s) return InstallResult::binding_mismatch;
    Bytes update = crypto::decrypt(p.ciphertext, crypto::SymKey::derive(ev.r));
    if (crypto::hash(update) != p.u_id) return InstallResult::hash_mismatch;
    if (view.deploy_height <= installed_version_) {
      pending_.erase(it);
      return InstallResult::downgrade;
    }
    installed_version_ = view.deploy_height;
    installed_update_ = std::move(update);
    installed_contract_ = ev.contract;
    installs_.push_back(ev.contract);
    pending_.erase(it);
    return InstallResult::installed;
  }

  const ExchangeSession* session(const Address& contract, NodeId provider) const {
    auto it = sessions_.find({contract, provider});
    return it == sessions_.end() ? nullptr : &it->second;
  }

  const PendingUpdate* pending(const Address& contract) const {
    auto it = pending_.find(contract);
    return it == pending_.end() ? nullptr : &it->second;
  }

  bool has_signed(const Address& contract) const { return signed_.contains(contract); }
  const std::vector<Address>& installs() const { return installs_; }
  const crypto::KeyPair& key() const { return key_; }

 private:
  ExchangeSession* find(const Address& contract, NodeId provider) {
    auto it = sessions_.find({contract, provider});
    return it == sessions_.end() ? nullptr : &it->second;
  }

  static AbortReason fail(ExchangeSession& s, AbortReason why) {
    s.state = SessionState::aborted;
    s.aborted = why;
    return why;
  }

  crypto::KeyPair key_;
  NodeId node_;
  PublicKey vendor_pk_;
  std::uint64_t installed_version_ = 0;
  std::optional<Bytes> installed_update_;
  std::optional<Address> installed_contract_;
  std::vector<Address> installs_;
  std::map<std::pair<Address, NodeId>, ExchangeSession> sessions_;
  std::map<Address, PendingUpdate> pending_;
  std::set<Address> signed_;
};

// ---------------------------------------------------------------------------
// Synchronous exchange

struct WireRecord {
  NodeId from;
  NodeId to;
  std::string type;
  Bytes payload;
};

struct ExchangeResult {
  std::optional<RedeemTuple> tuple;
  std::optional<AbortReason> aborted;
  std::string stage;  // message at which the exchange stopped
  std::vector<WireRecord> transcript;

  bool delivered() const { return tuple.has_value(); }
};

/// Runs the five-message exchange in one go, passing every message through
/// encode/decode. `intercept` sees each encoded message and may rewrite it;
/// returning false drops it (treated as peer disconnect).
inline ExchangeResult run_exchange(Distributor& d, Device& o, const ContractView& view,
                                   const crypto::ProofBackend& backend, Rng& rng, Tick now,
                                   const std::function<bool(WireRecord&)>& intercept = {}) {
  ExchangeResult out;
  auto wire = [&](NodeId from, NodeId to, const Message& m) -> std::optional<Message> {
    WireRecord rec{from, to, std::string(type_name(m)), encode(m)};
    if (intercept && !intercept(rec)) {
      out.transcript.push_back(std::move(rec));
      return std::nullopt;
    }
    auto decoded = decode(rec.payload);
    out.transcript.push_back(std::move(rec));
    return decoded;
  };
  auto stop = [&](std::string stage, AbortReason why) {
    out.stage = std::move(stage);
    out.aborted = why;
    d.abort(o.node(), view.address, why);
    return out;
  };

  std::array<NodeId, 1> providers{d.node()};
  auto req = o.request_update(view, providers, 0, now);
  if (!std::holds_alternative<Device::Request>(req)) return stop("update-request", AbortReason::unexpected_message);
  auto m1 = wire(o.node(), d.node(), std::get<Device::Request>(req).message);
  if (!m1 || !std::holds_alternative<UpdateRequest>(*m1)) return stop("update-request", AbortReason::peer_disconnect);

  auto ch = d.on_request(o.node(), std::get<UpdateRequest>(*m1), rng, now);
  if (!ch) return stop("challenge", AbortReason::unexpected_message);
  auto m2 = wire(d.node(), o.node(), *ch);
  if (!m2 || !std::holds_alternative<Challenge>(*m2)) return stop("challenge", AbortReason::peer_disconnect);

  auto resp = o.on_challenge(d.node(), std::get<Challenge>(*m2));
  if (!resp) return stop("challenge-response", AbortReason::unexpected_message);
  auto m3 = wire(o.node(), d.node(), *resp);
  if (!m3 || !std::holds_alternative<ChallengeResponse>(*m3)) {
    return stop("challenge-response", AbortReason::peer_disconnect);
  }

  auto offer = d.on_response(o.node(), std::get<ChallengeResponse>(*m3), view, rng);
  if (auto* why = std::get_if<AbortReason>(&offer)) return stop("challenge-response", *why);
  auto m4 = wire(d.node(), o.node(), std::get<Offer>(offer));
  if (!m4 || !std::holds_alternative<Offer>(*m4)) {
    o.abort_session(view.address, d.node(), AbortReason::peer_disconnect);
    return stop("offer", AbortReason::peer_disconnect);
  }

  auto pod = o.on_offer(d.node(), std::get<Offer>(*m4), view, backend);
  if (auto* why = std::get_if<AbortReason>(&pod)) return stop("offer", *why);
  auto m5 = wire(o.node(), d.node(), std::get<PodSignature>(pod));
  if (!m5 || !std::holds_alternative<PodSignature>(*m5)) return stop("pod-signature", AbortReason::peer_disconnect);

  auto tuple = d.on_pod_signature(o.node(), std::get<PodSignature>(*m5), view);
  if (auto* why = std::get_if<AbortReason>(&tuple)) return stop("pod-signature", *why);
  out.stage = "pod-signature";
  out.tuple = std::get<RedeemTuple>(tuple);
  return out;
}

}  // namespace podnet::protocol
