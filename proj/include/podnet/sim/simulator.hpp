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

// Discrete-event simulator. One logical clock in ticks; every action is an
// event ordered by (tick, insertion sequence). Nodes are the protocol state
// machines; the simulator owns the channels, the ledger, the DSN and all
// adversaries, and records what devices accepted and installed.

#include <cstring>
#include <functional>
#include <queue>
#include <unordered_map>

#include "podnet/protocol.hpp"
#include "podnet/sim/checks.hpp"
#include "podnet/sim/scenario.hpp"

namespace podnet::sim {

using dsn::NodeId;

struct TranscriptEntry {
  Tick tick = 0;
  std::uint32_t from = 0;
  std::uint32_t to = 0;
  std::string type;
  Digest payload_hash;
  std::uint64_t size = 0;
  std::string fate;  // delivered | dropped | tampered

  Bytes canonical() const {
    return std::move(TupleWriter().u64(tick).u64(from).u64(to).field(type).field(payload_hash).u64(size).field(fate))
        .finish();
  }

  nlohmann::json to_json() const {
    return {{"tick", tick}, {"from", from}, {"to", to}, {"type", type},
            {"hash", payload_hash.hex()}, {"size", size}, {"fate", fate}};
  }
};

struct AdversaryStats {
  std::uint64_t front_run_attempts = 0;
  std::uint64_t front_run_successes = 0;
  std::uint64_t double_claim_attempts = 0;
  std::uint64_t forged_signature_claims = 0;
  std::uint64_t forged_vendor_acceptances = 0;
  std::uint64_t late_claims = 0;
  std::uint64_t downgrade_attempts = 0;
  std::uint64_t downgrade_refusals = 0;
  std::uint64_t dropped_messages = 0;
  std::uint64_t dropped_transactions = 0;
  std::uint64_t tampered_messages = 0;
  std::uint64_t tampered_transactions = 0;
  std::uint64_t tampered_dsn_transfers = 0;
  std::uint64_t impersonator_offers = 0;
  std::uint64_t impersonator_registrations = 0;
  std::uint64_t bogus_adverts = 0;
  std::uint64_t self_dealt_payments = 0;

  nlohmann::json to_json() const {
    return {{"front_run_attempts", front_run_attempts},
            {"front_run_successes", front_run_successes},
            {"double_claim_attempts", double_claim_attempts},
            {"forged_signature_claims", forged_signature_claims},
            {"forged_vendor_acceptances", forged_vendor_acceptances},
            {"late_claims", late_claims},
            {"downgrade_attempts", downgrade_attempts},
            {"downgrade_refusals", downgrade_refusals},
            {"dropped_messages", dropped_messages},
            {"dropped_transactions", dropped_transactions},
            {"tampered_messages", tampered_messages},
            {"tampered_transactions", tampered_transactions},
            {"tampered_dsn_transfers", tampered_dsn_transfers},
            {"impersonator_offers", impersonator_offers},
            {"impersonator_registrations", impersonator_registrations},
            {"bogus_adverts", bogus_adverts},
            {"self_dealt_payments", self_dealt_payments}};
  }
};

struct RunResult {
  Scenario scenario;
  nlohmann::json metrics;
  nlohmann::json audit;
  nlohmann::json log;
  InvariantReport invariants;
  AdversaryStats adversary;
  std::uint64_t secrecy_violations = 0;
  std::uint64_t supply_violations = 0;  // per-seal global conservation
  Digest transcript_digest;
  Digest ledger_digest;
  std::uint64_t devices_total = 0;
  std::uint64_t devices_covered = 0;
  std::uint64_t payments = 0;
  Tick final_tick = 0;

  bool ok() const { return invariants.ok() && secrecy_violations == 0 && supply_violations == 0; }
};

/// Secrets are matched by an 8-byte prefix, then confirmed in full.
class SecretScanner {
 public:
  void add(ByteView secret) {
    if (secret.size() < 8) throw std::invalid_argument("secret too short");
    secrets_[prefix(secret.data())].emplace_back(secret.begin(), secret.end());
    ++count_;
  }

  std::uint64_t scan(ByteView data) const {
    std::uint64_t hits = 0;
    if (secrets_.empty() || data.size() < 8) return 0;
    for (std::size_t i = 0; i + 8 <= data.size(); ++i) {
      auto it = secrets_.find(prefix(data.data() + i));
      if (it == secrets_.end()) continue;
      for (const auto& s : it->second) {
        if (i + s.size() <= data.size() && std::equal(s.begin(), s.end(), data.begin() + i)) ++hits;
      }
    }
    return hits;
  }

  std::uint64_t size() const { return count_; }

 private:
  static std::uint64_t prefix(const std::uint8_t* p) {
    std::uint64_t v;
    std::memcpy(&v, p, 8);
    return v;
  }

  std::unordered_map<std::uint64_t, std::vector<Bytes>> secrets_;
  std::uint64_t count_ = 0;
};

class Simulation {
 public:
  explicit Simulation(Scenario sc)
      : sc_(std::move(sc)),
        rng_(crypto::derive_seed(sc_.seed, "sim")),
        adv_rng_(crypto::derive_seed(sc_.seed, "adversary")),
        link_rng_(crypto::derive_seed(sc_.seed, "link")),
        backend_(crypto::derive_seed(sc_.seed, "proof")),
        net_(sc_.link, crypto::derive_seed(sc_.seed, "dsn")) {
    sc_.validate();
    drop_p_ = sc_.probability(AdversaryKind::message_drop);
    tamper_p_ = sc_.probability(AdversaryKind::byte_tamper);
    build();
  }

  RunResult run() {
    for (std::uint32_t k = 0; k < sc_.releases_per_vendor; ++k) {
      for (std::size_t v = 0; v < vendors_.size(); ++v) {
        at(1 + k * sc_.release_spacing, [this, v] { vendor_release(v); });
      }
    }
    if (!impersonators_.empty()) at(2, [this] { impersonators_deploy(); });
    const Tick limit = sc_.effective_max_ticks();
    while (!queue_.empty() && queue_.top().tick <= limit) {
      auto ev = queue_.top();
      queue_.pop();
      now_ = ev.tick;
      ev.fn();
    }
    return finish();
  }

  const ledger::Ledger& ledger() const { return ledger_; }

 private:
  // ------------------------------------------------------------------ setup

  enum class Role { vendor, distributor, device, impersonator };

  enum class Behavior { honest, double_claimer, late_claimer, downgrade_pusher, self_dealer };

  struct Event {
    Tick tick;
    std::uint64_t seq;
    std::function<void()> fn;

    bool operator>(const Event& o) const { return std::tie(tick, seq) > std::tie(o.tick, o.seq); }
  };

  struct VendorNode {
    std::unique_ptr<protocol::Vendor> vendor;
    std::vector<std::size_t> devices;
    std::vector<protocol::Release> releases;
  };

  struct DistNode {
    std::unique_ptr<protocol::Distributor> d;
    Behavior behavior = Behavior::honest;
    std::size_t device = 0;  // self-dealer only
    std::set<Address> acquiring;
    bool attack_toggle = false;
  };

  struct DeviceContract {
    std::size_t attempts = 0;
    std::size_t offset = 0;
    std::uint64_t generation = 0;
    bool done = false;
  };

  struct DeviceNode {
    std::unique_ptr<protocol::Device> d;
    std::uint32_t vendor = 0;
    bool compromised = false;
    std::map<Address, DeviceContract> contracts;
  };

  struct Impersonator {
    crypto::KeyPair key;
    NodeId node;
    std::unique_ptr<ledger::Wallet> wallet;
    std::map<Digest, crypto::SetupResult> setups;  // per statement it pretends to serve
    std::map<std::pair<NodeId, Address>, crypto::Nonce16> challenges;
  };

  struct Eavesdropper {
    std::unique_ptr<ledger::Wallet> wallet;
    std::map<std::pair<Address, NodeId>, Digest> offered_s;
    std::map<std::pair<Address, NodeId>, PublicKey> device_keys;
  };

  struct ClaimTrack {
    ledger::Transaction tx;
    Address contract;
    int sends = 0;
  };

  struct NodeRef {
    Role role;
    std::size_t index;
  };

  crypto::KeyPair next_key(std::string_view role, std::size_t i) {
    auto seed = crypto::hash_parts(u64_bytes(sc_.seed), as_bytes("podnet/sim-key/"), as_bytes(role), u64_bytes(i));
    return crypto::KeyPair::from_seed(crypto::SecretSeed::from(seed.view()).value());
  }

  NodeId add_node(Role role, std::size_t index) {
    NodeId id{static_cast<std::uint32_t>(nodes_.size())};
    nodes_.push_back({role, index});
    return id;
  }

  void build() {
    std::vector<std::pair<Address, Coins>> genesis;
    std::set<PublicKey> trusted;
    const Coins vendor_funds = sc_.deposit * sc_.releases_per_vendor;

    // Devices first so vendors know their keys.
    std::vector<std::vector<PublicKey>> device_pks(sc_.vendors);
    for (std::uint32_t v = 0; v < sc_.vendors; ++v) {
      auto vk = next_key("vendor", v);
      trusted.insert(vk.public_key());
      for (std::uint32_t i = 0; i < sc_.devices_per_vendor; ++i) {
        std::size_t idx = devices_.size();
        auto key = next_key("device", idx);
        device_pks[v].push_back(key.public_key());
        DeviceNode node;
        node.vendor = v;
        node.d = std::make_unique<protocol::Device>(std::move(key), add_node(Role::device, idx), vk.public_key());
        device_by_pk_[node.d->public_key()] = idx;
        devices_.push_back(std::move(node));
      }
    }
    for (std::uint32_t v = 0; v < sc_.vendors; ++v) {
      auto vk = next_key("vendor", v);
      genesis.emplace_back(ledger::address_of(vk.public_key()), vendor_funds);
      VendorNode node;
      node.vendor = std::make_unique<protocol::Vendor>(std::move(vk), add_node(Role::vendor, v), device_pks[v]);
      for (std::uint32_t i = 0; i < sc_.devices_per_vendor; ++i) node.devices.push_back(v * sc_.devices_per_vendor + i);
      vendors_.push_back(std::move(node));
    }

    auto add_dist = [&](crypto::KeyPair key, Behavior b) {
      std::size_t idx = dists_.size();
      DistNode node;
      node.behavior = b;
      node.d = std::make_unique<protocol::Distributor>(std::move(key), add_node(Role::distributor, idx), trusted,
                                                       backend_, protocol::DistributorConfig{sc_.redeem_by_index});
      node.d->witness_observer = [this](const protocol::WitnessRecord& w) {
        scanner_.add(w.r.view());
        scanner_.add(w.t.view());
      };
      address_of_node_[node.d->node()] = node.d->address();
      dists_.push_back(std::move(node));
      return idx;
    };
    for (std::uint32_t i = 0; i < sc_.distributors; ++i) add_dist(next_key("distributor", i), Behavior::honest);
    for (std::uint32_t i = 0; i < sc_.count(AdversaryKind::double_claimer); ++i) {
      add_dist(next_key("double-claimer", i), Behavior::double_claimer);
    }
    for (std::uint32_t i = 0; i < sc_.count(AdversaryKind::late_claimer); ++i) {
      add_dist(next_key("late-claimer", i), Behavior::late_claimer);
    }
    for (std::uint32_t i = 0; i < sc_.count(AdversaryKind::downgrade_pusher); ++i) {
      add_dist(next_key("downgrade-pusher", i), Behavior::downgrade_pusher);
    }
    // A compromised device runs a distributor under its own device key.
    for (std::uint32_t i = 0; i < sc_.count(AdversaryKind::device_self_dealer); ++i) {
      auto& dev = devices_[i];
      dev.compromised = true;
      auto idx = add_dist(dev.d->key(), Behavior::self_dealer);
      dists_[idx].device = i;
    }
    for (std::uint32_t i = 0; i < sc_.count(AdversaryKind::vendor_impersonator); ++i) {
      Impersonator imp{next_key("impersonator", i), add_node(Role::impersonator, i), nullptr, {}, {}};
      imp.wallet = std::make_unique<ledger::Wallet>(imp.key);
      genesis.emplace_back(imp.wallet->address(), sc_.deposit);
      address_of_node_[imp.node] = imp.wallet->address();
      impersonators_.push_back(std::move(imp));
    }
    for (std::uint32_t i = 0; i < sc_.count(AdversaryKind::eavesdrop_and_front_run); ++i) {
      Eavesdropper e;
      e.wallet = std::make_unique<ledger::Wallet>(next_key("eavesdropper", i));
      eavesdropper_addrs_.insert(e.wallet->address());
      eavesdroppers_.push_back(std::move(e));
    }

    ledger_ = ledger::Ledger(std::move(genesis));
    contract::BidContract::register_with(ledger_);

    net_.set_transit_hook([this](NodeId, NodeId, const dsn::ContentId&, Bytes& bytes) {
      secrecy_hits_ += scanner_.scan(bytes);
      if (tamper_p_ > 0 && !bytes.empty() && std::bernoulli_distribution(tamper_p_)(adv_rng_)) {
        bytes[adv_rng_() % bytes.size()] ^= static_cast<std::uint8_t>(1 + adv_rng_() % 255);
        ++stats_.tampered_dsn_transfers;
      }
    });
  }

  // ------------------------------------------------------------- scheduling

  void at(Tick tick, std::function<void()> fn) {
    if (tick < now_) throw std::logic_error("event scheduled in the past");
    queue_.push(Event{tick, seq_++, std::move(fn)});
  }

  void after(Tick delay, std::function<void()> fn) { at(now_ + delay, std::move(fn)); }

  void request_seal() {
    if (seal_pending_) return;
    seal_pending_ = true;
    Tick t = std::max(now_, last_seal_ + 1);
    t = (t + sc_.block_interval - 1) / sc_.block_interval * sc_.block_interval;
    at(t, [this] { seal(); });
  }

  void seal() {
    seal_pending_ = false;
    ledger_.seal(now_);
    last_seal_ = now_;
    if (ledger_.total_supply() != ledger_.genesis_supply()) ++supply_violations_;
    const auto& events = ledger_.events();
    for (; events_seen_ < events.size(); ++events_seen_) {
      const auto e = events[events_seen_];
      if (e.contract == ledger::factory_address() && e.name == ledger::kContractCreated && e.args.size() == 3) {
        on_contract_created(Address::from(e.args[1]).value());
      } else if (auto k = contract::KeyRevealed::from(e)) {
        on_key_revealed(*k);
      }
    }
    if (!ledger_.pending().empty()) request_seal();
  }

  // --------------------------------------------------------------- channels

  void send(NodeId from, NodeId to, const protocol::Message& m) {
    Bytes payload = protocol::encode(m);
    secrecy_hits_ += scanner_.scan(payload);
    for (auto& e : eavesdroppers_) observe(e, from, to, m);
    TranscriptEntry entry{now_, from.value, to.value, std::string(protocol::type_name(m)), crypto::hash(payload),
                          payload.size(), "delivered"};
    transcript_bytes_ += payload.size();
    bool dropped = (drop_p_ > 0 && std::bernoulli_distribution(drop_p_)(adv_rng_)) ||
                   (sc_.link.drop_probability > 0 && std::bernoulli_distribution(sc_.link.drop_probability)(link_rng_));
    if (dropped) {
      entry.fate = "dropped";
      ++stats_.dropped_messages;
    } else if (tamper_p_ > 0 && std::bernoulli_distribution(tamper_p_)(adv_rng_)) {
      payload[adv_rng_() % payload.size()] ^= static_cast<std::uint8_t>(1 + adv_rng_() % 255);
      entry.fate = "tampered";
      ++stats_.tampered_messages;
    }
    record(std::move(entry));
    if (dropped) return;
    after(sc_.link.transfer_time(payload.size()),
          [this, from, to, payload = std::move(payload)] { deliver(from, to, payload); });
  }

  void record(TranscriptEntry e) {
    transcript_digest_ = crypto::hash_parts(transcript_digest_.view(), e.canonical());
    transcript_.push_back(std::move(e));
  }

  void deliver(NodeId from, NodeId to, const Bytes& payload) {
    auto m = protocol::decode(payload);
    if (!m) return;  // garbled in transit
    const auto& ref = nodes_.at(to.value);
    switch (ref.role) {
      case Role::distributor: return dist_receive(ref.index, from, *m);
      case Role::device: return device_receive(ref.index, from, *m);
      case Role::impersonator: return impersonator_receive(ref.index, from, *m);
      case Role::vendor: return;
    }
  }

  /// Transactions from distributors cross the same lossy network.
  void send_tx(ledger::Transaction tx, bool lossy) {
    if (lossy && drop_p_ > 0 && std::bernoulli_distribution(drop_p_)(adv_rng_)) {
      ++stats_.dropped_transactions;
      return;
    }
    if (lossy && tamper_p_ > 0 && std::bernoulli_distribution(tamper_p_)(adv_rng_)) {
      ++stats_.tampered_transactions;
      Bytes raw = tx.encode();
      raw[adv_rng_() % raw.size()] ^= static_cast<std::uint8_t>(1 + adv_rng_() % 255);
      auto decoded = ledger::Transaction::decode(raw);
      if (!decoded) return;
      tx = std::move(*decoded);
    }
    after(sc_.link.latency, [this, tx = std::move(tx)] { submit(tx, ledger::Ledger::Placement::back); });
  }

  void submit(const ledger::Transaction& tx, ledger::Ledger::Placement placement) {
    auto res = ledger_.submit(tx, placement);
    if (!res.accepted()) return;
    accepted_txs_.insert(res.id);
    request_seal();
    if (eavesdropper_addrs_.contains(tx.sender)) return;
    if (const auto* call = std::get_if<ledger::Call>(&tx.payload)) {
      if (auto tuple = contract::decode_publish_proof(call->data)) {
        for (auto& e : eavesdroppers_) front_run(e, call->contract, *tuple);
      }
    }
  }

  // ---------------------------------------------------------------- vendors

  void vendor_release(std::size_t v) {
    auto& node = vendors_[v];
    std::vector<PublicKey> keys;
    for (auto i : node.devices) keys.push_back(devices_[i].d->public_key());
    Bytes update = random_bytes(rng_, sc_.update_size);
    protocol::Release rel;
    try {
      rel = node.vendor->release_update({update, keys, sc_.deposit, sc_.refund_window}, ledger_, net_, backend_, rng_,
                                        now_);
    } catch (const protocol::ReleaseError&) {
      return;
    }
    request_seal();
    ContractRecord rec;
    rec.address = rel.contract;
    rec.vendor = static_cast<std::uint32_t>(v);
    rec.update = std::move(update);
    rec.u_id = rel.package.u_id;
    rec.deposit = sc_.deposit;
    rec.expiration = rel.expiration;
    rec.devices = keys;
    contracts_[rel.contract] = std::move(rec);
    node.releases.push_back(rel);
    after(sc_.seeding_window, [this, v, i = node.releases.size() - 1] {
      vendors_[v].vendor->stop_seeding(net_, vendors_[v].releases[i]);
    });
    at(std::max(rel.expiration, now_ + 1), [this, v, addr = rel.contract] {
      vendors_[v].vendor->withdraw(ledger_, addr);
      request_seal();
    });
  }

  void on_contract_created(const Address& addr) {
    auto view = protocol::ContractView::read(ledger_, addr);
    if (!view) return;
    if (auto it = contracts_.find(addr); it != contracts_.end()) it->second.deploy_height = view->deploy_height;
    for (std::size_t i = 0; i < dists_.size(); ++i) {
      auto& dn = dists_[i];
      if (!dn.d->trusts(view->owner)) continue;
      if (dn.behavior == Behavior::self_dealer && !view->state->is_member(devices_[dn.device].d->public_key())) {
        continue;
      }
      dn.acquiring.insert(addr);
      acquire(i, addr);
    }
    for (std::size_t i = 0; i < devices_.size(); ++i) {
      auto& dev = devices_[i];
      if (dev.compromised) continue;
      if (auto refusal = dev.d->eligible(*view, now_)) {
        if (*refusal == protocol::RequestRefusal::downgrade) ++stats_.downgrade_refusals;
        continue;
      }
      auto& dc = dev.contracts[addr];
      dc.offset = rng_();
      at(now_ + 1 + rng_() % sc_.device_poll_max, [this, i, addr] { device_poll(i, addr); });
    }
    const auto& owner_pk = ledger::public_key_of(view->owner);
    bool honest = std::any_of(vendors_.begin(), vendors_.end(),
                              [&](const auto& v) { return v.vendor->public_key() == owner_pk; });
    if (honest) {
      for (auto& imp : impersonators_) impersonator_advertise(imp, *view);
    }
  }

  // ----------------------------------------------------------- distributors

  void acquire(std::size_t di, const Address& addr) {
    auto view = protocol::ContractView::read(ledger_, addr);
    auto& dn = dists_[di];
    if (!view || now_ >= view->expiration || dn.d->serving(addr)) return;
    std::vector<NodeId> providers;
    for (auto p : net_.lookup(view->p_id)) {
      if (p != dn.d->node()) providers.push_back(p);
    }
    if (providers.empty()) {
      after(sc_.retry_backoff, [this, di, addr] { acquire(di, addr); });
      return;
    }
    auto res = dsn::fetch_any(net_, dn.d->node(), view->p_id, now_, providers);
    at(std::max(res.ready_at, now_ + 1), [this, di, addr, res] {
      auto view = protocol::ContractView::read(ledger_, addr);
      auto& dn = dists_[di];
      if (res.status != dsn::FetchStatus::delivered) {
        after(sc_.retry_backoff, [this, di, addr] { acquire(di, addr); });
        return;
      }
      auto status = dn.d->accept_package(*view, *res.bytes, net_, now_);
      if (status == protocol::AcquireStatus::stored && dn.behavior == Behavior::self_dealer) self_deal(di, addr);
    });
  }

  void dist_receive(std::size_t di, NodeId from, const protocol::Message& m) {
    auto& dn = dists_[di];
    const auto& addr = protocol::contract_of(m);
    auto view = protocol::ContractView::read(ledger_, addr);
    if (!view) return;
    if (const auto* req = std::get_if<protocol::UpdateRequest>(&m)) {
      if (auto ch = dn.d->on_request(from, *req, rng_, now_)) send(dn.d->node(), from, *ch);
    } else if (const auto* resp = std::get_if<protocol::ChallengeResponse>(&m)) {
      auto step = dn.d->on_response(from, *resp, *view, rng_);
      if (auto* offer = std::get_if<protocol::Offer>(&step)) {
        if (dn.behavior == Behavior::downgrade_pusher) {
          if (auto older = downgrade_offer(dn, *view)) {
            ++stats_.downgrade_attempts;
            return send(dn.d->node(), from, *older);
          }
        }
        send(dn.d->node(), from, *offer);
      }
    } else if (const auto* pod = std::get_if<protocol::PodSignature>(&m)) {
      auto step = dn.d->on_pod_signature(from, *pod, *view);
      if (auto* tuple = std::get_if<contract::RedeemTuple>(&step)) on_tuple(di, *view, *tuple);
    }
  }

  void on_tuple(std::size_t di, const protocol::ContractView& view, const contract::RedeemTuple& tuple) {
    auto& dn = dists_[di];
    switch (dn.behavior) {
      case Behavior::late_claimer:
        ++stats_.late_claims;
        at(std::max(view.expiration, now_), [this, di, addr = view.address, tuple] { claim(di, addr, tuple, false); });
        return;
      case Behavior::double_claimer: {
        claim(di, view.address, tuple, true);
        ++stats_.double_claim_attempts;
        claim(di, view.address, tuple, false);
        // A second device's claim with a signature the distributor made itself.
        const auto& members = view.state->devices();
        contract::RedeemTuple forged;
        forged.device = members[rng_() % members.size()];
        forged.t = crypto::Nonce32::random(rng_);
        forged.distributor = dn.d->address();
        forged.r = contract::bind_witness(forged.distributor, forged.t);
        forged.s = crypto::hash(forged.r.view());
        forged.device_sig = next_key("forger", di).sign(contract::pod_message(view.u_id, forged.s)).to_vector();
        ++stats_.forged_signature_claims;
        claim(di, view.address, forged, false);
        return;
      }
      default:
        claim(di, view.address, tuple, true);
    }
  }

  void claim(std::size_t di, const Address& addr, const contract::RedeemTuple& tuple, bool retry) {
    auto tx = dists_[di].d->claim_transaction(addr, tuple);
    if (!retry) return send_tx(std::move(tx), true);
    claims_.push_back({std::move(tx), addr, 0});
    send_claim(claims_.size() - 1);
  }

  void send_claim(std::size_t ci) {
    auto& c = claims_[ci];
    ++c.sends;
    send_tx(c.tx, true);
    after(sc_.claim_timeout, [this, ci] {
      auto& c = claims_[ci];
      auto id = c.tx.id();
      const auto& rec = contracts_.at(c.contract);
      if (accepted_txs_.contains(id) || c.sends >= 4 || now_ >= rec.expiration) return;
      send_claim(ci);
    });
  }

  void self_deal(std::size_t di, const Address& addr) {
    auto& dn = dists_[di];
    auto& dev = devices_[dn.device];
    auto view = protocol::ContractView::read(ledger_, addr);
    if (dev.d->eligible(*view, now_)) return;
    auto res = protocol::run_exchange(*dn.d, *dev.d, *view, backend_, rng_, now_);
    if (!res.tuple) return;
    offers_.push_back({addr, dev.d->public_key(), dn.d->address(), res.tuple->s,
                       crypto::hash(dev.d->pending(addr)->ciphertext), now_});
    claim(di, addr, *res.tuple, true);
  }

  /// Offer for the newer contract carrying an older release of the same
  /// vendor, honestly proven for the older statement.
  std::optional<protocol::Offer> downgrade_offer(DistNode& dn, const protocol::ContractView& view) {
    dn.attack_toggle = !dn.attack_toggle;
    if (!dn.attack_toggle) return std::nullopt;
    for (const auto& [addr, rec] : contracts_) {
      if (!rec.honest || rec.vendor != contracts_.at(view.address).vendor) continue;
      if (rec.deploy_height == 0 || rec.deploy_height >= view.deploy_height) continue;
      const auto* pkg = dn.d->package_for(addr);
      if (!pkg) continue;
      auto t = crypto::Nonce32::random(rng_);
      auto r = contract::bind_witness(dn.d->address(), t);
      auto s = crypto::hash(r.view());
      auto ct = crypto::encrypt(pkg->update, crypto::SymKey::derive(r));
      scanner_.add(r.view());
      scanner_.add(t.view());
      auto proof = backend_.prove(pkg->proof_keys(), ct, s, pkg->u_id, r);
      return protocol::Offer{view.address, ct, s, proof, pkg->verifying_key, pkg->vendor_sig};
    }
    return std::nullopt;
  }

  // ---------------------------------------------------------------- devices

  void device_poll(std::size_t oi, const Address& addr) {
    auto& dev = devices_[oi];
    auto& dc = dev.contracts[addr];
    if (dc.done) return;
    auto view = protocol::ContractView::read(ledger_, addr);
    std::vector<NodeId> providers;
    for (auto p : net_.lookup(view->u_id)) {
      if (p != dev.d->node()) providers.push_back(p);
    }
    auto step = dev.d->request_update(*view, providers, dc.offset + dc.attempts, now_);
    if (auto* refusal = std::get_if<protocol::RequestRefusal>(&step)) {
      if (*refusal == protocol::RequestRefusal::no_providers) return retry_poll(oi, addr, view->expiration);
      if (*refusal == protocol::RequestRefusal::downgrade) ++stats_.downgrade_refusals;
      dc.done = *refusal != protocol::RequestRefusal::already_signed;
      return;
    }
    const auto& req = std::get<protocol::Device::Request>(step);
    ++dc.attempts;
    auto gen = ++dc.generation;
    send(dev.d->node(), req.provider, req.message);
    after(sc_.session_timeout, [this, oi, addr, provider = req.provider, gen] { device_timeout(oi, addr, provider, gen); });
  }

  void retry_poll(std::size_t oi, const Address& addr, Tick expiration) {
    if (now_ + sc_.retry_backoff >= expiration) return;
    after(sc_.retry_backoff, [this, oi, addr] { device_poll(oi, addr); });
  }

  void device_timeout(std::size_t oi, const Address& addr, NodeId provider, std::uint64_t gen) {
    auto& dev = devices_[oi];
    auto& dc = dev.contracts[addr];
    if (dc.done || dc.generation != gen) return;
    const auto* s = dev.d->session(addr, provider);
    if (s && s->state == protocol::SessionState::signature_received) return;
    dev.d->abort_session(addr, provider, protocol::AbortReason::peer_disconnect);
    ++dc.generation;
    retry_poll(oi, addr, contracts_expiration(addr));
  }

  Tick contracts_expiration(const Address& addr) const {
    auto view = protocol::ContractView::read(ledger_, addr);
    return view ? view->expiration : 0;
  }

  void device_receive(std::size_t oi, NodeId from, const protocol::Message& m) {
    auto& dev = devices_[oi];
    const auto& addr = protocol::contract_of(m);
    auto view = protocol::ContractView::read(ledger_, addr);
    if (!view) return;
    if (const auto* ch = std::get_if<protocol::Challenge>(&m)) {
      if (auto resp = dev.d->on_challenge(from, *ch)) send(dev.d->node(), from, *resp);
    } else if (const auto* offer = std::get_if<protocol::Offer>(&m)) {
      auto step = dev.d->on_offer(from, *offer, *view, backend_);
      if (auto* pod = std::get_if<protocol::PodSignature>(&step)) {
        if (!crypto::verify_signature(dev.d->vendor_key(), offer->vendor_sig,
                                      protocol::vendor_message(view->u_id, offer->verifying_key))) {
          ++stats_.forged_vendor_acceptances;
        }
        auto payee = address_of_node_.count(from) ? address_of_node_.at(from) : Address{};
        offers_.push_back({addr, dev.d->public_key(), payee, offer->s, crypto::hash(offer->ciphertext), now_});
        send(dev.d->node(), from, *pod);
      } else if (std::get<protocol::AbortReason>(step) != protocol::AbortReason::unexpected_message) {
        auto& dc = dev.contracts[addr];
        ++dc.generation;
        retry_poll(oi, addr, view->expiration);
      }
    }
  }

  void on_key_revealed(const contract::KeyRevealed& ev) {
    auto it = device_by_pk_.find(ev.device);
    if (it == device_by_pk_.end()) return;
    auto& dev = devices_[it->second];
    auto view = protocol::ContractView::read(ledger_, ev.contract);
    auto result = dev.d->on_key_revealed(ev, *view);
    if (result == protocol::InstallResult::downgrade) ++stats_.downgrade_refusals;
    if (result != protocol::InstallResult::installed) return;
    dev.contracts[ev.contract].done = true;
    installs_.push_back({ev.device, ev.contract, crypto::hash(*dev.d->installed_update()), view->deploy_height, now_});
    // Downgrade pushers nudge freshly updated devices toward older releases.
    if (std::none_of(dists_.begin(), dists_.end(), [](const auto& d) { return d.behavior == Behavior::downgrade_pusher; })) {
      return;
    }
    for (const auto& [addr, rec] : contracts_) {
      if (!rec.honest || rec.deploy_height == 0 || rec.deploy_height >= view->deploy_height) continue;
      auto older = protocol::ContractView::read(ledger_, addr);
      if (!older || !older->state->is_member(ev.device)) continue;
      ++stats_.downgrade_attempts;
      if (dev.d->eligible(*older, now_) == protocol::RequestRefusal::downgrade) ++stats_.downgrade_refusals;
    }
  }

  // ------------------------------------------------------------ adversaries

  void observe(Eavesdropper& e, NodeId from, NodeId to, const protocol::Message& m) {
    if (const auto* resp = std::get_if<protocol::ChallengeResponse>(&m)) {
      e.device_keys[{resp->contract, from}] = resp->device;
    } else if (const auto* offer = std::get_if<protocol::Offer>(&m)) {
      e.offered_s[{offer->contract, to}] = offer->s;
    } else if (const auto* pod = std::get_if<protocol::PodSignature>(&m)) {
      auto s = e.offered_s.find({pod->contract, from});
      auto pk = e.device_keys.find({pod->contract, from});
      if (s == e.offered_s.end() || pk == e.device_keys.end()) return;
      // Knows s and the signature but not r: any r it can bind fails H(r) = s.
      contract::RedeemTuple t;
      t.device = pk->second;
      t.t = crypto::Nonce32::random(adv_rng_);
      t.distributor = e.wallet->address();
      t.r = contract::bind_witness(t.distributor, t.t);
      t.s = s->second;
      t.device_sig = pod->signature;
      front_submit(e, pod->contract, t);
    }
  }

  void front_run(Eavesdropper& e, const Address& addr, const contract::RedeemTuple& seen) {
    auto own = e.wallet->address();
    auto swap = seen;
    swap.distributor = own;
    front_submit(e, addr, swap);
    auto rebind = swap;
    rebind.r = contract::bind_witness(own, rebind.t);
    rebind.s = crypto::hash(rebind.r.view());
    front_submit(e, addr, rebind);
    auto fresh = swap;
    fresh.t = crypto::Nonce32::random(adv_rng_);
    fresh.r = contract::bind_witness(own, fresh.t);
    front_submit(e, addr, fresh);
  }

  void front_submit(Eavesdropper& e, const Address& addr, const contract::RedeemTuple& t) {
    ++stats_.front_run_attempts;
    auto tx = e.wallet->make(ledger::Call{addr, contract::encode_publish_proof(t)});
    submit(tx, ledger::Ledger::Placement::front);
  }

  void impersonators_deploy() {
    for (auto& imp : impersonators_) {
      if (vendors_.empty()) continue;
      Bytes bogus = random_bytes(rng_, sc_.update_size);
      auto u_id = crypto::hash(bogus);
      auto setup = backend_.setup(u_id, rng_);
      auto pkg = protocol::UpdatePackage::build(imp.key, bogus, setup.keys);
      std::vector<PublicKey> targets;
      for (auto i : vendors_[0].devices) targets.push_back(devices_[i].d->public_key());
      contract::BidTerms terms{now_ + sc_.refund_window, pkg.u_id, pkg.p_id, targets};
      auto addr = ledger::contract_address(imp.wallet->address(), imp.wallet->next_nonce());
      if (!ledger_.submit(imp.wallet->make(contract::make_deploy(terms, sc_.deposit))).accepted()) continue;
      request_seal();
      net_.provide(imp.node, pkg.serialize(), now_);
      ContractRecord rec;
      rec.address = addr;
      rec.honest = false;
      rec.update = bogus;
      rec.u_id = pkg.u_id;
      rec.deposit = sc_.deposit;
      rec.expiration = terms.expiration;
      rec.devices = targets;
      contracts_[addr] = std::move(rec);
      at(std::max(terms.expiration, now_ + 1), [this, &imp, addr] {
        ledger_.submit(imp.wallet->make(ledger::Call{addr, contract::encode_withdraw()}));
        request_seal();
      });
    }
  }

  void impersonator_advertise(Impersonator& imp, const protocol::ContractView& view) {
    auto junk = std::make_shared<const Bytes>(random_bytes(rng_, sc_.update_size));
    net_.advertise(imp.node, view.u_id, junk, now_);
    net_.advertise(imp.node, view.p_id, junk, now_);
    stats_.bogus_adverts += 2;
  }

  void impersonator_receive(std::size_t ii, NodeId from, const protocol::Message& m) {
    auto& imp = impersonators_[ii];
    auto view = protocol::ContractView::read(ledger_, protocol::contract_of(m));
    if (!view) return;
    if (const auto* req = std::get_if<protocol::UpdateRequest>(&m)) {
      auto c = crypto::Nonce16::random(rng_);
      imp.challenges[{from, req->contract}] = c;
      send(imp.node, from, protocol::Challenge{req->contract, c});
    } else if (const auto* resp = std::get_if<protocol::ChallengeResponse>(&m)) {
      if (!imp.challenges.erase({from, resp->contract})) return;
      auto& setup = imp.setups[view->u_id];
      if (setup.keys.verifying.empty()) setup = backend_.setup(view->u_id, rng_);
      Bytes junk = random_bytes(rng_, sc_.update_size);
      auto r = Digest::random(rng_);
      auto s = crypto::hash(r.view());
      // Its own setup lets it mint a proof for junk; only the signature gives it away.
      auto proof = backend_.forge(setup.trapdoor, {crypto::hash(junk), s, view->u_id});
      auto sig = imp.key.sign(protocol::vendor_message(view->u_id, setup.keys.verifying)).to_vector();
      ++stats_.impersonator_offers;
      send(imp.node, from, protocol::Offer{resp->contract, junk, s, proof, setup.keys.verifying, sig});
    }
  }

  // ----------------------------------------------------------------- report

  RunResult finish() {
    RunResult out;
    out.scenario = sc_;
    out.final_tick = now_;
    out.adversary = stats_;
    out.invariants = check_invariants(ledger_, contracts_, offers_, installs_);
    out.secrecy_violations = secrecy_hits_;
    out.supply_violations = supply_violations_;
    out.transcript_digest = transcript_digest_;

    auto activity = scan_ledger(ledger_, contracts_);
    std::map<Address, Coins> per_dist;
    std::map<Address, std::uint64_t> per_dist_count;
    std::map<std::pair<Address, PublicKey>, const Payment*> payment_for;
    Coins paid_total = 0;
    for (const auto& p : activity.payments) {
      per_dist[p.payee] += p.amount;
      ++per_dist_count[p.payee];
      payment_for[{p.contract, p.device}] = &p;
      paid_total += p.amount;
      if (eavesdropper_addrs_.contains(p.payee)) ++out.adversary.front_run_successes;
      if (auto it = device_by_pk_.find(p.device);
          it != device_by_pk_.end() && devices_[it->second].compromised &&
          ledger::address_of(p.device) == p.payee) {
        ++out.adversary.self_dealt_payments;
      }
    }
    for (const auto& dn : dists_) {
      for (const auto& [addr, rec] : contracts_) {
        if (!rec.honest && dn.d->serving(addr)) ++out.adversary.impersonator_registrations;
      }
    }
    Coins refund_total = 0;
    for (const auto& r : activity.refunds) refund_total += r.amount;
    out.payments = activity.payments.size();

    // Coverage: every device holds the newest honest release of its vendor.
    std::map<std::uint32_t, std::pair<std::uint64_t, Address>> newest;
    for (const auto& [addr, rec] : contracts_) {
      if (!rec.honest || rec.deploy_height == 0) continue;
      auto& n = newest[rec.vendor];
      if (rec.deploy_height > n.first) n = {rec.deploy_height, addr};
    }
    std::map<PublicKey, Tick> covered_at;
    std::set<PublicKey> updated;
    for (const auto& in : installs_) {
      updated.insert(in.device);
      auto dev = device_by_pk_.at(in.device);
      auto it = newest.find(devices_[dev].vendor);
      if (it != newest.end() && it->second.second == in.contract) covered_at[in.device] = in.tick;
    }
    out.devices_total = devices_.size();
    out.devices_covered = covered_at.size();
    nlohmann::json ttfc = nullptr;
    if (out.devices_total > 0 && out.devices_covered == out.devices_total) {
      Tick last = 0;
      for (const auto& [pk, t] : covered_at) last = std::max(last, t);
      ttfc = last - 1;
    }

    nlohmann::json per_dist_json = nlohmann::json::object();
    for (const auto& [a, amount] : per_dist) per_dist_json[a.hex()] = {{"count", per_dist_count[a]}, {"amount", amount}};
    nlohmann::json contracts_json = nlohmann::json::array();
    for (const auto& [addr, rec] : contracts_) {
      Coins paid = 0, refunded = 0;
      std::uint64_t n = 0;
      for (const auto& p : activity.payments) {
        if (p.contract == addr) paid += p.amount, ++n;
      }
      for (const auto& r : activity.refunds) refunded += r.contract == addr ? r.amount : 0;
      contracts_json.push_back({{"address", addr.hex()},
                                {"honest", rec.honest},
                                {"deposit", rec.deposit},
                                {"devices", rec.devices.size()},
                                {"payments", n},
                                {"paid", paid},
                                {"refunded", refunded},
                                {"expiration", rec.expiration}});
    }
    std::map<std::string, std::uint64_t> by_type;
    for (const auto& e : transcript_) by_type[e.type] += e.size;

    out.metrics = {
        {"seed", sc_.seed},
        {"final_tick", now_},
        {"devices_total", out.devices_total},
        {"devices_updated", installs_.size()},
        {"devices_covered", out.devices_covered},
        {"distinct_devices_updated", updated.size()},
        {"ticks_to_full_coverage", ttfc},
        {"payments", {{"count", out.payments}, {"total", paid_total}, {"per_distributor", per_dist_json}}},
        {"refund", refund_total},
        {"rejected_claims", activity.rejected_claims},
        {"contracts", contracts_json},
        {"transcript", {{"messages", transcript_.size()}, {"bytes", transcript_bytes_}, {"bytes_by_type", by_type}}},
        {"dsn_bytes", net_.bytes_transferred()},
        {"adversary", out.adversary.to_json()},
        {"invariants", out.invariants.to_json()},
        {"secrecy", {{"secrets", scanner_.size()}, {"occurrences", secrecy_hits_}}},
        {"supply_violations", supply_violations_},
    };

    // Audit trail: one row per install, joined with the paying receipt.
    out.audit = nlohmann::json::array();
    std::map<std::pair<Address, PublicKey>, const OfferRecord*> offer_for;
    for (const auto& o : offers_) offer_for[{o.contract, o.device}] = &o;
    for (const auto& in : installs_) {
      nlohmann::json row{{"device", in.device.hex()}, {"contract", in.contract.hex()}, {"installed_at", in.tick}};
      if (auto it = offer_for.find({in.contract, in.device}); it != offer_for.end()) {
        row["served_by"] = it->second->distributor.hex();
        row["served_at"] = it->second->tick;
      }
      if (auto it = payment_for.find({in.contract, in.device}); it != payment_for.end()) {
        row["payee"] = it->second->payee.hex();
        row["payment"] = it->second->amount;
        row["claim_tx"] = it->second->tx.hex();
        row["block_height"] = it->second->height;
      }
      out.audit.push_back(std::move(row));
    }

    auto ledger_dump = ledger_.dump();
    out.ledger_digest = crypto::hash(as_bytes(ledger_dump.dump()));
    nlohmann::json contracts_log = nlohmann::json::array();
    for (const auto& [addr, rec] : contracts_) contracts_log.push_back(rec.to_json());
    nlohmann::json offers_log = nlohmann::json::array();
    for (const auto& o : offers_) offers_log.push_back(o.to_json());
    nlohmann::json installs_log = nlohmann::json::array();
    for (const auto& in : installs_) installs_log.push_back(in.to_json());
    nlohmann::json transcript_log = nlohmann::json::array();
    for (const auto& e : transcript_) transcript_log.push_back(e.to_json());
    out.log = {
        {"format", "podnet-run/v1"},
        {"scenario", sc_.to_json()},
        {"contracts", std::move(contracts_log)},
        {"offers", std::move(offers_log)},
        {"installs", std::move(installs_log)},
        {"transcript", std::move(transcript_log)},
        {"transcript_digest", transcript_digest_.hex()},
        {"ledger", std::move(ledger_dump)},
        {"ledger_digest", out.ledger_digest.hex()},
        {"secrecy_occurrences", secrecy_hits_},
        {"supply_violations", supply_violations_},
    };
    return out;
  }

  Scenario sc_;
  Rng rng_;
  Rng adv_rng_;
  Rng link_rng_;
  crypto::SimulatedProofBackend backend_;
  dsn::Network net_;
  ledger::Ledger ledger_;
  double drop_p_ = 0;
  double tamper_p_ = 0;

  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
  Tick now_ = 0;
  Tick last_seal_ = 0;
  bool seal_pending_ = false;
  std::size_t events_seen_ = 0;

  std::vector<NodeRef> nodes_;
  std::vector<VendorNode> vendors_;
  std::vector<DistNode> dists_;
  std::vector<DeviceNode> devices_;
  std::vector<Impersonator> impersonators_;
  std::vector<Eavesdropper> eavesdroppers_;
  std::set<Address> eavesdropper_addrs_;
  std::map<PublicKey, std::size_t> device_by_pk_;
  std::map<NodeId, Address> address_of_node_;

  std::vector<ClaimTrack> claims_;
  std::set<Digest> accepted_txs_;
  std::map<Address, ContractRecord> contracts_;
  std::vector<OfferRecord> offers_;
  std::vector<InstallRecord> installs_;
  std::vector<TranscriptEntry> transcript_;
  Digest transcript_digest_;
  std::uint64_t transcript_bytes_ = 0;
  SecretScanner scanner_;
  std::uint64_t secrecy_hits_ = 0;
  std::uint64_t supply_violations_ = 0;
  AdversaryStats stats_;
};

inline RunResult run(const Scenario& sc) { return Simulation(sc).run(); }

}  // namespace podnet::sim
