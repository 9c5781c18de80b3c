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

// Run-level invariants, evaluated from the ledger plus what was recorded at
// the devices (offers they signed for, updates they installed). Nothing here
// reads node state, so a replay can run the same checks on a rebuilt chain.

#include <map>
#include <set>
#include <tuple>

#include "json.hpp"

#include "podnet/contract.hpp"
#include "podnet/ledger.hpp"

namespace podnet::sim {

using contract::Address;
using contract::Coins;
using contract::Digest;
using contract::PublicKey;

struct ContractRecord {
  Address address;
  std::uint32_t vendor = 0;
  bool honest = true;
  Bytes update;
  Digest u_id;
  Coins deposit = 0;
  Tick expiration = 0;
  std::uint64_t deploy_height = 0;
  std::vector<PublicKey> devices;

  nlohmann::json to_json() const {
    nlohmann::json devs = nlohmann::json::array();
    for (const auto& d : devices) devs.push_back(d.hex());
    return {{"address", address.hex()}, {"vendor", vendor},         {"honest", honest},
            {"update", to_hex(update)},  {"u_id", u_id.hex()},        {"deposit", deposit},
            {"expiration", expiration},  {"deploy_height", deploy_height}, {"devices", std::move(devs)}};
  }

  static ContractRecord from_json(const nlohmann::json& j) {
    ContractRecord c;
    c.address = Address::from_hex(j.at("address").get<std::string>()).value();
    c.vendor = j.at("vendor").get<std::uint32_t>();
    c.honest = j.at("honest").get<bool>();
    c.update = from_hex(j.at("update").get<std::string>()).value();
    c.u_id = Digest::from_hex(j.at("u_id").get<std::string>()).value();
    c.deposit = j.at("deposit").get<Coins>();
    c.expiration = j.at("expiration").get<Tick>();
    c.deploy_height = j.at("deploy_height").get<std::uint64_t>();
    for (const auto& d : j.at("devices")) c.devices.push_back(PublicKey::from_hex(d.get<std::string>()).value());
    return c;
  }
};

/// A device accepted an offer and released its signature over (U_id || s).
struct OfferRecord {
  Address contract;
  PublicKey device;
  Address distributor;
  Digest s;
  Digest ciphertext_hash;
  Tick tick = 0;

  nlohmann::json to_json() const {
    return {{"contract", contract.hex()}, {"device", device.hex()}, {"distributor", distributor.hex()},
            {"s", s.hex()},               {"ciphertext_hash", ciphertext_hash.hex()}, {"tick", tick}};
  }

  static OfferRecord from_json(const nlohmann::json& j) {
    return {Address::from_hex(j.at("contract").get<std::string>()).value(),
            PublicKey::from_hex(j.at("device").get<std::string>()).value(),
            Address::from_hex(j.at("distributor").get<std::string>()).value(),
            Digest::from_hex(j.at("s").get<std::string>()).value(),
            Digest::from_hex(j.at("ciphertext_hash").get<std::string>()).value(),
            j.at("tick").get<Tick>()};
  }
};

struct InstallRecord {
  PublicKey device;
  Address contract;
  Digest update_hash;
  std::uint64_t deploy_height = 0;
  Tick tick = 0;

  nlohmann::json to_json() const {
    return {{"device", device.hex()},
            {"contract", contract.hex()},
            {"update_hash", update_hash.hex()},
            {"deploy_height", deploy_height},
            {"tick", tick}};
  }

  static InstallRecord from_json(const nlohmann::json& j) {
    return {PublicKey::from_hex(j.at("device").get<std::string>()).value(),
            Address::from_hex(j.at("contract").get<std::string>()).value(),
            Digest::from_hex(j.at("update_hash").get<std::string>()).value(), j.at("deploy_height").get<std::uint64_t>(),
            j.at("tick").get<Tick>()};
  }
};

struct Payment {
  Address contract;
  PublicKey device;
  Address payee;
  Digest r;
  Coins amount = 0;
  Tick timestamp = 0;
  std::uint64_t height = 0;
  Digest tx;
};

struct Refund {
  Address contract;
  Coins amount = 0;
  Tick timestamp = 0;
};

struct LedgerActivity {
  std::vector<Payment> payments;
  std::vector<Refund> refunds;
  std::map<std::string, std::uint64_t> rejected_claims;  // by outcome
};

/// Walks every block and classifies the bid-contract calls.
inline LedgerActivity scan_ledger(const ledger::Ledger& l, const std::map<Address, ContractRecord>& contracts) {
  LedgerActivity out;
  for (const auto& b : l.blocks()) {
    for (std::size_t i = 0; i < b.transactions.size(); ++i) {
      const auto& tx = b.transactions[i];
      const auto& rc = b.receipts[i];
      const auto* call = std::get_if<ledger::Call>(&tx.payload);
      if (!call) continue;
      auto cit = contracts.find(call->contract);
      if (auto tuple = contract::decode_publish_proof(call->data)) {
        if (!rc.success) {
          ++out.rejected_claims[rc.outcome];
          continue;
        }
        PublicKey device;
        if (const auto* pk = std::get_if<PublicKey>(&tuple->device)) {
          device = *pk;
        } else if (cit != contracts.end()) {
          device = cit->second.devices.at(std::get<std::uint32_t>(tuple->device));
        }
        out.payments.push_back({call->contract, device, tuple->distributor, tuple->r, rc.amount, b.timestamp, b.height, tx.id()});
      } else if (rc.success && rc.outcome == contract::kRefunded) {
        out.refunds.push_back({call->contract, rc.amount, b.timestamp});
      }
    }
  }
  return out;
}

struct InvariantReport {
  std::uint64_t payments = 0;
  std::uint64_t installs = 0;
  std::uint64_t fair_exchange_violations = 0;
  std::uint64_t conservation_violations = 0;
  std::uint64_t double_payments = 0;
  std::uint64_t expired_payouts = 0;
  std::uint64_t unsigned_payments = 0;  // paid without the device having signed that s
  std::uint64_t bad_installs = 0;       // installed bytes not hashing to U_id
  std::uint64_t downgrade_installs = 0;
  std::uint64_t event_mismatches = 0;
  std::vector<std::string> details;

  bool ok() const {
    return fair_exchange_violations + conservation_violations + double_payments + expired_payouts +
               unsigned_payments + bad_installs + downgrade_installs + event_mismatches ==
           0;
  }

  void note(std::uint64_t& counter, std::string what) {
    ++counter;
    if (details.size() < 20) details.push_back(std::move(what));
  }

  nlohmann::json to_json() const {
    return {{"ok", ok()},
            {"payments", payments},
            {"installs", installs},
            {"fair_exchange_violations", fair_exchange_violations},
            {"conservation_violations", conservation_violations},
            {"double_payments", double_payments},
            {"expired_payouts", expired_payouts},
            {"unsigned_payments", unsigned_payments},
            {"bad_installs", bad_installs},
            {"downgrade_installs", downgrade_installs},
            {"event_mismatches", event_mismatches},
            {"details", details}};
  }
};

inline InvariantReport check_invariants(const ledger::Ledger& l, const std::map<Address, ContractRecord>& contracts,
                                        const std::vector<OfferRecord>& offers,
                                        const std::vector<InstallRecord>& installs) {
  InvariantReport rep;
  auto activity = scan_ledger(l, contracts);
  rep.payments = activity.payments.size();
  rep.installs = installs.size();

  if (l.total_supply() != l.genesis_supply()) {
    rep.note(rep.conservation_violations, "total supply differs from genesis supply");
  }

  std::map<std::pair<Address, PublicKey>, const OfferRecord*> signed_offers;
  for (const auto& o : offers) {
    if (!signed_offers.emplace(std::pair{o.contract, o.device}, &o).second) {
      rep.note(rep.fair_exchange_violations, "device signed twice for contract " + o.contract.hex());
    }
  }

  std::map<Address, Coins> paid_by_contract;
  std::map<std::pair<Address, PublicKey>, std::vector<const Payment*>> paid_for;
  for (const auto& p : activity.payments) {
    paid_by_contract[p.contract] += p.amount;
    paid_for[{p.contract, p.device}].push_back(&p);
    auto cit = contracts.find(p.contract);
    if (cit == contracts.end()) continue;
    const auto& c = cit->second;
    if (p.timestamp >= c.expiration) rep.note(rep.expired_payouts, "payout at or after expiration");
    auto oit = signed_offers.find({p.contract, p.device});
    if (oit == signed_offers.end()) {
      rep.note(rep.unsigned_payments, "payment for device " + p.device.hex() + " that signed nothing");
      continue;
    }
    const auto& offer = *oit->second;
    // Paid => the revealed key opens exactly the ciphertext the device holds,
    // and the payee is the party that sent it.
    bool binds = crypto::hash(p.r.view()) == offer.s;
    bool opens = crypto::hash(crypto::encrypt(c.update, crypto::SymKey::derive(p.r))) == offer.ciphertext_hash;
    if (!binds || !opens || p.payee != offer.distributor) {
      rep.note(rep.fair_exchange_violations, "payment for device " + p.device.hex() + " does not match its offer");
    }
  }
  for (const auto& [key, list] : paid_for) {
    if (list.size() > 1) rep.note(rep.double_payments, "device " + key.second.hex() + " paid more than once");
  }

  std::map<Address, Coins> refunded;
  for (const auto& r : activity.refunds) refunded[r.contract] += r.amount;
  for (const auto& [addr, c] : contracts) {
    Coins left = l.balance(addr);
    if (paid_by_contract[addr] + refunded[addr] + left != c.deposit) {
      rep.note(rep.conservation_violations, "contract " + addr.hex() + " does not balance");
    }
    if (const auto* bid = l.contract_as<contract::BidContract>(addr)) {
      std::size_t n_paid = 0;
      for (const auto& [key, list] : paid_for) n_paid += key.first == addr ? list.size() : 0;
      if (bid->num_updated() != n_paid) rep.note(rep.event_mismatches, "num_updated disagrees with receipts");
    }
  }

  // Every KeyRevealed corresponds to one payment and vice versa.
  std::multiset<std::tuple<Address, PublicKey, Digest>> revealed;
  for (const auto& e : l.events()) {
    if (auto k = contract::KeyRevealed::from(e)) revealed.insert({k->contract, k->device, k->r});
  }
  for (const auto& p : activity.payments) {
    auto it = revealed.find({p.contract, p.device, p.r});
    if (it == revealed.end()) {
      rep.note(rep.event_mismatches, "payment without KeyRevealed event");
    } else {
      revealed.erase(it);
    }
  }
  if (!revealed.empty()) rep.note(rep.event_mismatches, "KeyRevealed event without payment");

  std::map<PublicKey, std::uint64_t> last_height;
  for (const auto& in : installs) {
    auto cit = contracts.find(in.contract);
    if (cit == contracts.end() || in.update_hash != cit->second.u_id || !cit->second.honest) {
      rep.note(rep.bad_installs, "device " + in.device.hex() + " installed bytes not matching U_id");
    }
    auto pit = paid_for.find({in.contract, in.device});
    if (pit == paid_for.end() || pit->second.size() != 1) {
      rep.note(rep.fair_exchange_violations, "install without exactly one payment");
    }
    auto& h = last_height[in.device];
    if (in.deploy_height <= h) rep.note(rep.downgrade_installs, "device " + in.device.hex() + " installed older");
    h = std::max(h, in.deploy_height);
  }
  return rep;
}

}  // namespace podnet::sim
