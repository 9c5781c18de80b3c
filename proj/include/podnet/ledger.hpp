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

// In-memory permissionless ledger: accounts, timestamped blocks of signed
// transactions, hosted contracts and an append-only event log. There is no
// consensus, mining or fee market; the owner seals blocks explicitly.

#include <deque>
#include <map>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <variant>

#include "json.hpp"
#include "podnet/crypto.hpp"

namespace podnet::ledger {

struct AddressTag {};
using Address = FixedBytes<32, AddressTag>;
using Coins = std::uint64_t;

// Account addresses are the owner's Ed25519 public key bytes.
inline Address address_of(const crypto::PublicKey& pk) { return Address{pk.bytes}; }
inline crypto::PublicKey public_key_of(const Address& a) { return crypto::PublicKey{a.bytes}; }

/// Well-known address under which contract creation events are emitted.
inline const Address& factory_address() {
  static const Address a{crypto::hash(as_bytes("podnet/factory")).bytes};
  return a;
}

inline constexpr std::string_view kContractCreated = "ContractCreated";

inline Address contract_address(const Address& deployer, std::uint64_t nonce) {
  return Address{crypto::hash_parts(as_bytes("podnet/contract"), deployer.view(), u64_bytes(nonce)).bytes};
}

struct Transfer {
  Address to;
  Coins amount = 0;
};

struct Deploy {
  std::string template_name;
  Bytes init;
  Coins deposit = 0;
};

struct Call {
  Address contract;
  Bytes data;
};

using Payload = std::variant<Transfer, Deploy, Call>;

struct Transaction {
  Address sender;
  std::uint64_t nonce = 0;
  Payload payload;
  Bytes signature;

  Bytes signing_bytes() const {
    TupleWriter w;
    w.field("podnet/tx/v1").field(sender).u64(nonce);
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Transfer>) {
            w.field("transfer").field(p.to).u64(p.amount);
          } else if constexpr (std::is_same_v<T, Deploy>) {
            w.field("deploy").field(p.template_name).field(p.init).u64(p.deposit);
          } else {
            w.field("call").field(p.contract).field(p.data);
          }
        },
        payload);
    return std::move(w).finish();
  }

  Bytes encode() const { return std::move(TupleWriter().field(signing_bytes()).field(signature)).finish(); }

  crypto::Digest id() const { return crypto::hash(encode()); }

  Coins outflow() const {
    if (auto* t = std::get_if<Transfer>(&payload)) return t->amount;
    if (auto* d = std::get_if<Deploy>(&payload)) return d->deposit;
    return 0;
  }

  static Transaction make(const crypto::KeyPair& key, std::uint64_t nonce, Payload payload) {
    Transaction tx;
    tx.sender = address_of(key.public_key());
    tx.nonce = nonce;
    tx.payload = std::move(payload);
    tx.signature = key.sign(tx.signing_bytes()).to_vector();
    return tx;
  }

  static std::optional<Transaction> decode(ByteView data) {
    auto outer = read_tuple(data);
    if (!outer || outer->size() != 2) return std::nullopt;
    auto f = read_tuple((*outer)[0]);
    if (!f || f->size() < 4 || to_string((*f)[0]) != "podnet/tx/v1") return std::nullopt;
    Transaction tx;
    auto sender = Address::from((*f)[1]);
    auto nonce = read_u64((*f)[2]);
    if (!sender || !nonce) return std::nullopt;
    tx.sender = *sender;
    tx.nonce = *nonce;
    auto kind = to_string((*f)[3]);
    if (kind == "transfer" && f->size() == 6) {
      auto to = Address::from((*f)[4]);
      auto amount = read_u64((*f)[5]);
      if (!to || !amount) return std::nullopt;
      tx.payload = Transfer{*to, *amount};
    } else if (kind == "deploy" && f->size() == 7) {
      auto deposit = read_u64((*f)[6]);
      if (!deposit) return std::nullopt;
      tx.payload = Deploy{to_string((*f)[4]), Bytes((*f)[5].begin(), (*f)[5].end()), *deposit};
    } else if (kind == "call" && f->size() == 6) {
      auto contract = Address::from((*f)[4]);
      if (!contract) return std::nullopt;
      tx.payload = Call{*contract, Bytes((*f)[5].begin(), (*f)[5].end())};
    } else {
      return std::nullopt;
    }
    tx.signature.assign((*outer)[1].begin(), (*outer)[1].end());
    return tx;
  }
};

enum class Rejection { bad_signature, insufficient_balance, duplicate };

inline std::string_view to_string(Rejection r) {
  switch (r) {
    case Rejection::bad_signature: return "bad-signature";
    case Rejection::insufficient_balance: return "insufficient-balance";
    case Rejection::duplicate: return "duplicate";
  }
  return "unknown";
}

struct SubmitResult {
  crypto::Digest id;
  std::optional<Rejection> rejected;

  bool accepted() const { return !rejected; }
};

struct LedgerEvent {
  Address contract;
  std::string name;
  std::vector<Bytes> args;
  std::uint64_t block_height = 0;

  bool operator==(const LedgerEvent&) const = default;
};

struct Receipt {
  crypto::Digest tx;
  Address sender;
  std::uint64_t height = 0;
  bool success = false;
  std::string outcome;
  Coins amount = 0;
  std::optional<Address> created;
};

struct Block {
  std::uint64_t height = 0;
  Tick timestamp = 0;
  std::vector<Transaction> transactions;
  std::vector<Receipt> receipts;
};

struct CallContext {
  Address self;
  Address sender;
  Tick timestamp = 0;
  std::uint64_t height = 0;
};

struct Emitted {
  std::string name;
  std::vector<Bytes> args;
};

/// Result of one contract call. A contract leaves its own state untouched when
/// it reports failure; the ledger then discards payouts and events as well.
struct Effects {
  bool success = false;
  std::string outcome;
  Coins amount = 0;
  std::vector<std::pair<Address, Coins>> payouts;
  std::vector<Emitted> events;

  static Effects fail(std::string reason) { return Effects{false, std::move(reason), 0, {}, {}}; }
};

class Contract {
 public:
  virtual ~Contract() = default;
  virtual std::string_view template_name() const = 0;
  virtual Coins balance() const = 0;
  virtual Effects call(const CallContext& ctx, ByteView data) = 0;
  virtual nlohmann::json dump() const = 0;
};

struct DeployContext {
  Address self;
  Address deployer;
  Tick timestamp = 0;
  std::uint64_t height = 0;
  Coins deposit = 0;
};

/// Thrown by a contract factory to refuse construction.
class DeployError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Simulator misconfiguration, e.g. a non-increasing block timestamp.
class SealError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

using ContractFactory = std::function<std::unique_ptr<Contract>(const DeployContext&, ByteView init)>;

class Ledger;

/// Replaying subscription: the first poll yields every past match, later polls
/// only what was appended since.
class EventCursor {
 public:
  std::vector<LedgerEvent> poll();

 private:
  friend class Ledger;
  EventCursor(const Ledger* ledger, Address contract, std::string name)
      : ledger_(ledger), contract_(contract), name_(std::move(name)) {}

  const Ledger* ledger_;
  Address contract_;
  std::string name_;
  std::size_t next_ = 0;
};

class Ledger {
 public:
  enum class Placement { back, front };

  explicit Ledger(std::vector<std::pair<Address, Coins>> genesis = {}) {
    for (auto& [addr, amount] : genesis) {
      accounts_[addr] += amount;
      genesis_supply_ += amount;
      genesis_.emplace_back(addr, amount);
    }
    blocks_.push_back(Block{0, 0, {}, {}});
  }

  Ledger(const Ledger&) = delete;
  Ledger& operator=(const Ledger&) = delete;
  Ledger(Ledger&&) = default;
  Ledger& operator=(Ledger&&) = default;

  void register_template(std::string name, ContractFactory factory) {
    templates_[std::move(name)] = std::move(factory);
  }

  SubmitResult submit(Transaction tx, Placement placement = Placement::back) {
    SubmitResult result{tx.id(), std::nullopt};
    if (!crypto::verify_signature(public_key_of(tx.sender), tx.signature, tx.signing_bytes())) {
      result.rejected = Rejection::bad_signature;
      return result;
    }
    if (seen_.contains(result.id)) {
      result.rejected = Rejection::duplicate;
      return result;
    }
    Coins outflow = tx.outflow();
    Coins& reserved = reserved_[tx.sender];
    if (balance(tx.sender) < reserved || balance(tx.sender) - reserved < outflow) {
      result.rejected = Rejection::insufficient_balance;
      return result;
    }
    reserved += outflow;
    seen_.insert(result.id);
    if (placement == Placement::front) {
      pending_.push_front(std::move(tx));
    } else {
      pending_.push_back(std::move(tx));
    }
    return result;
  }

  /// Drains the pending pool into a new block in pool order.
  const Block& seal(Tick timestamp) {
    std::vector<Transaction> txs(std::make_move_iterator(pending_.begin()), std::make_move_iterator(pending_.end()));
    pending_.clear();
    reserved_.clear();
    return execute_block(timestamp, std::move(txs));
  }

  /// Re-executes a recorded block. Used by replay verification; the
  /// transactions skip the pool but signatures are still enforced.
  const Block& apply_block(Tick timestamp, std::vector<Transaction> txs) {
    if (!pending_.empty()) throw SealError("apply_block with a non-empty pending pool");
    for (const auto& tx : txs) seen_.insert(tx.id());
    return execute_block(timestamp, std::move(txs));
  }

  Coins balance(const Address& a) const {
    if (auto it = accounts_.find(a); it != accounts_.end()) return it->second;
    if (auto it = contracts_.find(a); it != contracts_.end()) return it->second.contract->balance();
    return 0;
  }

  Coins account_balance(const Address& a) const {
    auto it = accounts_.find(a);
    return it == accounts_.end() ? 0 : it->second;
  }

  Coins genesis_supply() const { return genesis_supply_; }

  /// Sum of account balances plus contract balances.
  Coins total_supply() const {
    Coins sum = 0;
    for (const auto& [_, v] : accounts_) sum += v;
    for (const auto& [_, c] : contracts_) sum += c.contract->balance();
    return sum;
  }

  const std::vector<Block>& blocks() const { return blocks_; }
  const Block& head() const { return blocks_.back(); }
  const std::deque<Transaction>& pending() const { return pending_; }
  const std::vector<LedgerEvent>& events() const { return events_; }
  const std::vector<std::pair<Address, Coins>>& genesis() const { return genesis_; }

  const Contract* contract(const Address& a) const {
    auto it = contracts_.find(a);
    return it == contracts_.end() ? nullptr : it->second.contract.get();
  }

  template <typename T>
  const T* contract_as(const Address& a) const {
    return dynamic_cast<const T*>(contract(a));
  }

  std::optional<std::uint64_t> deploy_height(const Address& a) const {
    auto it = contracts_.find(a);
    if (it == contracts_.end()) return std::nullopt;
    return it->second.height;
  }

  std::optional<Address> deployer(const Address& a) const {
    auto it = contracts_.find(a);
    if (it == contracts_.end()) return std::nullopt;
    return it->second.deployer;
  }

  const Receipt* receipt(const crypto::Digest& tx) const {
    auto it = receipt_index_.find(tx);
    if (it == receipt_index_.end()) return nullptr;
    return &blocks_[it->second.first].receipts[it->second.second];
  }

  EventCursor subscribe(const Address& contract, std::string name) const {
    return EventCursor(this, contract, std::move(name));
  }

  const std::vector<std::size_t>* event_indices(const Address& contract, const std::string& name) const {
    auto it = event_index_.find({contract, name});
    return it == event_index_.end() ? nullptr : &it->second;
  }

  /// Canonical JSON: object keys sorted, digests and addresses lowercase hex.
  nlohmann::json dump() const {
    using nlohmann::json;
    json out;
    out["genesis_supply"] = genesis_supply_;
    json genesis = json::array();
    for (const auto& [a, v] : genesis_) genesis.push_back({{"address", a.hex()}, {"amount", v}});
    out["genesis"] = std::move(genesis);
    json accounts = json::object();
    for (const auto& [a, v] : accounts_) accounts[a.hex()] = v;
    out["accounts"] = std::move(accounts);
    json contracts = json::object();
    for (const auto& [a, c] : contracts_) {
      contracts[a.hex()] = {{"template", std::string(c.contract->template_name())},
                            {"deployer", c.deployer.hex()},
                            {"deploy_height", c.height},
                            {"balance", c.contract->balance()},
                            {"state", c.contract->dump()}};
    }
    out["contracts"] = std::move(contracts);
    json blocks = json::array();
    for (const auto& b : blocks_) {
      json txs = json::array();
      for (const auto& tx : b.transactions) txs.push_back(to_hex(tx.encode()));
      json receipts = json::array();
      for (const auto& r : b.receipts) {
        json jr = {{"tx", r.tx.hex()}, {"success", r.success}, {"outcome", r.outcome}, {"amount", r.amount}};
        if (r.created) jr["created"] = r.created->hex();
        receipts.push_back(std::move(jr));
      }
      blocks.push_back(
          {{"height", b.height}, {"timestamp", b.timestamp}, {"transactions", txs}, {"receipts", receipts}});
    }
    out["blocks"] = std::move(blocks);
    json events = json::array();
    for (const auto& e : events_) {
      json args = json::array();
      for (const auto& a : e.args) args.push_back(to_hex(a));
      events.push_back(
          {{"contract", e.contract.hex()}, {"name", e.name}, {"args", args}, {"block_height", e.block_height}});
    }
    out["events"] = std::move(events);
    return out;
  }

 private:
  friend class EventCursor;

  struct Hosted {
    std::unique_ptr<Contract> contract;
    Address deployer;
    std::uint64_t height = 0;
  };

  struct EventKeyLess {
    bool operator()(const std::pair<Address, std::string>& a, const std::pair<Address, std::string>& b) const {
      return a < b;
    }
  };

  const Block& execute_block(Tick timestamp, std::vector<Transaction> txs) {
    if (timestamp <= blocks_.back().timestamp) {
      throw SealError("block timestamp " + std::to_string(timestamp) + " not after " +
                      std::to_string(blocks_.back().timestamp));
    }
    Block block;
    block.height = blocks_.back().height + 1;
    block.timestamp = timestamp;
    for (auto& tx : txs) {
      block.receipts.push_back(execute(tx, block.height, timestamp));
      block.transactions.push_back(std::move(tx));
    }
    blocks_.push_back(std::move(block));
    const Block& b = blocks_.back();
    for (std::size_t i = 0; i < b.receipts.size(); ++i) receipt_index_[b.receipts[i].tx] = {b.height, i};
    return b;
  }

  Receipt execute(const Transaction& tx, std::uint64_t height, Tick timestamp) {
    Receipt r;
    r.tx = tx.id();
    r.sender = tx.sender;
    r.height = height;
    if (!crypto::verify_signature(public_key_of(tx.sender), tx.signature, tx.signing_bytes())) {
      r.outcome = "bad-signature";
      return r;
    }
    if (auto* t = std::get_if<Transfer>(&tx.payload)) {
      if (account_balance(tx.sender) < t->amount) {
        r.outcome = "insufficient-balance";
        return r;
      }
      accounts_[tx.sender] -= t->amount;
      accounts_[t->to] += t->amount;
      r.success = true;
      r.outcome = "ok";
      r.amount = t->amount;
    } else if (auto* d = std::get_if<Deploy>(&tx.payload)) {
      execute_deploy(tx, *d, height, timestamp, r);
    } else {
      execute_call(tx, std::get<Call>(tx.payload), height, timestamp, r);
    }
    return r;
  }

  void execute_deploy(const Transaction& tx, const Deploy& d, std::uint64_t height, Tick timestamp, Receipt& r) {
    if (account_balance(tx.sender) < d.deposit) {
      r.outcome = "insufficient-balance";
      return;
    }
    auto tmpl = templates_.find(d.template_name);
    if (tmpl == templates_.end()) {
      r.outcome = "unknown-template";
      return;
    }
    Address self = contract_address(tx.sender, tx.nonce);
    if (contracts_.contains(self)) {
      r.outcome = "address-taken";
      return;
    }
    std::unique_ptr<Contract> instance;
    try {
      instance = tmpl->second(DeployContext{self, tx.sender, timestamp, height, d.deposit}, d.init);
    } catch (const DeployError& e) {
      r.outcome = e.what();
      return;
    }
    if (!instance || instance->balance() != d.deposit) throw std::logic_error("contract factory broke deposit");
    accounts_[tx.sender] -= d.deposit;
    contracts_.emplace(self, Hosted{std::move(instance), tx.sender, height});
    append_event(LedgerEvent{factory_address(),
                             std::string(kContractCreated),
                             {tx.sender.to_vector(), self.to_vector(), Bytes(d.template_name.begin(), d.template_name.end())},
                             height});
    r.success = true;
    r.outcome = "ok";
    r.amount = d.deposit;
    r.created = self;
  }

  void execute_call(const Transaction& tx, const Call& c, std::uint64_t height, Tick timestamp, Receipt& r) {
    auto it = contracts_.find(c.contract);
    if (it == contracts_.end()) {
      r.outcome = "unknown-contract";
      return;
    }
    Contract& contract = *it->second.contract;
    Coins before = contract.balance();
    Effects fx = contract.call(CallContext{c.contract, tx.sender, timestamp, height}, c.data);
    r.outcome = fx.outcome;
    if (!fx.success) {
      if (contract.balance() != before) throw std::logic_error("contract mutated balance on failure");
      return;
    }
    Coins paid = 0;
    for (const auto& [to, amount] : fx.payouts) {
      accounts_[to] += amount;
      paid += amount;
    }
    if (before - contract.balance() != paid) throw std::logic_error("contract payouts do not match balance change");
    for (auto& e : fx.events) append_event(LedgerEvent{c.contract, std::move(e.name), std::move(e.args), height});
    r.success = true;
    r.amount = fx.amount;
  }

  void append_event(LedgerEvent e) {
    event_index_[{e.contract, e.name}].push_back(events_.size());
    events_.push_back(std::move(e));
  }

  std::vector<std::pair<Address, Coins>> genesis_;
  Coins genesis_supply_ = 0;
  std::map<Address, Coins> accounts_;
  std::map<Address, Hosted> contracts_;
  std::map<std::string, ContractFactory> templates_;
  std::deque<Transaction> pending_;
  std::unordered_map<Address, Coins, FixedBytesHash> reserved_;
  std::unordered_set<crypto::Digest, FixedBytesHash> seen_;
  std::vector<Block> blocks_;
  std::vector<LedgerEvent> events_;
  std::map<std::pair<Address, std::string>, std::vector<std::size_t>, EventKeyLess> event_index_;
  std::unordered_map<crypto::Digest, std::pair<std::uint64_t, std::size_t>, FixedBytesHash> receipt_index_;
};

inline std::vector<LedgerEvent> EventCursor::poll() {
  std::vector<LedgerEvent> out;
  const auto* idx = ledger_->event_indices(contract_, name_);
  if (!idx) return out;
  for (; next_ < idx->size(); ++next_) out.push_back(ledger_->events_[(*idx)[next_]]);
  return out;
}

/// Sender-side helper that numbers transactions.
class Wallet {
 public:
  explicit Wallet(crypto::KeyPair key) : key_(std::move(key)) {}

  Transaction make(Payload payload) { return Transaction::make(key_, next_nonce_++, std::move(payload)); }
  std::uint64_t next_nonce() const { return next_nonce_; }
  Address address() const { return address_of(key_.public_key()); }
  const crypto::KeyPair& key() const { return key_; }

 private:
  crypto::KeyPair key_;
  std::uint64_t next_nonce_ = 0;
};

}  // namespace podnet::ledger
