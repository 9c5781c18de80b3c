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

// Run artifacts and replay.
//
// A run directory holds:
//   metrics.json  aggregate counters
//   audit.json    one row per install: device, contract, who served it and when, payment
//   ledger.json   full ledger dump (blocks carry hex-encoded transactions)
//   run.json      the run log: scenario, transcript, device-side records, ledger, digests
//
// replay() takes run.json, re-executes every recorded block on a fresh ledger,
// re-checks the invariants on the rebuilt chain and re-runs the scenario to
// confirm the transcript and ledger digests.

#include <filesystem>
#include <fstream>

#include "podnet/sim/simulator.hpp"

namespace podnet::sim {

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return nlohmann::json::parse(in);
}

inline void write_run(const RunResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_json(dir / "metrics.json", r.metrics);
  write_json(dir / "audit.json", r.audit);
  write_json(dir / "ledger.json", r.log.at("ledger"));
  write_json(dir / "run.json", r.log);
}

struct ReplayReport {
  bool ledger_matches = false;
  bool invariants_ok = false;
  bool secrecy_ok = false;
  bool deterministic = false;
  bool reran = false;
  InvariantReport invariants;
  std::vector<std::string> notes;

  bool ok() const { return ledger_matches && invariants_ok && secrecy_ok && (!reran || deterministic); }

  nlohmann::json to_json() const {
    nlohmann::json j{{"ledger_matches", ledger_matches},
                     {"invariants_ok", invariants_ok},
                     {"secrecy_ok", secrecy_ok},
                     {"invariants", invariants.to_json()},
                     {"notes", notes}};
    if (reran) j["deterministic"] = deterministic;
    return j;
  }
};

/// Rebuilds the chain from the recorded blocks. Throws on malformed input.
inline ledger::Ledger rebuild_ledger(const nlohmann::json& dump) {
  std::vector<std::pair<ledger::Address, ledger::Coins>> genesis;
  for (const auto& g : dump.at("genesis")) {
    genesis.emplace_back(ledger::Address::from_hex(g.at("address").get<std::string>()).value(),
                         g.at("amount").get<ledger::Coins>());
  }
  ledger::Ledger l(std::move(genesis));
  contract::BidContract::register_with(l);
  for (const auto& b : dump.at("blocks")) {
    if (b.at("height").get<std::uint64_t>() == 0) continue;
    std::vector<ledger::Transaction> txs;
    for (const auto& hex : b.at("transactions")) {
      auto raw = from_hex(hex.get<std::string>());
      if (!raw) throw std::runtime_error("transaction is not hex");
      auto tx = ledger::Transaction::decode(*raw);
      if (!tx) throw std::runtime_error("undecodable transaction");
      txs.push_back(std::move(*tx));
    }
    l.apply_block(b.at("timestamp").get<Tick>(), std::move(txs));
  }
  return l;
}

inline ReplayReport replay(const nlohmann::json& log, bool rerun = true) {
  ReplayReport rep;
  if (log.value("format", "") != "podnet-run/v1") throw std::runtime_error("not a run log");

  auto rebuilt = rebuild_ledger(log.at("ledger"));
  rep.ledger_matches = rebuilt.dump() == log.at("ledger");
  if (!rep.ledger_matches) rep.notes.push_back("re-executed blocks do not reproduce the recorded ledger");

  std::map<Address, ContractRecord> contracts;
  for (const auto& c : log.at("contracts")) {
    auto rec = ContractRecord::from_json(c);
    contracts.emplace(rec.address, std::move(rec));
  }
  std::vector<OfferRecord> offers;
  for (const auto& o : log.at("offers")) offers.push_back(OfferRecord::from_json(o));
  std::vector<InstallRecord> installs;
  for (const auto& i : log.at("installs")) installs.push_back(InstallRecord::from_json(i));
  rep.invariants = check_invariants(rebuilt, contracts, offers, installs);
  rep.invariants_ok = rep.invariants.ok();

  rep.secrecy_ok = log.at("secrecy_occurrences").get<std::uint64_t>() == 0 &&
                   log.at("supply_violations").get<std::uint64_t>() == 0;

  if (rerun) {
    rep.reran = true;
    auto again = run(Scenario::from_json(log.at("scenario")));
    rep.deterministic = again.transcript_digest.hex() == log.at("transcript_digest").get<std::string>() &&
                        again.ledger_digest.hex() == log.at("ledger_digest").get<std::string>() && again.log == log;
    if (!rep.deterministic) rep.notes.push_back("re-running the scenario produced a different log");
  }
  return rep;
}

}  // namespace podnet::sim
