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

// Canned scenarios: randomized adversarial schedules, the attack catalogue
// and the scale run.

#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>

#include "podnet/sim/simulator.hpp"

namespace podnet::sim {

/// Runs fn(0..n-1) on a pool of threads. Simulations share no mutable state,
/// so seed sweeps are embarrassingly parallel. Results keep index order.
template <typename Fn>
auto parallel_map(std::size_t n, Fn fn, unsigned threads = 0) {
  using R = decltype(fn(std::size_t{}));
  std::vector<std::optional<R>> slots(n);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

/// Small network with a random subset of adversaries, all drawn from `seed`.
inline Scenario random_schedule(std::uint64_t seed) {
  Rng rng(crypto::derive_seed(seed, "schedule"));
  auto pick = [&](std::uint64_t lo, std::uint64_t hi) { return lo + rng() % (hi - lo + 1); };
  Scenario sc;
  sc.seed = seed;
  sc.vendors = static_cast<std::uint32_t>(pick(1, 2));
  sc.distributors = static_cast<std::uint32_t>(pick(0, 4));
  sc.devices_per_vendor = static_cast<std::uint32_t>(pick(2, 7));
  sc.update_size = pick(32, 512);
  sc.deposit = pick(0, 1000);
  sc.refund_window = pick(0, 160);
  sc.seeding_window = pick(5, 60);
  sc.block_interval = pick(1, 4);
  sc.device_poll_max = pick(1, 30);
  sc.session_timeout = pick(8, 24);
  sc.redeem_by_index = rng() % 2;
  sc.link.latency = pick(1, 3);
  sc.link.bandwidth = pick(64, 4096);
  for (auto k : kAllAdversaries) {
    if (rng() % 3 != 0) continue;
    AdversarySpec a{k, 0.0, static_cast<std::uint32_t>(pick(1, 2))};
    if (takes_probability(k)) a.p = static_cast<double>(pick(5, 40)) / 100.0;
    if (k == AdversaryKind::device_self_dealer) a.count = std::min(a.count, sc.devices_per_vendor);
    sc.adversaries.push_back(a);
  }
  sc.releases_per_vendor = sc.has(AdversaryKind::downgrade_pusher) ? 2 : static_cast<std::uint32_t>(pick(1, 2));
  sc.validate();
  return sc;
}

/// 1 vendor, 10 distributors, 10,000 devices.
inline Scenario scale_scenario(std::uint64_t seed = 2026) {
  Scenario sc;
  sc.seed = seed;
  sc.vendors = 1;
  sc.distributors = 10;
  sc.devices_per_vendor = 10000;
  sc.update_size = 1024;
  sc.deposit = 1000000;
  sc.refund_window = 400;
  sc.device_poll_max = 50;
  return sc;
}

struct AttackCase {
  std::string name;
  bool pass = false;
  std::string summary;
  nlohmann::json detail;
};

struct AttackSuiteResult {
  std::vector<AttackCase> cases;

  bool ok() const {
    return std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.pass; });
  }

  const AttackCase* find(std::string_view name) const {
    for (const auto& c : cases) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& c : cases) {
      j.push_back({{"name", c.name}, {"pass", c.pass}, {"summary", c.summary}, {"detail", c.detail}});
    }
    return {{"ok", ok()}, {"cases", j}};
  }
};

namespace detail {

inline Scenario attack_base(std::uint64_t seed, std::uint32_t distributors = 3) {
  Scenario sc;
  sc.seed = seed;
  sc.distributors = distributors;
  sc.devices_per_vendor = 8;
  sc.deposit = 800;
  sc.update_size = 256;
  sc.refund_window = 200;
  return sc;
}

struct Totals {
  AdversaryStats adv;
  InvariantReport inv;
  std::uint64_t runs = 0;
  std::uint64_t secrecy = 0;
  std::uint64_t supply = 0;
  std::uint64_t expired_rejections = 0;
  std::uint64_t installs = 0;

  void add(const RunResult& r) {
    ++runs;
    const auto& a = r.adversary;
    adv.front_run_attempts += a.front_run_attempts;
    adv.front_run_successes += a.front_run_successes;
    adv.double_claim_attempts += a.double_claim_attempts;
    adv.forged_signature_claims += a.forged_signature_claims;
    adv.forged_vendor_acceptances += a.forged_vendor_acceptances;
    adv.late_claims += a.late_claims;
    adv.downgrade_attempts += a.downgrade_attempts;
    adv.downgrade_refusals += a.downgrade_refusals;
    adv.dropped_messages += a.dropped_messages;
    adv.dropped_transactions += a.dropped_transactions;
    adv.tampered_messages += a.tampered_messages;
    adv.tampered_transactions += a.tampered_transactions;
    adv.tampered_dsn_transfers += a.tampered_dsn_transfers;
    adv.impersonator_offers += a.impersonator_offers;
    adv.impersonator_registrations += a.impersonator_registrations;
    adv.bogus_adverts += a.bogus_adverts;
    adv.self_dealt_payments += a.self_dealt_payments;
    const auto& i = r.invariants;
    inv.payments += i.payments;
    inv.installs += i.installs;
    inv.fair_exchange_violations += i.fair_exchange_violations;
    inv.conservation_violations += i.conservation_violations;
    inv.double_payments += i.double_payments;
    inv.expired_payouts += i.expired_payouts;
    inv.unsigned_payments += i.unsigned_payments;
    inv.bad_installs += i.bad_installs;
    inv.downgrade_installs += i.downgrade_installs;
    inv.event_mismatches += i.event_mismatches;
    for (const auto& d : i.details) {
      if (inv.details.size() < 20) inv.details.push_back(d);
    }
    secrecy += r.secrecy_violations;
    supply += r.supply_violations;
    installs += r.invariants.installs;
    if (auto it = r.metrics["rejected_claims"].find("expired"); it != r.metrics["rejected_claims"].end()) {
      expired_rejections += it->get<std::uint64_t>();
    }
  }

  bool clean() const { return inv.ok() && secrecy == 0 && supply == 0; }

  nlohmann::json to_json() const {
    return {{"runs", runs}, {"adversary", adv.to_json()}, {"invariants", inv.to_json()},
            {"secrecy_occurrences", secrecy}, {"supply_violations", supply}, {"expired_rejections", expired_rejections}};
  }
};

template <typename Make>
Totals sweep(std::uint64_t seeds, Make make) {
  Totals t;
  for (std::uint64_t s = 0; s < seeds; ++s) t.add(run(make(s)));
  return t;
}

inline Scenario add(Scenario sc, AdversaryKind k, double p = 0.0, std::uint32_t count = 1) {
  sc.adversaries.push_back({k, p, count});
  if (k == AdversaryKind::downgrade_pusher) sc.releases_per_vendor = std::max<std::uint32_t>(2, sc.releases_per_vendor);
  return sc;
}

}  // namespace detail

/// The adversary catalogue. Each case sweeps several seeds.
inline AttackSuiteResult run_attack_suite() {
  using detail::add;
  using detail::attack_base;
  using detail::sweep;
  AttackSuiteResult out;
  auto push = [&](std::string name, bool pass, std::string summary, const detail::Totals& t) {
    out.cases.push_back({std::move(name), pass, std::move(summary), t.to_json()});
  };

  {
    // 25 runs of 8 devices: at least 200 exchanges under observation.
    auto t = sweep(25, [](auto s) { return add(attack_base(s), AdversaryKind::eavesdrop_and_front_run); });
    push("front-running",
         t.clean() && t.inv.payments >= 200 && t.adv.front_run_attempts >= 200 && t.adv.front_run_successes == 0,
         std::to_string(t.inv.payments) + " exchanges, " + std::to_string(t.adv.front_run_attempts) + " attempts, " +
             std::to_string(t.adv.front_run_successes) + " successes",
         t);
  }
  {
    auto t = sweep(8, [](auto s) { return add(attack_base(s, s % 3), AdversaryKind::double_claimer, 0, 2); });
    push("double-claims", t.clean() && t.adv.double_claim_attempts > 0 && t.inv.double_payments == 0,
         std::to_string(t.adv.double_claim_attempts) + " attempts, " + std::to_string(t.inv.double_payments) +
             " double payments",
         t);
  }
  {
    auto t = sweep(8, [](auto s) {
      return add(add(attack_base(s, 2), AdversaryKind::double_claimer), AdversaryKind::vendor_impersonator);
    });
    auto acceptances = t.inv.unsigned_payments + t.adv.forged_vendor_acceptances + t.adv.impersonator_registrations +
                       t.inv.bad_installs;
    auto attempts = t.adv.forged_signature_claims + t.adv.impersonator_offers + t.adv.bogus_adverts;
    push("forged-signatures", t.clean() && attempts > 0 && acceptances == 0,
         std::to_string(attempts) + " forgeries, " + std::to_string(acceptances) + " acceptances", t);
  }
  {
    auto t = sweep(8, [](auto s) { return add(attack_base(s, s % 2), AdversaryKind::late_claimer); });
    push("expired-claims",
         t.clean() && t.adv.late_claims > 0 && t.inv.expired_payouts == 0 && t.expired_rejections >= t.adv.late_claims,
         std::to_string(t.adv.late_claims) + " late claims, " + std::to_string(t.inv.expired_payouts) +
             " payouts at or after expiration",
         t);
  }
  {
    auto t = sweep(8, [](auto s) { return add(attack_base(s), AdversaryKind::downgrade_pusher); });
    push("downgrade", t.clean() && t.adv.downgrade_attempts > 0 && t.inv.downgrade_installs == 0,
         std::to_string(t.adv.downgrade_attempts) + " pushes, " + std::to_string(t.inv.downgrade_installs) +
             " older installs",
         t);
  }
  {
    auto t = sweep(8, [](auto s) { return add(attack_base(s), AdversaryKind::byte_tamper, s % 2 ? 0.5 : 0.2); });
    auto tampered = t.adv.tampered_messages + t.adv.tampered_transactions + t.adv.tampered_dsn_transfers;
    push("in-transit-tampering", t.clean() && tampered > 0 && t.inv.bad_installs == 0,
         std::to_string(tampered) + " tampered transfers, " + std::to_string(t.inv.bad_installs) + " bad installs", t);
  }
  {
    auto t = sweep(8, [](auto s) { return add(attack_base(s), AdversaryKind::message_drop, 0.3); });
    push("message-drop", t.clean() && t.adv.dropped_messages > 0,
         std::to_string(t.adv.dropped_messages) + " dropped messages, invariants hold", t);
  }
  {
    auto t = sweep(4, [](auto s) { return add(attack_base(s), AdversaryKind::vendor_impersonator); });
    push("vendor-impersonation", t.clean() && t.adv.impersonator_registrations == 0 && t.inv.bad_installs == 0,
         std::to_string(t.adv.impersonator_offers) + " bogus offers, " +
             std::to_string(t.adv.impersonator_registrations) + " registrations",
         t);
  }
  {
    // Accepted limitation: a compromised device is paid for updating itself.
    auto t = sweep(4, [](auto s) { return add(attack_base(s), AdversaryKind::device_self_dealer); });
    push("device-self-dealing (expected to succeed)", t.clean() && t.adv.self_dealt_payments == t.runs,
         std::to_string(t.adv.self_dealt_payments) + " self-dealt payments over " + std::to_string(t.runs) + " runs",
         t);
  }
  {
    auto t = sweep(8, [](auto s) {
      auto sc = attack_base(s);
      for (auto k : kAllAdversaries) sc = add(sc, k, takes_probability(k) ? 0.15 : 0.0);
      return sc;
    });
    push("combined", t.clean(), "all adversaries at once", t);
  }
  return out;
}

}  // namespace podnet::sim
