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

#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "podnet/sim.hpp"

using namespace podnet;
using namespace podnet::sim;

namespace {

Scenario small(std::uint64_t seed = 1) {
  Scenario sc;
  sc.seed = seed;
  sc.distributors = 3;
  sc.devices_per_vendor = 6;
  sc.deposit = 600;
  sc.update_size = 256;
  sc.refund_window = 200;
  return sc;
}

Scenario with(Scenario sc, AdversaryKind kind, double p = 0.0, std::uint32_t count = 1) {
  sc.adversaries.push_back({kind, p, count});
  if (kind == AdversaryKind::downgrade_pusher) sc.releases_per_vendor = std::max<std::uint32_t>(2, sc.releases_per_vendor);
  return sc;
}

void expect_clean(const RunResult& r) {
  EXPECT_TRUE(r.invariants.ok()) << r.invariants.to_json().dump(2);
  EXPECT_EQ(r.secrecy_violations, 0u);
  EXPECT_EQ(r.supply_violations, 0u);
}

}  // namespace

TEST(Scenario, RejectsUnknownKeysAndKinds) {
  EXPECT_THROW(Scenario::from_json({{"vendorz", 1}}), ScenarioError);
  EXPECT_THROW(Scenario::from_json({{"adversaries", {{{"kind", "time-traveller"}}}}}), ScenarioError);
  EXPECT_THROW(Scenario::from_json({{"adversaries", {{{"kind", "message-drop"}}}}}), ScenarioError);
  EXPECT_THROW(Scenario::from_json({{"adversaries", {{{"kind", "message-drop"}, {"p", 1.5}}}}}), ScenarioError);
  EXPECT_THROW(Scenario::from_json({{"adversaries", {{{"kind", "downgrade-pusher"}}}}}), ScenarioError);
  EXPECT_THROW(Scenario::from_json({{"deposit", -1}}), ScenarioError);
  EXPECT_THROW(Scenario::from_json({{"block_interval", 0}}), ScenarioError);
  EXPECT_THROW(Scenario::from_json(nlohmann::json::array()), ScenarioError);
}

TEST(Scenario, JsonRoundTrip) {
  auto sc = with(with(small(), AdversaryKind::message_drop, 0.25), AdversaryKind::double_claimer, 0, 2);
  sc.link.drop_probability = 0.125;
  auto back = Scenario::from_json(sc.to_json());
  EXPECT_EQ(back.to_json(), sc.to_json());
  EXPECT_EQ(back.count(AdversaryKind::double_claimer), 2u);
  EXPECT_DOUBLE_EQ(back.probability(AdversaryKind::message_drop), 0.25);
}

TEST(Sim, HonestRunReachesFullCoverage) {
  auto r = run(small());
  expect_clean(r);
  EXPECT_EQ(r.devices_covered, 6u);
  EXPECT_EQ(r.payments, 6u);
  EXPECT_EQ(r.metrics["payments"]["total"], 600u);
  EXPECT_EQ(r.metrics["refund"], 0u);
  EXPECT_EQ(r.audit.size(), r.metrics["devices_updated"].get<std::size_t>());
  EXPECT_FALSE(r.metrics["ticks_to_full_coverage"].is_null());
  for (const auto& row : r.audit) {
    EXPECT_EQ(row["payment"], 100u);
    EXPECT_EQ(row["payee"], row["served_by"]);
  }
}

TEST(Sim, DivisibleScenarioPaysEqualShares) {
  Scenario sc = small(4);
  sc.distributors = 10;
  sc.devices_per_vendor = 1000;
  sc.deposit = 100000;
  sc.update_size = 128;
  auto r = run(sc);
  expect_clean(r);
  EXPECT_EQ(r.metrics["devices_updated"], 1000u);
  EXPECT_EQ(r.metrics["refund"], 0u);
  for (const auto& row : r.audit) ASSERT_EQ(row["payment"], 100u);
}

TEST(Sim, NoDistributorsMeansFullRefund) {
  Scenario sc = small(2);
  sc.distributors = 0;
  auto r = run(sc);
  expect_clean(r);
  EXPECT_EQ(r.metrics["devices_updated"], 0u);
  EXPECT_EQ(r.metrics["refund"], sc.deposit);
  EXPECT_TRUE(r.audit.empty());
}

TEST(Sim, SameSeedSameLog) {
  auto sc = with(with(small(9), AdversaryKind::message_drop, 0.2), AdversaryKind::eavesdrop_and_front_run);
  auto a = run(sc);
  auto b = run(sc);
  EXPECT_EQ(a.log.dump(), b.log.dump());
  EXPECT_EQ(a.metrics.dump(), b.metrics.dump());
  sc.seed = 10;
  EXPECT_NE(run(sc).transcript_digest, a.transcript_digest);
}

TEST(Sim, NonDivisibleDepositConserved) {
  Scenario sc = small(3);
  sc.devices_per_vendor = 3;
  sc.deposit = 100;
  auto r = run(sc);
  expect_clean(r);
  std::vector<Coins> paid;
  for (const auto& row : r.audit) paid.push_back(row["payment"]);
  std::sort(paid.begin(), paid.end());
  EXPECT_EQ(paid, (std::vector<Coins>{33, 33, 34}));
}

TEST(Sim, MessageDropKeepsInvariants) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto r = run(with(small(seed), AdversaryKind::message_drop, 0.3));
    expect_clean(r);
    EXPECT_GT(r.adversary.dropped_messages, 0u);
  }
}

TEST(Sim, ByteTamperNeverInstallsBadBytes) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto r = run(with(small(seed), AdversaryKind::byte_tamper, 0.2));
    expect_clean(r);
    EXPECT_EQ(r.invariants.bad_installs, 0u);
  }
}

TEST(Sim, FrontRunnerNeverPaid) {
  auto r = run(with(small(5), AdversaryKind::eavesdrop_and_front_run));
  expect_clean(r);
  EXPECT_GE(r.adversary.front_run_attempts, 4u * 6u);
  EXPECT_EQ(r.adversary.front_run_successes, 0u);
  EXPECT_EQ(r.devices_covered, 6u);
}

TEST(Sim, ImpersonatorGainsNothing) {
  auto r = run(with(small(6), AdversaryKind::vendor_impersonator));
  expect_clean(r);
  EXPECT_GT(r.adversary.impersonator_offers + r.adversary.bogus_adverts, 0u);
  EXPECT_EQ(r.adversary.impersonator_registrations, 0u);
  EXPECT_EQ(r.adversary.forged_vendor_acceptances, 0u);
  EXPECT_EQ(r.invariants.bad_installs, 0u);
  EXPECT_EQ(r.devices_covered, 6u);
}

TEST(Sim, DoubleClaimerPaidOncePerDevice) {
  auto sc = small(7);
  sc.distributors = 0;
  auto r = run(with(sc, AdversaryKind::double_claimer));
  expect_clean(r);
  EXPECT_GT(r.adversary.double_claim_attempts, 0u);
  EXPECT_GT(r.adversary.forged_signature_claims, 0u);
  EXPECT_EQ(r.invariants.double_payments, 0u);
  EXPECT_EQ(r.invariants.unsigned_payments, 0u);
  EXPECT_GT(r.metrics["rejected_claims"]["already-claimed"].get<int>(), 0);
}

TEST(Sim, LateClaimerNeverPaid) {
  auto sc = small(8);
  sc.distributors = 0;
  auto r = run(with(sc, AdversaryKind::late_claimer));
  expect_clean(r);
  EXPECT_GT(r.adversary.late_claims, 0u);
  EXPECT_EQ(r.payments, 0u);
  EXPECT_EQ(r.metrics["rejected_claims"]["expired"].get<std::uint64_t>(), r.adversary.late_claims);
  EXPECT_EQ(r.metrics["refund"], sc.deposit);
}

TEST(Sim, DowngradePusherNeverInstallsOlder) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto r = run(with(small(seed), AdversaryKind::downgrade_pusher));
    expect_clean(r);
    EXPECT_GT(r.adversary.downgrade_attempts, 0u);
    EXPECT_EQ(r.invariants.downgrade_installs, 0u);
  }
}

TEST(Sim, SelfDealingDeviceCollectsOwnPayment) {
  auto r = run(with(small(11), AdversaryKind::device_self_dealer));
  expect_clean(r);
  EXPECT_EQ(r.adversary.self_dealt_payments, 1u);
  EXPECT_EQ(r.devices_covered, 6u);
}

TEST(Sim, AllAdversariesTogether) {
  auto sc = small(12);
  for (auto k : kAllAdversaries) sc = with(sc, k, takes_probability(k) ? 0.1 : 0.0);
  auto r = run(sc);
  expect_clean(r);
}

TEST(Replay, RecordedRunVerifies) {
  auto sc = with(small(5), AdversaryKind::eavesdrop_and_front_run);
  auto r = run(sc);
  auto rep = replay(r.log);
  EXPECT_TRUE(rep.ledger_matches);
  EXPECT_TRUE(rep.invariants_ok);
  EXPECT_TRUE(rep.deterministic);
  EXPECT_TRUE(rep.ok()) << rep.to_json().dump();
}

TEST(Replay, SurvivesDiskRoundTrip) {
  auto r = run(small(9));
  auto dir = std::filesystem::temp_directory_path() / "podnet_replay_test";
  std::filesystem::remove_all(dir);
  write_run(r, dir);
  for (auto f : {"metrics.json", "audit.json", "ledger.json", "run.json"}) EXPECT_TRUE(std::filesystem::exists(dir / f));
  EXPECT_TRUE(replay(read_json(dir / "run.json")).ok());
  std::filesystem::remove_all(dir);
}

TEST(Replay, DetectsEditedLedger) {
  auto r = run(small(3));
  auto log = r.log;
  // Move one coin in the recorded balances: re-execution disagrees.
  auto& accounts = log["ledger"]["accounts"];
  auto it = accounts.begin();
  it.value() = it.value().get<std::uint64_t>() + 1;
  auto rep = replay(log, false);
  EXPECT_FALSE(rep.ledger_matches);
  EXPECT_FALSE(rep.ok());
}

TEST(Replay, DetectsForgedInstallRecord) {
  auto r = run(small(4));
  auto log = r.log;
  ASSERT_FALSE(log["installs"].empty());
  log["installs"].push_back(log["installs"][0]);  // a second install of the same release
  auto rep = replay(log, false);
  EXPECT_TRUE(rep.ledger_matches);
  EXPECT_FALSE(rep.invariants_ok);
}

TEST(Replay, DetectsEditedScenario) {
  auto r = run(small(6));
  auto log = r.log;
  log["scenario"]["deposit"] = log["scenario"]["deposit"].get<std::uint64_t>() + 6;
  auto rep = replay(log);
  EXPECT_FALSE(rep.deterministic);
}

TEST(Schedule, RandomSchedulesValidateAndHold) {
  std::set<std::string> seen;
  for (std::uint64_t s = 0; s < 40; ++s) {
    auto sc = random_schedule(s);
    EXPECT_NO_THROW(sc.validate());
    for (const auto& a : sc.adversaries) seen.insert(std::string(to_string(a.kind)));
    expect_clean(run(sc));
  }
  EXPECT_EQ(seen.size(), kAllAdversaries.size());
  EXPECT_EQ(random_schedule(17).to_json(), random_schedule(17).to_json());
}
