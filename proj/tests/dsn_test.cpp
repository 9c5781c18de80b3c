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

#include <gtest/gtest.h>

#include "podnet/dsn.hpp"

using namespace podnet;
using namespace podnet::dsn;

namespace {

const NodeId kVendor{0};
const NodeId kD1{1};
const NodeId kD2{2};
const NodeId kD3{3};
const NodeId kDevice{9};

}  // namespace

TEST(Dsn, ProvideIsContentAddressedAndIdempotent) {
  Network net;
  Bytes pkg = {1, 2, 3};
  auto id = net.provide(kVendor, pkg, 0);
  EXPECT_EQ(id, crypto::hash(pkg));
  net.provide(kVendor, pkg, 5);
  ASSERT_NE(net.records(id), nullptr);
  EXPECT_EQ(net.records(id)->size(), 1u);
  EXPECT_EQ(net.records(id)->front().registered_at, 0u);
  EXPECT_EQ(net.provide(kD1, pkg, 6), id);
  EXPECT_EQ(net.lookup(id), (std::vector<NodeId>{kVendor, kD1}));
}

TEST(Dsn, LookupScenarioVendorSeedsThenWithdraws) {
  Network net;
  Bytes pkg(100, 7);
  auto id = net.provide(kVendor, pkg, 0);
  for (auto d : {kD1, kD2, kD3}) net.provide(d, pkg, 1);
  EXPECT_EQ(net.lookup(id).size(), 4u);
  net.unprovide(kVendor, id);
  EXPECT_EQ(net.lookup(id), (std::vector<NodeId>{kD1, kD2, kD3}));
  EXPECT_TRUE(net.lookup(crypto::hash(as_bytes("unknown"))).empty());
  net.unprovide(kVendor, id);  // no-op
  net.unprovide(kD1, crypto::hash(as_bytes("unknown")));
  EXPECT_EQ(net.lookup(id).size(), 3u);
}

TEST(Dsn, LatencyModelArithmetic) {
  Network net(LinkModel{2, 1 << 20, 0.0});
  Bytes mib(1 << 20, 1);
  auto id = net.provide(kD1, mib, 0);
  auto res = net.fetch(kDevice, kD1, id, 10);
  ASSERT_EQ(res.status, FetchStatus::delivered);
  EXPECT_EQ(res.ready_at, 13u);
  EXPECT_EQ(*res.bytes, mib);
  EXPECT_EQ((LinkModel{2, 100, 0}.transfer_time(101)), 4u);
  EXPECT_EQ((LinkModel{2, 100, 0}.transfer_time(0)), 2u);
}

TEST(Dsn, DepartedProviderFallsBackToNext) {
  Network net;
  Bytes pkg(64, 3);
  auto id = net.provide(kD1, pkg, 0);
  net.provide(kD2, pkg, 0);
  net.depart(kD1);
  EXPECT_EQ(net.fetch(kDevice, kD1, id, 0).status, FetchStatus::provider_unavailable);
  std::vector<NodeId> order{kD1, kD2};
  auto res = fetch_any(net, kDevice, id, 0, order);
  EXPECT_EQ(res.status, FetchStatus::delivered);
  EXPECT_EQ(net.lookup(id), (std::vector<NodeId>{kD2}));
  net.rejoin(kD1);
  EXPECT_EQ(net.lookup(id).size(), 2u);
}

TEST(Dsn, TamperedTransferFailsIntegrityCheck) {
  Network net;
  Bytes pkg(64, 3);
  auto id = net.provide(kD1, pkg, 0);
  net.set_transit_hook([](NodeId, NodeId, const ContentId&, Bytes& b) { b[10] ^= 0x01; });
  auto res = net.fetch(kDevice, kD1, id, 0);
  EXPECT_EQ(res.status, FetchStatus::integrity_failure);
  EXPECT_EQ(res.bytes, nullptr);
  // The stored copy is untouched.
  EXPECT_EQ(*net.stored(kD1, id), pkg);
}

TEST(Dsn, BogusAdvertisementDetectedOnFetch) {
  Network net;
  Bytes real(32, 1);
  auto id = crypto::hash(real);
  net.advertise(kD3, id, std::make_shared<const Bytes>(Bytes(32, 2)), 0);
  net.provide(kD1, real, 1);
  std::vector<NodeId> providers = net.lookup(id);
  ASSERT_EQ(providers.front(), kD3);
  EXPECT_EQ(net.fetch(kDevice, kD3, id, 0).status, FetchStatus::integrity_failure);
  EXPECT_EQ(fetch_any(net, kDevice, id, 0, providers).status, FetchStatus::delivered);
}

TEST(Dsn, AvailabilityWithOneHonestProvider) {
  // Property: any mix of departed and lying providers still yields the content
  // if at least one honest live provider is registered.
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    Network net(LinkModel{1, 16, 0.0});
    Bytes content = random_bytes(rng, 1 + rng() % 64);
    auto id = crypto::hash(content);
    int n = 1 + static_cast<int>(rng() % 6);
    int honest = static_cast<int>(rng() % n);
    for (int i = 0; i < n; ++i) {
      NodeId node{static_cast<std::uint32_t>(i + 1)};
      if (i == honest) {
        net.provide(node, content, 0);
      } else if (rng() % 2) {
        net.advertise(node, id, std::make_shared<const Bytes>(random_bytes(rng, 8)), 0);
      } else {
        net.provide(node, content, 0);
        net.depart(node);
      }
    }
    auto providers = net.lookup(id);
    auto res = fetch_any(net, kDevice, id, 0, providers);
    ASSERT_EQ(res.status, FetchStatus::delivered);
    ASSERT_EQ(crypto::hash(*res.bytes), id);
    ASSERT_LE(res.ready_at, providers.size() * (LinkModel{1, 16, 0.0}.transfer_time(64)));
  }
}

TEST(Dsn, DropsAreDeterministicPerSeed) {
  auto run = [](std::uint64_t seed) {
    Network net(LinkModel{1, 1024, 0.5}, seed);
    auto id = net.provide(kD1, Bytes(10, 1), 0);
    std::vector<int> outcomes;
    for (int i = 0; i < 64; ++i) outcomes.push_back(static_cast<int>(net.fetch(kDevice, kD1, id, i).status));
    return outcomes;
  };
  EXPECT_EQ(run(5), run(5));
  auto o = run(5);
  EXPECT_GT(std::count(o.begin(), o.end(), static_cast<int>(FetchStatus::dropped)), 0);
  EXPECT_GT(std::count(o.begin(), o.end(), static_cast<int>(FetchStatus::delivered)), 0);
}
