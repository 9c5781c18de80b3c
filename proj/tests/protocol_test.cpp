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

#include "podnet/protocol.hpp"
#include "test_util.hpp"

using namespace podnet;
using namespace podnet::protocol;
using podnet::testing::key;

namespace {

// One vendor, two distributors, four devices, deposit 100.
struct World {
  crypto::SimulatedProofBackend backend{7};
  ledger::Ledger ledger;
  dsn::Network net;
  Rng rng{42};
  std::vector<crypto::KeyPair> device_keys;
  Vendor vendor;
  std::vector<Distributor> dists;
  std::vector<Device> devices;
  Tick now = 0;

  explicit World(ledger::Coins vendor_balance = 1000)
      : ledger({{address_of("vendor"), vendor_balance}}),
        device_keys(make_keys()),
        vendor(key("vendor"), dsn::NodeId{0}, public_keys()) {
    contract::BidContract::register_with(ledger);
    std::set<PublicKey> trusted{key("vendor").public_key()};
    for (std::uint32_t i = 0; i < 2; ++i) {
      dists.emplace_back(key("dist-" + std::to_string(i)), dsn::NodeId{1 + i}, trusted, backend);
    }
    for (std::uint32_t i = 0; i < device_keys.size(); ++i) {
      devices.emplace_back(device_keys[i], dsn::NodeId{10 + i}, key("vendor").public_key());
    }
  }

  static Address address_of(const std::string& label) { return ledger::address_of(key(label).public_key()); }

  static std::vector<crypto::KeyPair> make_keys() {
    std::vector<crypto::KeyPair> out;
    for (int i = 0; i < 4; ++i) out.push_back(key("device-" + std::to_string(i)));
    return out;
  }

  std::vector<PublicKey> public_keys() const {
    std::vector<PublicKey> out;
    for (int i = 0; i < 4; ++i) out.push_back(key("device-" + std::to_string(i)).public_key());
    return out;
  }

  void seal() { ledger.seal(++now); }

  Release release(const std::string& firmware = "firmware v1", Tick window = 100) {
    auto r = vendor.release_update({as_vector(firmware), public_keys(), 100, window}, ledger, net, backend, rng, now);
    seal();
    return r;
  }

  ContractView view(const Release& r) const { return *ContractView::read(ledger, r.contract); }

  void acquire(Distributor& d, const Release& r) {
    auto v = view(r);
    auto fetched = dsn::fetch_any(net, d.node(), v.p_id, now, net.lookup(v.p_id));
    ASSERT_EQ(fetched.status, dsn::FetchStatus::delivered);
    ASSERT_EQ(d.accept_package(v, *fetched.bytes, net, now), AcquireStatus::stored);
  }

  static Bytes as_vector(std::string_view s) {
    auto v = as_bytes(s);
    return {v.begin(), v.end()};
  }

  std::vector<contract::KeyRevealed> revealed() const {
    std::vector<contract::KeyRevealed> out;
    for (const auto& e : ledger.events()) {
      if (auto k = contract::KeyRevealed::from(e)) out.push_back(*k);
    }
    return out;
  }
};

}  // namespace

TEST(Package, BuildParseRoundTrip) {
  crypto::SimulatedProofBackend backend(1);
  Rng rng(1);
  auto vendor = key("vendor");
  Bytes update{1, 2, 3, 4};
  auto setup = backend.setup(crypto::hash(update), rng);
  auto pkg = UpdatePackage::build(vendor, update, setup.keys);
  EXPECT_EQ(pkg.u_id, crypto::hash(update));
  auto bytes = pkg.serialize();
  EXPECT_EQ(pkg.p_id, crypto::hash(bytes));
  auto parsed = UpdatePackage::parse(bytes);
  ASSERT_TRUE(parsed);
  EXPECT_EQ(parsed->p_id, pkg.p_id);
  EXPECT_EQ(parsed->verifying_key, pkg.verifying_key);
  EXPECT_TRUE(verify_package(*parsed, vendor.public_key()));
  EXPECT_FALSE(verify_package(*parsed, key("other").public_key()));
  parsed->vendor_sig[0] ^= 1;
  EXPECT_FALSE(verify_package(*parsed, vendor.public_key()));
  bytes.pop_back();
  EXPECT_FALSE(UpdatePackage::parse(bytes));
}

TEST(Messages, EncodeDecodeRoundTrip) {
  Rng rng(3);
  Address c = Address::random(rng);
  std::vector<Message> msgs{
      UpdateRequest{c},
      Challenge{c, crypto::Nonce16::random(rng)},
      ChallengeResponse{c, key("x").public_key(), random_bytes(rng, 64)},
      Offer{c, random_bytes(rng, 40), Digest::random(rng), crypto::Proof{random_bytes(rng, 128)},
            random_bytes(rng, 50), random_bytes(rng, 64)},
      PodSignature{c, random_bytes(rng, 64)},
  };
  for (const auto& m : msgs) {
    auto bytes = encode(m);
    auto back = decode(bytes);
    ASSERT_TRUE(back) << type_name(m);
    EXPECT_EQ(encode(*back), bytes);
    EXPECT_EQ(back->index(), m.index());
    EXPECT_EQ(contract_of(*back), c);
    bytes.push_back(0);
    EXPECT_FALSE(decode(bytes)) << type_name(m);
  }
  EXPECT_FALSE(decode(Bytes{0, 0, 0}));
}

TEST(Protocol, HonestExchangeInstallsAndPays) {
  World w;
  auto rel = w.release();
  EXPECT_EQ(w.net.lookup(rel.package.p_id), (std::vector<dsn::NodeId>{w.vendor.node()}));
  w.acquire(w.dists[0], rel);
  EXPECT_EQ(w.net.lookup(rel.package.u_id), (std::vector<dsn::NodeId>{w.dists[0].node()}));

  auto res = run_exchange(w.dists[0], w.devices[0], w.view(rel), w.backend, w.rng, w.now);
  ASSERT_TRUE(res.delivered()) << res.stage;
  EXPECT_EQ(res.transcript.size(), 5u);
  EXPECT_EQ(w.dists[0].session(w.devices[0].node(), rel.contract)->state, SessionState::signature_received);
  EXPECT_TRUE(w.devices[0].has_signed(rel.contract));

  auto sub = w.dists[0].claim(w.ledger, rel.contract, *res.tuple);
  ASSERT_TRUE(sub.accepted());
  w.seal();
  const auto* receipt = w.ledger.receipt(sub.id);
  ASSERT_NE(receipt, nullptr);
  EXPECT_EQ(receipt->outcome, contract::kPaid);
  EXPECT_EQ(receipt->amount, 25u);
  EXPECT_EQ(w.ledger.balance(w.dists[0].address()), 25u);

  auto revealed = w.revealed();
  ASSERT_EQ(revealed.size(), 1u);
  EXPECT_EQ(w.devices[1].on_key_revealed(revealed[0], w.view(rel)), InstallResult::other_device);
  EXPECT_EQ(w.devices[0].on_key_revealed(revealed[0], w.view(rel)), InstallResult::installed);
  EXPECT_EQ(w.devices[0].installed_update(), World::as_vector("firmware v1"));
  EXPECT_EQ(w.devices[0].installed_version(), w.view(rel).deploy_height);
  EXPECT_EQ(w.devices[0].on_key_revealed(revealed[0], w.view(rel)), InstallResult::no_pending);
}

TEST(Protocol, WitnessNeverCrossesTheWireBeforeRedeem) {
  World w;
  auto rel = w.release();
  w.acquire(w.dists[0], rel);
  std::vector<WitnessRecord> witnesses;
  w.dists[0].witness_observer = [&](const WitnessRecord& r) { witnesses.push_back(r); };
  auto res = run_exchange(w.dists[0], w.devices[2], w.view(rel), w.backend, w.rng, w.now);
  ASSERT_TRUE(res.delivered());
  ASSERT_EQ(witnesses.size(), 1u);
  for (const auto& m : res.transcript) {
    EXPECT_FALSE(contains(m.payload, witnesses[0].r.view())) << m.type;
    EXPECT_FALSE(contains(m.payload, witnesses[0].t.view())) << m.type;
  }
}

TEST(Protocol, ProverRefusesFalseStatement) {
  World w;
  auto rel = w.release();
  Digest r = crypto::hash(as_bytes("witness"));
  Digest s = crypto::hash(r.view());
  Bytes junk(32, 0xee);
  EXPECT_THROW(w.backend.prove(rel.package.proof_keys(), junk, s, rel.package.u_id, r), crypto::ProvingError);
}

TEST(Protocol, JunkProofMakesDeviceAbort) {
  World w;
  auto rel = w.release();
  w.acquire(w.dists[0], rel);
  Rng junk(5);
  auto res = run_exchange(w.dists[0], w.devices[0], w.view(rel), w.backend, w.rng, w.now, [&](WireRecord& m) {
    if (m.type != "offer") return true;
    auto offer = std::get<Offer>(*decode(m.payload));
    offer.proof.bytes = random_bytes(junk, crypto::Proof::kSize);
    m.payload = encode(offer);
    return true;
  });
  EXPECT_FALSE(res.delivered());
  EXPECT_EQ(res.aborted, AbortReason::bad_proof);
  EXPECT_FALSE(w.devices[0].has_signed(rel.contract));
  EXPECT_EQ(w.devices[0].session(rel.contract, w.dists[0].node())->state, SessionState::aborted);
}

TEST(Protocol, SwappedCiphertextFailsProof) {
  World w;
  auto rel = w.release();
  w.acquire(w.dists[0], rel);
  auto res = run_exchange(w.dists[0], w.devices[0], w.view(rel), w.backend, w.rng, w.now, [&](WireRecord& m) {
    if (m.type != "offer") return true;
    auto offer = std::get<Offer>(*decode(m.payload));
    offer.ciphertext[0] ^= 1;
    m.payload = encode(offer);
    return true;
  });
  EXPECT_EQ(res.aborted, AbortReason::bad_proof);
}

TEST(Protocol, ForgedVendorSignatureRejected) {
  World w;
  auto rel = w.release();
  w.acquire(w.dists[0], rel);
  auto res = run_exchange(w.dists[0], w.devices[0], w.view(rel), w.backend, w.rng, w.now, [&](WireRecord& m) {
    if (m.type != "offer") return true;
    auto offer = std::get<Offer>(*decode(m.payload));
    offer.vendor_sig = key("impostor").sign(vendor_message(rel.package.u_id, offer.verifying_key)).to_vector();
    m.payload = encode(offer);
    return true;
  });
  EXPECT_EQ(res.aborted, AbortReason::bad_vendor_sig);
  EXPECT_FALSE(w.devices[0].has_signed(rel.contract));
}

TEST(Protocol, NonMemberDeviceRefused) {
  World w;
  auto rel = w.release();
  w.acquire(w.dists[0], rel);
  Device outsider(key("outsider"), dsn::NodeId{99}, key("vendor").public_key());
  std::array<dsn::NodeId, 1> providers{w.dists[0].node()};
  auto req = outsider.request_update(w.view(rel), providers, 0, w.now);
  ASSERT_TRUE(std::holds_alternative<RequestRefusal>(req));
  EXPECT_EQ(std::get<RequestRefusal>(req), RequestRefusal::not_member);

  // Talking to the distributor directly does not help.
  auto ch = w.dists[0].on_request(outsider.node(), UpdateRequest{rel.contract}, w.rng, w.now);
  ASSERT_TRUE(ch);
  ChallengeResponse resp{rel.contract, outsider.public_key(), outsider.key().sign(ch->c.view()).to_vector()};
  auto step = w.dists[0].on_response(outsider.node(), resp, w.view(rel), w.rng);
  EXPECT_EQ(std::get<AbortReason>(step), AbortReason::non_member_device);
}

TEST(Protocol, ReplayedChallengeResponseRejected) {
  World w;
  auto rel = w.release();
  w.acquire(w.dists[0], rel);
  auto& d = w.dists[0];
  auto& o = w.devices[0];
  auto first = d.on_request(o.node(), UpdateRequest{rel.contract}, w.rng, w.now);
  ChallengeResponse old{rel.contract, o.public_key(), o.key().sign(first->c.view()).to_vector()};
  auto second = d.on_request(o.node(), UpdateRequest{rel.contract}, w.rng, w.now);
  ASSERT_NE(first->c, second->c);
  auto step = d.on_response(o.node(), old, w.view(rel), w.rng);
  EXPECT_EQ(std::get<AbortReason>(step), AbortReason::bad_device_sig);
  // A response arriving without a live challenge is unexpected.
  EXPECT_EQ(std::get<AbortReason>(d.on_response(o.node(), old, w.view(rel), w.rng)), AbortReason::unexpected_message);
}

TEST(Protocol, DowngradeRefused) {
  World w;
  auto v1 = w.release("firmware v1");
  auto v2 = w.release("firmware v2");
  for (const auto* rel : {&v1, &v2}) w.acquire(w.dists[0], *rel);

  auto res2 = run_exchange(w.dists[0], w.devices[0], w.view(v2), w.backend, w.rng, w.now);
  ASSERT_TRUE(res2.delivered());
  w.dists[0].claim(w.ledger, v2.contract, *res2.tuple);
  w.seal();
  ASSERT_EQ(w.devices[0].on_key_revealed(w.revealed().back(), w.view(v2)), InstallResult::installed);

  std::array<dsn::NodeId, 1> providers{w.dists[0].node()};
  auto req = w.devices[0].request_update(w.view(v1), providers, 0, w.now);
  EXPECT_EQ(std::get<RequestRefusal>(req), RequestRefusal::downgrade);

  // Older release completed out of order: the key is accepted but not installed.
  auto& late = w.devices[1];
  auto r1 = run_exchange(w.dists[0], late, w.view(v1), w.backend, w.rng, w.now);
  auto r2 = run_exchange(w.dists[0], late, w.view(v2), w.backend, w.rng, w.now);
  ASSERT_TRUE(r1.delivered() && r2.delivered());
  w.dists[0].claim(w.ledger, v1.contract, *r1.tuple);
  w.dists[0].claim(w.ledger, v2.contract, *r2.tuple);
  w.seal();
  auto ev = w.revealed();
  ASSERT_EQ(ev.size(), 3u);
  EXPECT_EQ(late.on_key_revealed(ev[2], w.view(v2)), InstallResult::installed);
  EXPECT_EQ(late.on_key_revealed(ev[1], w.view(v1)), InstallResult::downgrade);
  EXPECT_EQ(late.installed_update(), World::as_vector("firmware v2"));
}

TEST(Protocol, NoProvidersThenRetrySucceeds) {
  World w;
  auto rel = w.release();
  auto& o = w.devices[3];
  auto providers = w.net.lookup(rel.package.u_id);
  EXPECT_EQ(std::get<RequestRefusal>(o.request_update(w.view(rel), providers, 0, w.now)),
            RequestRefusal::no_providers);
  w.acquire(w.dists[1], rel);
  providers = w.net.lookup(rel.package.u_id);
  auto req = o.request_update(w.view(rel), providers, 0, w.now);
  ASSERT_TRUE(std::holds_alternative<Device::Request>(req));
  EXPECT_EQ(std::get<Device::Request>(req).provider, w.dists[1].node());
  auto res = run_exchange(w.dists[1], o, w.view(rel), w.backend, w.rng, w.now);
  EXPECT_TRUE(res.delivered());
}

TEST(Protocol, DeviceSignsAtMostOncePerContract) {
  World w;
  auto rel = w.release();
  w.acquire(w.dists[0], rel);
  w.acquire(w.dists[1], rel);
  ASSERT_TRUE(run_exchange(w.dists[0], w.devices[0], w.view(rel), w.backend, w.rng, w.now).delivered());
  auto second = run_exchange(w.dists[1], w.devices[0], w.view(rel), w.backend, w.rng, w.now);
  EXPECT_FALSE(second.delivered());
  EXPECT_EQ(second.stage, "update-request");
  std::array<dsn::NodeId, 1> providers{w.dists[1].node()};
  EXPECT_EQ(std::get<RequestRefusal>(w.devices[0].request_update(w.view(rel), providers, 0, w.now)),
            RequestRefusal::already_signed);
}

TEST(Protocol, SameBlockClaimantsOnlyFirstPaid) {
  World w;
  auto rel = w.release();
  w.acquire(w.dists[0], rel);
  auto res = run_exchange(w.dists[0], w.devices[0], w.view(rel), w.backend, w.rng, w.now);
  ASSERT_TRUE(res.delivered());
  // The thief is ordered first; the binding check rejects it before the
  // honest claim lands. Later copies hit the already-claimed guard.
  auto copy = *res.tuple;
  copy.distributor = w.dists[1].address();
  auto thief = w.dists[1].claim(w.ledger, rel.contract, copy);
  auto honest = w.dists[0].claim(w.ledger, rel.contract, *res.tuple);
  auto again = w.dists[0].claim(w.ledger, rel.contract, *res.tuple);
  w.seal();
  EXPECT_EQ(w.ledger.receipt(honest.id)->outcome, contract::kPaid);
  EXPECT_EQ(w.ledger.receipt(thief.id)->outcome, "r-mismatch");
  EXPECT_EQ(w.ledger.receipt(again.id)->outcome, "already-claimed");
  EXPECT_EQ(w.ledger.balance(w.dists[0].address()), 25u);
  EXPECT_EQ(w.ledger.balance(w.dists[1].address()), 0u);
}

TEST(Protocol, ExpiredClaimRejectedAndRefunded) {
  World w;
  auto rel = w.release("fw", 5);
  w.acquire(w.dists[0], rel);
  auto res = run_exchange(w.dists[0], w.devices[0], w.view(rel), w.backend, w.rng, w.now);
  ASSERT_TRUE(res.delivered());
  w.now = rel.expiration;
  auto claim = w.dists[0].claim(w.ledger, rel.contract, *res.tuple);
  w.ledger.seal(rel.expiration);
  EXPECT_EQ(w.ledger.receipt(claim.id)->outcome, "expired");
  auto wd = w.vendor.withdraw(w.ledger, rel.contract);
  w.seal();
  EXPECT_EQ(w.ledger.receipt(wd.id)->amount, 100u);
  EXPECT_EQ(w.ledger.balance(w.vendor.address()), 1000u);
  EXPECT_EQ(w.ledger.balance(rel.contract), 0u);
}

TEST(Protocol, VendorForgedOfferGetsSignatureButInstallFails) {
  // The trapdoor holder can mint an accepting proof for a junk ciphertext.
  World w;
  auto rel = w.release();
  auto& o = w.devices[0];
  dsn::NodeId fake{50};
  std::array<dsn::NodeId, 1> providers{fake};
  ASSERT_TRUE(std::holds_alternative<Device::Request>(o.request_update(w.view(rel), providers, 0, w.now)));
  auto resp = o.on_challenge(fake, Challenge{rel.contract, crypto::Nonce16::random(w.rng)});
  ASSERT_TRUE(resp);
  Digest r = crypto::hash(as_bytes("vendor-chosen"));
  Digest s = crypto::hash(r.view());
  Bytes junk(40, 0x11);
  auto proof = w.backend.forge(rel.trapdoor, {crypto::hash(junk), s, rel.package.u_id});
  Offer offer{rel.contract, junk, s, proof, rel.package.verifying_key, rel.package.vendor_sig};
  auto step = o.on_offer(fake, offer, w.view(rel), w.backend);
  ASSERT_TRUE(std::holds_alternative<PodSignature>(step));
  contract::KeyRevealed ev{rel.contract, o.public_key(), r, 0};
  EXPECT_EQ(o.on_key_revealed(ev, w.view(rel)), InstallResult::hash_mismatch);
  ev.r = crypto::hash(as_bytes("other"));
  EXPECT_EQ(o.on_key_revealed(ev, w.view(rel)), InstallResult::binding_mismatch);
}

TEST(Distributor, PackageAcquisitionChecks) {
  World w;
  auto rel = w.release();
  auto v = w.view(rel);
  Bytes good = rel.package.serialize();

  Distributor untrusting(key("dist-x"), dsn::NodeId{7}, {}, w.backend);
  EXPECT_EQ(untrusting.accept_package(v, good, w.net, w.now), AcquireStatus::untrusted_vendor);

  Bytes tampered = good;
  tampered[tampered.size() / 2] ^= 1;
  EXPECT_EQ(w.dists[0].accept_package(v, tampered, w.net, w.now), AcquireStatus::hash_mismatch);

  // A package whose signature does not verify, referenced by a consistent view.
  auto bad = rel.package;
  bad.vendor_sig = key("impostor").sign(vendor_message(bad.u_id, bad.verifying_key)).to_vector();
  Bytes bad_bytes = bad.serialize();
  auto bad_view = v;
  bad_view.p_id = crypto::hash(bad_bytes);
  EXPECT_EQ(w.dists[0].accept_package(bad_view, bad_bytes, w.net, w.now), AcquireStatus::bad_vendor_sig);
  EXPECT_FALSE(w.dists[0].serving(rel.contract));
  EXPECT_TRUE(w.net.lookup(rel.package.u_id).empty());

  EXPECT_EQ(w.dists[0].accept_package(v, good, w.net, w.now), AcquireStatus::stored);
  EXPECT_TRUE(w.dists[0].serving(rel.contract));
}

TEST(Distributor, RedeemByIndex) {
  World w;
  std::set<PublicKey> trusted{key("vendor").public_key()};
  Distributor d(key("dist-idx"), dsn::NodeId{5}, trusted, w.backend, {.redeem_by_index = true});
  auto rel = w.release();
  w.acquire(d, rel);
  auto res = run_exchange(d, w.devices[2], w.view(rel), w.backend, w.rng, w.now);
  ASSERT_TRUE(res.delivered());
  EXPECT_EQ(std::get<std::uint32_t>(res.tuple->device), 2u);
  auto sub = d.claim(w.ledger, rel.contract, *res.tuple);
  w.seal();
  EXPECT_EQ(w.ledger.receipt(sub.id)->outcome, contract::kPaid);
}

TEST(Vendor, ReleaseFailuresLeaveNoTrace) {
  World w(50);
  EXPECT_THROW(w.vendor.release_update({{}, w.public_keys(), 10, 10}, w.ledger, w.net, w.backend, w.rng, 0),
               ReleaseError);
  EXPECT_THROW(w.vendor.release_update({{1}, w.public_keys(), 100, 10}, w.ledger, w.net, w.backend, w.rng, 0),
               ReleaseError);
  EXPECT_THROW(w.vendor.release_update({{1}, {key("stranger").public_key()}, 10, 10}, w.ledger, w.net, w.backend,
                                       w.rng, 0),
               ReleaseError);
  EXPECT_TRUE(w.ledger.pending().empty());
  EXPECT_EQ(w.net.lookup(crypto::hash(Bytes{1})).size(), 0u);
  EXPECT_EQ(w.net.bytes_transferred(), 0u);
}

TEST(Protocol, DroppedMessageAbortsWithDisconnect) {
  World w;
  auto rel = w.release();
  w.acquire(w.dists[0], rel);
  auto res = run_exchange(w.dists[0], w.devices[0], w.view(rel), w.backend, w.rng, w.now,
                          [](WireRecord& m) { return m.type != "pod-signature"; });
  EXPECT_EQ(res.aborted, AbortReason::peer_disconnect);
  EXPECT_EQ(res.stage, "pod-signature");
  // The device already signed; it will not sign again for this contract.
  EXPECT_TRUE(w.devices[0].has_signed(rel.contract));
}
