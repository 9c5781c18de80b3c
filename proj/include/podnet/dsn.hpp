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

// Content-addressed storage with trackerless provider discovery. The DHT is a
// single deterministic registry: lookups return every live provider in
// registration order. Transfers are whole-file over a (latency, bandwidth,
// drop) link.

#include <map>
#include <memory>
#include <set>

#include "podnet/crypto.hpp"

namespace podnet::dsn {

using ContentId = crypto::Digest;

struct NodeId {
  std::uint32_t value = 0;

  auto operator<=>(const NodeId&) const = default;
};

struct LinkModel {
  Tick latency = 1;
  std::uint64_t bandwidth = 1 << 20;  // bytes per tick
  double drop_probability = 0.0;

  Tick transfer_time(std::size_t bytes) const {
    if (bandwidth == 0) throw std::invalid_argument("link bandwidth must be positive");
    return latency + (bytes + bandwidth - 1) / bandwidth;
  }
};

struct ProviderRecord {
  ContentId content;
  NodeId provider;
  Tick registered_at = 0;
};

enum class FetchStatus { delivered, provider_unavailable, dropped, integrity_failure };

inline std::string_view to_string(FetchStatus s) {
  switch (s) {
    case FetchStatus::delivered: return "delivered";
    case FetchStatus::provider_unavailable: return "provider-unavailable";
    case FetchStatus::dropped: return "dropped";
    case FetchStatus::integrity_failure: return "integrity-failure";
  }
  return "unknown";
}

struct FetchResult {
  FetchStatus status = FetchStatus::provider_unavailable;
  Tick ready_at = 0;
  std::shared_ptr<const Bytes> bytes;  // set when delivered
};

class Network {
 public:
  /// Called with a private copy of the bytes in flight; may modify them.
  using TransitHook = std::function<void(NodeId from, NodeId to, const ContentId&, Bytes&)>;

  explicit Network(LinkModel link = {}, std::uint64_t seed = 0) : link_(link), rng_(seed) {}

  const LinkModel& link() const { return link_; }

  ContentId provide(NodeId node, Bytes content, Tick now) {
    return provide(node, std::make_shared<const Bytes>(std::move(content)), now);
  }

  ContentId provide(NodeId node, std::shared_ptr<const Bytes> content, Tick now) {
    ContentId id = crypto::hash(*content);
    advertise(node, id, std::move(content), now);
    return id;
  }

  /// Registers `node` as a provider of `id` without checking that the bytes
  /// hash to it. The registry cannot tell; requesters find out on fetch.
  void advertise(NodeId node, const ContentId& id, std::shared_ptr<const Bytes> content, Tick now) {
    store_[{node, id}] = std::move(content);
    auto& records = registry_[id];
    for (const auto& r : records) {
      if (r.provider == node) return;
    }
    records.push_back(ProviderRecord{id, node, now});
  }

  void unprovide(NodeId node, const ContentId& id) {
    auto it = registry_.find(id);
    if (it == registry_.end()) return;
    std::erase_if(it->second, [&](const ProviderRecord& r) { return r.provider == node; });
    if (it->second.empty()) registry_.erase(it);
    store_.erase({node, id});
  }

  std::vector<NodeId> lookup(const ContentId& id) const {
    std::vector<NodeId> out;
    auto it = registry_.find(id);
    if (it == registry_.end()) return out;
    for (const auto& r : it->second) {
      if (!departed_.contains(r.provider)) out.push_back(r.provider);
    }
    return out;
  }

  const std::vector<ProviderRecord>* records(const ContentId& id) const {
    auto it = registry_.find(id);
    return it == registry_.end() ? nullptr : &it->second;
  }

  void depart(NodeId node) { departed_.insert(node); }
  void rejoin(NodeId node) { departed_.erase(node); }
  bool departed(NodeId node) const { return departed_.contains(node); }

  void set_transit_hook(TransitHook hook) { transit_hook_ = std::move(hook); }

  /// Starts a transfer at `now`. The result describes what the requester sees
  /// at `ready_at`; the requester-side integrity check is already applied.
  FetchResult fetch(NodeId requester, NodeId provider, const ContentId& id, Tick now) {
    FetchResult out;
    auto it = store_.find({provider, id});
    if (departed_.contains(provider) || it == store_.end()) {
      out.status = FetchStatus::provider_unavailable;
      out.ready_at = now + link_.latency;
      return out;
    }
    const auto& content = it->second;
    out.ready_at = now + link_.transfer_time(content->size());
    if (link_.drop_probability > 0 && std::bernoulli_distribution(link_.drop_probability)(rng_)) {
      out.status = FetchStatus::dropped;
      return out;
    }
    std::shared_ptr<const Bytes> delivered = content;
    if (transit_hook_) {
      Bytes copy = *content;
      transit_hook_(provider, requester, id, copy);
      if (copy != *content) delivered = std::make_shared<const Bytes>(std::move(copy));
    }
    bytes_transferred_ += delivered->size();
    if (crypto::hash(*delivered) != id) {
      out.status = FetchStatus::integrity_failure;
      return out;
    }
    out.status = FetchStatus::delivered;
    out.bytes = std::move(delivered);
    return out;
  }

  std::shared_ptr<const Bytes> stored(NodeId node, const ContentId& id) const {
    auto it = store_.find({node, id});
    return it == store_.end() ? nullptr : it->second;
  }

  std::uint64_t bytes_transferred() const { return bytes_transferred_; }

 private:
  LinkModel link_;
  Rng rng_;
  std::map<ContentId, std::vector<ProviderRecord>> registry_;
  std::map<std::pair<NodeId, ContentId>, std::shared_ptr<const Bytes>> store_;
  std::set<NodeId> departed_;
  TransitHook transit_hook_;
  std::uint64_t bytes_transferred_ = 0;
};

/// Tries providers in order until one delivers bytes that hash to `id`.
/// Returns the last failure if none does.
inline FetchResult fetch_any(Network& net, NodeId requester, const ContentId& id, Tick now,
                             std::span<const NodeId> providers) {
  FetchResult last;
  last.ready_at = now;
  Tick t = now;
  for (auto p : providers) {
    if (p == requester) continue;
    last = net.fetch(requester, p, id, t);
    if (last.status == FetchStatus::delivered) return last;
    t = last.ready_at;
  }
  return last;
}

}  // namespace podnet::dsn
