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

// Scenario files. Every key is optional; unknown keys are rejected.
//
// {
//   "seed": 0,                    "vendors": 1,
//   "distributors": 3,            "devices_per_vendor": 8,
//   "update_size": 1024,          "deposit": 800,
//   "refund_window": 400,         "seeding_window": 40,
//   "block_interval": 2,          "releases_per_vendor": 1,
//   "release_spacing": 20,        "device_poll_max": 20,
//   "session_timeout": 20,        "retry_backoff": 5,
//   "claim_timeout": 12,          "redeem_by_index": false,
//   "max_ticks": 0,               (0: derived from the release schedule)
//   "link": {"latency": 1, "bandwidth": 1048576, "drop_probability": 0.0},
//   "adversaries": [{"kind": "message-drop", "p": 0.3}, {"kind": "double-claimer", "count": 2}]
// }

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "podnet/dsn.hpp"

namespace podnet::sim {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AdversaryKind {
  eavesdrop_and_front_run,
  message_drop,
  byte_tamper,
  vendor_impersonator,
  double_claimer,
  downgrade_pusher,
  device_self_dealer,
  late_claimer,
};

inline constexpr std::array<AdversaryKind, 8> kAllAdversaries = {
    AdversaryKind::eavesdrop_and_front_run, AdversaryKind::message_drop,     AdversaryKind::byte_tamper,
    AdversaryKind::vendor_impersonator,     AdversaryKind::double_claimer,   AdversaryKind::downgrade_pusher,
    AdversaryKind::device_self_dealer,      AdversaryKind::late_claimer,
};

inline std::string_view to_string(AdversaryKind k) {
  switch (k) {
    case AdversaryKind::eavesdrop_and_front_run: return "eavesdrop-and-front-run";
    case AdversaryKind::message_drop: return "message-drop";
    case AdversaryKind::byte_tamper: return "byte-tamper";
    case AdversaryKind::vendor_impersonator: return "vendor-impersonator";
    case AdversaryKind::double_claimer: return "double-claimer";
    case AdversaryKind::downgrade_pusher: return "downgrade-pusher";
    case AdversaryKind::device_self_dealer: return "device-self-dealer";
    case AdversaryKind::late_claimer: return "late-claimer";
  }
  return "unknown";
}

inline std::optional<AdversaryKind> parse_adversary_kind(std::string_view s) {
  for (auto k : kAllAdversaries) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

inline bool takes_probability(AdversaryKind k) {
  return k == AdversaryKind::message_drop || k == AdversaryKind::byte_tamper;
}

struct AdversarySpec {
  AdversaryKind kind = AdversaryKind::message_drop;
  double p = 0.0;
  std::uint32_t count = 1;
};

struct Scenario {
  std::uint64_t seed = 0;
  std::uint32_t vendors = 1;
  std::uint32_t distributors = 3;
  std::uint32_t devices_per_vendor = 8;
  std::uint64_t update_size = 1024;
  std::uint64_t deposit = 800;
  Tick refund_window = 400;
  Tick seeding_window = 40;
  Tick block_interval = 2;
  std::uint32_t releases_per_vendor = 1;
  Tick release_spacing = 20;
  Tick device_poll_max = 20;
  Tick session_timeout = 20;
  Tick retry_backoff = 5;
  Tick claim_timeout = 12;
  bool redeem_by_index = false;
  Tick max_ticks = 0;
  dsn::LinkModel link;
  std::vector<AdversarySpec> adversaries;

  bool has(AdversaryKind k) const {
    return std::any_of(adversaries.begin(), adversaries.end(), [&](const auto& a) { return a.kind == k; });
  }

  std::uint32_t count(AdversaryKind k) const {
    std::uint32_t n = 0;
    for (const auto& a : adversaries) n += a.kind == k ? a.count : 0;
    return n;
  }

  /// Combined per-message probability of all instances of `k`.
  double probability(AdversaryKind k) const {
    double keep = 1.0;
    for (const auto& a : adversaries) {
      if (a.kind == k) {
        for (std::uint32_t i = 0; i < a.count; ++i) keep *= 1.0 - a.p;
      }
    }
    return 1.0 - keep;
  }

  Tick last_release_tick() const { return 1 + (releases_per_vendor - 1) * release_spacing; }

  Tick effective_max_ticks() const {
    if (max_ticks) return max_ticks;
    return last_release_tick() + refund_window + 4 * block_interval + claim_timeout + 16;
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw ScenarioError(m); };
    if (vendors > 0 && devices_per_vendor == 0) fail("devices_per_vendor must be positive when vendors > 0");
    if (update_size == 0) fail("update_size must be positive");
    if (block_interval == 0) fail("block_interval must be positive");
    if (releases_per_vendor == 0) fail("releases_per_vendor must be positive");
    if (releases_per_vendor > 1 && release_spacing == 0) fail("release_spacing must be positive");
    if (device_poll_max == 0) fail("device_poll_max must be positive");
    if (session_timeout == 0 || retry_backoff == 0 || claim_timeout == 0) fail("timeouts must be positive");
    if (link.bandwidth == 0) fail("link.bandwidth must be positive");
    if (!(link.drop_probability >= 0.0 && link.drop_probability <= 1.0)) fail("link.drop_probability outside [0,1]");
    for (const auto& a : adversaries) {
      if (!(a.p >= 0.0 && a.p <= 1.0)) fail(std::string(to_string(a.kind)) + ": p outside [0,1]");
      if (a.count == 0) fail(std::string(to_string(a.kind)) + ": count must be positive");
    }
    if (has(AdversaryKind::downgrade_pusher) && releases_per_vendor < 2) {
      fail("downgrade-pusher needs releases_per_vendor >= 2");
    }
    if (has(AdversaryKind::device_self_dealer) && vendors == 0) fail("device-self-dealer needs a vendor");
    if (count(AdversaryKind::device_self_dealer) > devices_per_vendor) {
      fail("device-self-dealer count exceeds devices_per_vendor");
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json adv = nlohmann::json::array();
    for (const auto& a : adversaries) {
      nlohmann::json j{{"kind", std::string(to_string(a.kind))}, {"count", a.count}};
      if (takes_probability(a.kind)) j["p"] = a.p;
      adv.push_back(std::move(j));
    }
    return {
        {"seed", seed},
        {"vendors", vendors},
        {"distributors", distributors},
        {"devices_per_vendor", devices_per_vendor},
        {"update_size", update_size},
        {"deposit", deposit},
        {"refund_window", refund_window},
        {"seeding_window", seeding_window},
        {"block_interval", block_interval},
        {"releases_per_vendor", releases_per_vendor},
        {"release_spacing", release_spacing},
        {"device_poll_max", device_poll_max},
        {"session_timeout", session_timeout},
        {"retry_backoff", retry_backoff},
        {"claim_timeout", claim_timeout},
        {"redeem_by_index", redeem_by_index},
        {"max_ticks", max_ticks},
        {"link", {{"latency", link.latency}, {"bandwidth", link.bandwidth}, {"drop_probability", link.drop_probability}}},
        {"adversaries", std::move(adv)},
    };
  }

  static Scenario from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ScenarioError("scenario must be a JSON object");
    Scenario sc;
    auto uint_field = [](const nlohmann::json& obj, const char* name, auto& out) {
      auto it = obj.find(name);
      if (it == obj.end()) return;
      if (!it->is_number_unsigned()) throw ScenarioError(std::string(name) + " must be a non-negative integer");
      auto v = it->template get<std::uint64_t>();
      using T = std::decay_t<decltype(out)>;
      if (v > std::numeric_limits<T>::max()) throw ScenarioError(std::string(name) + " out of range");
      out = static_cast<T>(v);
    };
    auto prob_field = [](const nlohmann::json& obj, const char* name, double& out) {
      auto it = obj.find(name);
      if (it == obj.end()) return;
      if (!it->is_number()) throw ScenarioError(std::string(name) + " must be a number");
      out = it->get<double>();
    };
    static const std::set<std::string> kKeys = {
        "seed",          "vendors",         "distributors",    "devices_per_vendor", "update_size",
        "deposit",       "refund_window",   "seeding_window",  "block_interval",     "releases_per_vendor",
        "release_spacing", "device_poll_max", "session_timeout", "retry_backoff",    "claim_timeout",
        "redeem_by_index", "max_ticks",     "link",            "adversaries"};
    for (const auto& [k, v] : j.items()) {
      if (!kKeys.contains(k)) throw ScenarioError("unknown scenario key: " + k);
    }
    uint_field(j, "seed", sc.seed);
    uint_field(j, "vendors", sc.vendors);
    uint_field(j, "distributors", sc.distributors);
    uint_field(j, "devices_per_vendor", sc.devices_per_vendor);
    uint_field(j, "update_size", sc.update_size);
    uint_field(j, "deposit", sc.deposit);
    uint_field(j, "refund_window", sc.refund_window);
    uint_field(j, "seeding_window", sc.seeding_window);
    uint_field(j, "block_interval", sc.block_interval);
    uint_field(j, "releases_per_vendor", sc.releases_per_vendor);
    uint_field(j, "release_spacing", sc.release_spacing);
    uint_field(j, "device_poll_max", sc.device_poll_max);
    uint_field(j, "session_timeout", sc.session_timeout);
    uint_field(j, "retry_backoff", sc.retry_backoff);
    uint_field(j, "claim_timeout", sc.claim_timeout);
    uint_field(j, "max_ticks", sc.max_ticks);
    if (auto it = j.find("redeem_by_index"); it != j.end()) {
      if (!it->is_boolean()) throw ScenarioError("redeem_by_index must be a boolean");
      sc.redeem_by_index = it->get<bool>();
    }
    if (auto it = j.find("link"); it != j.end()) {
      if (!it->is_object()) throw ScenarioError("link must be an object");
      for (const auto& [k, v] : it->items()) {
        if (k != "latency" && k != "bandwidth" && k != "drop_probability") throw ScenarioError("unknown link key: " + k);
      }
      uint_field(*it, "latency", sc.link.latency);
      uint_field(*it, "bandwidth", sc.link.bandwidth);
      prob_field(*it, "drop_probability", sc.link.drop_probability);
    }
    if (auto it = j.find("adversaries"); it != j.end()) {
      if (!it->is_array()) throw ScenarioError("adversaries must be an array");
      for (const auto& a : *it) {
        if (!a.is_object() || !a.contains("kind") || !a["kind"].is_string()) {
          throw ScenarioError("adversary entries need a string kind");
        }
        auto kind = parse_adversary_kind(a["kind"].get<std::string>());
        if (!kind) throw ScenarioError("unknown adversary kind: " + a["kind"].get<std::string>());
        AdversarySpec spec{*kind, 0.0, 1};
        for (const auto& [k, v] : a.items()) {
          if (k == "kind" || k == "count" || (k == "p" && takes_probability(*kind))) continue;
          throw ScenarioError("unexpected key '" + k + "' for adversary " + std::string(to_string(*kind)));
        }
        if (takes_probability(*kind) && !a.contains("p")) {
          throw ScenarioError(std::string(to_string(*kind)) + " needs p");
        }
        prob_field(a, "p", spec.p);
        uint_field(a, "count", spec.count);
        sc.adversaries.push_back(spec);
      }
    }
    sc.validate();
    return sc;
  }

  static Scenario load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario file: " + path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
    }
    return from_json(j);
  }
};

}  // namespace podnet::sim
