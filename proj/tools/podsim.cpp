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


// podsim: run scenarios, the attack catalogue, and replay recorded runs.

#include <chrono>
#include <iostream>

#include <CLI11.hpp>

#include "podnet/sim.hpp"

namespace fs = std::filesystem;
using namespace podnet::sim;

namespace {

struct WallClock {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  ~WallClock() {
    std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
    std::cerr << "wall time: " << d.count() << " s\n";
  }
};

void line(bool pass, const std::string& what) { std::cout << (pass ? "PASS " : "FAIL ") << what << '\n'; }

int cmd_run(const fs::path& scenario_path, std::optional<std::uint64_t> seed, const fs::path& out) {
  auto sc = Scenario::load(scenario_path.string());
  if (seed) sc.seed = *seed;
  WallClock clock;
  auto r = run(sc);
  write_run(r, out);
  std::cout << "seed " << sc.seed << ", final tick " << r.final_tick << '\n'
            << "devices covered " << r.devices_covered << "/" << r.devices_total << ", payments " << r.payments
            << '\n'
            << "transcript " << r.transcript_digest.hex() << '\n'
            << "ledger     " << r.ledger_digest.hex() << '\n';
  line(r.invariants.ok(), "invariants");
  line(r.secrecy_violations == 0, "secrecy");
  line(r.supply_violations == 0, "supply");
  for (const auto& d : r.invariants.details) std::cout << "  " << d << '\n';
  std::cout << "wrote " << out.string() << '\n';
  return r.ok() ? 0 : 1;
}

int cmd_attack_suite(const fs::path& out) {
  WallClock clock;
  auto suite = run_attack_suite();
  fs::create_directories(out);
  write_json(out / "attack_suite.json", suite.to_json());
  for (const auto& c : suite.cases) line(c.pass, c.name + ": " + c.summary);
  std::cout << "wrote " << (out / "attack_suite.json").string() << '\n';
  return suite.ok() ? 0 : 1;
}

int cmd_replay(fs::path log_path, bool rerun) {
  if (fs::is_directory(log_path)) log_path /= "run.json";
  WallClock clock;
  auto rep = replay(read_json(log_path), rerun);
  line(rep.ledger_matches, "ledger re-executes to the recorded state");
  line(rep.invariants_ok, "invariants hold on the rebuilt ledger");
  line(rep.secrecy_ok, "no secret on the wire, supply constant");
  if (rep.reran) line(rep.deterministic, "re-run reproduces transcript and ledger digests");
  for (const auto& n : rep.notes) std::cout << "  " << n << '\n';
  for (const auto& d : rep.invariants.details) std::cout << "  " << d << '\n';
  return rep.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"podnet simulator"};
  app.require_subcommand(1);

  fs::path scenario, run_out;
  std::optional<std::uint64_t> seed;
  auto* run_cmd = app.add_subcommand("run", "Run one scenario and write metrics, audit, ledger and run log");
  run_cmd->add_option("--scenario", scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", seed, "Overrides the scenario seed");
  run_cmd->add_option("--out", run_out, "Output directory")->required();

  fs::path suite_out;
  auto* suite_cmd = app.add_subcommand("attack-suite", "Run every adversary across fixed seeds");
  suite_cmd->add_option("--out", suite_out, "Output directory")->required();

  fs::path log_path;
  bool no_rerun = false;
  auto* replay_cmd = app.add_subcommand("replay", "Verify a recorded run");
  replay_cmd->add_option("--log", log_path, "run.json or a run directory")->required()->check(CLI::ExistingPath);
  replay_cmd->add_flag("--no-rerun", no_rerun, "Skip re-running the scenario");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return cmd_run(scenario, seed, run_out);
    if (*suite_cmd) return cmd_attack_suite(suite_out);
    if (*replay_cmd) return cmd_replay(log_path, !no_rerun);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
