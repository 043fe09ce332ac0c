#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

#include "ixda/runner.hpp"
#include "ixda/sim.hpp"
#include "serve.hpp"
#include "support.hpp"

using namespace ixda;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ixda_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Exit status of `ixda <args>`, output discarded.
int cli(const std::string& args) {
  const std::string cmd = std::string(IXDA_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("bundled scenarios") {
  SUBCASE("nominal") {
    const auto r = run_scenario(test::scenario("ns_controlled.json"));
    CHECK(r.collisions == 0);
    CHECK(r.report.all_pass());
    CHECK(r.trace_hash.size() == 16);
    CHECK(r.wall_s > 0.0);
  }
  SUBCASE("comm loss stops both vehicles on the watchdog") {
    const auto r = run_scenario(test::scenario("h4_comm_loss.json"));
    CHECK(r.report.all_pass());
    REQUIRE(r.report.comm_loss_stops.size() == 2);
    for (const auto& s : r.report.comm_loss_stops) {
      CHECK(s["latency_ticks"] == 31);
      CHECK(s["stop_tick"].get<Tick>() - s["last_trajectory_tick"].get<Tick>() == 31);
      CHECK(s["rest_tick"].get<Tick>() >= s["stop_tick"].get<Tick>());
    }
  }
  SUBCASE("limiter disabled") {
    const auto r = run_scenario(test::scenario("h3_unmitigated.json"));
    CHECK_FALSE(r.report.all_pass());
    CHECK_FALSE(r.report.goals.at("SG3").pass);
    CHECK(r.report.max_speed > kNominalSpeedCap);
  }
  SUBCASE("overrides") {
    RunOptions o;
    o.seed = 99;
    o.duration_s = 2.5;
    const auto cfg = apply_overrides(test::scenario("ns_controlled.json"), o);
    CHECK(cfg.seed == 99);
    CHECK(cfg.duration_s == 2.5);
    const auto r = run_scenario(test::scenario("ns_controlled.json"), o);
    CHECK(r.seed == 99);
    CHECK(to_json(r)["seed"] == 99);
  }
}

TEST_CASE("cli exit codes") {
  const fs::path out = scratch("exit");
  const std::string scen = test::data_path("scenarios/");
  CHECK(cli("run " + scen + "ns_controlled.json --out " + out.string()) == 0);
  CHECK(cli("run " + scen + "h4_comm_loss.json --out " + out.string()) == 0);
  CHECK(cli("run " + scen + "h3_unmitigated.json --out " + out.string()) == 1);
  CHECK(cli("run " + scen + "h3_unmitigated.json --format xml --out " + out.string()) != 0);
  CHECK(cli("run /nonexistent.json") != 0);

  // The written trace replays to the same verdict and hash.
  const fs::path trace = out / "ns_controlled_s1.trace.ndjson";
  REQUIRE(fs::exists(trace));
  const auto result = json::parse(test::read_file((out / "ns_controlled_s1.result.json").string()));
  std::ifstream in(trace, std::ios::binary);
  CHECK(TraceLog::read(in).hash_hex() == result["trace_hash"]);
  CHECK(cli("replay " + trace.string()) == 0);
  CHECK(cli("replay " + (out / "h3_unmitigated_s1.trace.ndjson").string()) == 1);

  CHECK(cli("hara --output " + (out / "hara.md").string()) == 0);
  CHECK(test::read_file((out / "hara.md").string()) ==
        test::read_file(std::string(IXDA_TEST_DIR) + "/golden/hara_report.md"));
  CHECK(cli("hara --format yaml") != 0);
  CHECK(cli("") != 0);
}

TEST_CASE("suite is deterministic") {
  const std::string dir = test::data_path("scenarios/suite");
  const auto a = run_suite(dir, 2, 1, 1);
  const auto b = run_suite(dir, 2, 1, 0);
  REQUIRE(a.rows.size() == 16);
  CHECK(a.aggregate_hash == b.aggregate_hash);
  for (const auto& row : a.rows) {
    CAPTURE(to_string(row.hazard));
    CAPTURE(row.mitigated);
    CHECK(row.seeds == 2);
    if (row.mitigated) CHECK(row.collisions == 0);
  }
  CHECK(pair_path(dir, HazardId::H3, false) == dir + "/h3_unmitigated.json");
  CHECK(run_suite(dir, 2, 2, 1).aggregate_hash != a.aggregate_hash);
  CHECK(to_json(a)["rows"].size() == 16);
}

TEST_CASE("service commands") {
  auto cfg = test::scenario("ns_controlled.json");
  cfg.duration_s = 5;
  Simulation sim(cfg, {TraceVerbosity::Compact, nullptr, false});
  bool paused = false;
  sim.step();

  SUBCASE("malformed commands are rejected and change nothing") {
    const auto before = sim.snapshot().state;
    for (const json& cmd : {json(42), json{{"kind", "launch"}}, json{{"kind", 7}},
                            json{{"kind", "estop"}, {"target", "V9"}}, json{{"kind", "hazard"}, {"event", "Meteor"}},
                            json{{"kind", "estop_press"}, {"button", "nowhere"}}}) {
      CAPTURE(cmd.dump());
      const auto r = apply_service_command(sim, cmd, paused);
      CHECK(r["accepted"] == false);
      CHECK_FALSE(r["reason"].get<std::string>().empty());
      CHECK_FALSE(r.contains("log"));
    }
    CHECK(sim.snapshot().state == before);
  }
  SUBCASE("pause and resume") {
    CHECK(apply_service_command(sim, {{"kind", "pause"}}, paused)["accepted"] == true);
    CHECK(paused);
    CHECK(apply_service_command(sim, {{"kind", "resume"}}, paused)["accepted"] == true);
    CHECK_FALSE(paused);
  }
  SUBCASE("a bare e-stop is global and logged at the next tick") {
    const auto r = apply_service_command(sim, {{"kind", "estop"}}, paused);
    CHECK(r["accepted"] == true);
    CHECK(r["log"] == json{{"tick", 1}, {"kind", "estop"}, {"target", "*"}});
    sim.step();
    sim.step();
    for (const auto& v : sim.vehicles()) CHECK(v.mode == DriveMode::EstopStop);
    CHECK(apply_service_command(sim, {{"kind", "release"}}, paused)["accepted"] == true);
  }
  SUBCASE("check-out with a bad token") {
    const auto r = apply_service_command(
        sim, {{"kind", "checkout"}, {"driver", "D1"}, {"token", "nope"}, {"vehicle", "V1"}}, paused);
    CHECK(r["accepted"] == false);
    CHECK(r["reason"] == "invalid driver credentials");
  }
}
