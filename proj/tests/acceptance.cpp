// Acceptance run: one PASS/FAIL line per primary criterion, exit 1 if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "ixda/hara/hara.hpp"
#include "ixda/runner.hpp"
#include "ixda/sim.hpp"
#include "ixda/units.hpp"
#include "ixda/vehicle.hpp"
#include "iso_table.hpp"
#include "support.hpp"

using namespace ixda;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

constexpr int kSeeds = 50;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void fail(const std::string& why) {
    if (pass) detail.str("");
    if (!pass) detail << "; ";
    pass = false;
    detail << why;
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

SimOptions quiet(bool buffer = false) { return {TraceVerbosity::Compact, nullptr, buffer}; }

/// Per-tick view of one vehicle, from the compact trace.
struct Sample {
  Tick tick;
  double x, y, speed;
  std::string mode;
};

std::map<std::string, std::vector<Sample>> samples(const TraceLog& log) {
  std::map<std::string, std::vector<Sample>> out;
  for (const auto& r : log.records()) {
    if (r["kind"] != "tick") continue;
    for (const auto& v : r["payload"]["vehicles"]) {
      out[v["id"]].push_back({r["tick"], v["x"], v["y"], v["speed"], v["mode"]});
    }
  }
  return out;
}

/// Path length from the last sample before `mode` first appears to the first
/// sample at rest after it; negative if the vehicle never comes to rest.
double stopping_distance(const std::vector<Sample>& s, const std::string& mode) {
  std::size_t k = 0;
  while (k < s.size() && s[k].mode != mode) ++k;
  if (k == 0 || k == s.size()) return -1.0;
  double d = 0.0;
  for (std::size_t i = k; i < s.size(); ++i) {
    d += std::hypot(s[i].x - s[i - 1].x, s[i].y - s[i - 1].y);
    if (s[i].speed == 0.0) return d;
  }
  return -1.0;
}

Verdict hara_golden() {
  Verdict v;
  const auto t0 = Clock::now();
  const auto cat = hara::load_catalog(test::data_path("hara"));
  const auto a = hara::assess(cat);
  const std::string md = hara::render_report(a.hazards, a.goals, hara::ReportFormat::Markdown);
  const double elapsed = seconds_since(t0);
  if (md != test::read_file(std::string(IXDA_TEST_DIR) + "/golden/hara_report.md")) v.fail("markdown differs from golden");
  if (a.hazards.size() != 8) v.fail("hazard count " + std::to_string(a.hazards.size()));
  const std::vector<std::string> expected = {"SG1 QM/QM/B Vehicle", "SG2 QM/QM/B Vehicle", "SG3 A/A/C Vehicle",
                                             "SG4 QM/QM/A Joint",   "SG5 QM/A/C IX",       "SG6 QM/A/C IX"};
  std::vector<std::string> got;
  for (const auto& g : a.goals) {
    got.push_back(g.id + " " + hara::to_string(g.per_scenario.at("NS/C")) + "/" +
                  hara::to_string(g.per_scenario.at("HS/C")) + "/" + hara::to_string(g.per_scenario.at("HS/UC")) + " " +
                  hara::to_string(g.allocation));
  }
  if (got != expected) v.fail("goal table differs");
  if (elapsed >= 1.0) v.fail("took " + std::to_string(elapsed) + " s");
  if (v.pass) v.detail << "8 hazards, 18 cells, 6 allocations exact in " << elapsed << " s";
  return v;
}

Verdict asil_oracle() {
  Verdict v;
  const auto t0 = Clock::now();
  int cells = 0;
  for (int s = 1; s <= 3; ++s) {
    for (int e = 1; e <= 4; ++e) {
      for (int c = 1; c <= 3; ++c) {
        ++cells;
        const std::string got = hara::to_string(hara::determine_asil({s, e, c}));
        if (got != test::iso_asil(s, e, c)) {
          v.fail("S" + std::to_string(s) + "E" + std::to_string(e) + "C" + std::to_string(c) + " gave " + got);
        }
      }
    }
  }
  const double elapsed = seconds_since(t0);
  if (elapsed >= 1.0) v.fail("took " + std::to_string(elapsed) + " s");
  if (v.pass) v.detail << cells << " of 36 cells match";
  return v;
}

Verdict watchdog_timing() {
  Verdict v;
  const auto base = test::scenario("h4_comm_loss.json");
  int stops = 0;
  for (int seed = 1; seed <= kSeeds && v.pass; ++seed) {
    auto cfg = base;
    cfg.seed = static_cast<std::uint64_t>(seed);
    Simulation sim(cfg, quiet());
    sim.run_to_end();
    const auto report = sim.report();
    const auto traces = samples(sim.trace());
    for (const auto& inj : cfg.injections) {
      if (inj.hazard != HazardId::H4) continue;
      const json* hit = nullptr;
      for (const auto& s : report.comm_loss_stops) {
        if (s["vehicle"] == inj.target && s["stop_tick"].get<Tick>() >= inj.from_tick) hit = &s;
      }
      const std::string at = "seed " + std::to_string(seed) + " " + inj.target;
      if (!hit) {
        v.fail(at + ": no comm-loss stop");
        continue;
      }
      const Tick stop = (*hit)["stop_tick"];
      if (stop != inj.from_tick + kWatchdogTicks + 1) {
        v.fail(at + ": stop at tick " + std::to_string(stop) + ", loss at " + std::to_string(inj.from_tick));
      }
      // Speed entering the stop tick bounds the time to rest.
      double speed = 0.0;
      for (const auto& s : traces.at(inj.target)) {
        if (s.tick == stop - 1) speed = s.speed;
      }
      const Tick rest = (*hit)["rest_tick"];
      const Tick bound = stop + static_cast<Tick>(std::ceil(speed / VehicleParams{}.service_decel / kTickSeconds)) + 1;
      if (rest > bound) v.fail(at + ": rest at " + std::to_string(rest) + " beyond " + std::to_string(bound));
      ++stops;
    }
  }
  if (v.pass) v.detail << stops << " link losses over " << kSeeds << " seeds, each stopped at loss+31 and at rest in time";
  return v;
}

Verdict estop_radius() {
  Verdict v;
  const auto base = test::scenario("estop_radius.json");
  for (int seed = 1; seed <= kSeeds; ++seed) {
    auto cfg = base;
    cfg.seed = static_cast<std::uint64_t>(seed);
    Simulation sim(cfg, quiet());
    sim.run_to_end();
    const auto traces = samples(sim.trace());
    const std::string at = "seed " + std::to_string(seed);
    const auto& near = traces.at("V1");
    if (near.back().speed != 0.0 || near.back().mode != "EstopStop") v.fail(at + ": V1 did not stop");
    // Unchanged means: the same mode sequence as the same seed with no press.
    auto control_cfg = cfg;
    control_cfg.events.clear();
    Simulation control(control_cfg, quiet());
    control.run_to_end();
    const auto& far = traces.at("V2");
    const auto& ref = samples(control.trace()).at("V2");
    for (std::size_t i = 0; i < far.size(); ++i) {
      if (i >= ref.size() || far[i].mode != ref[i].mode || far[i].mode == "EstopStop") {
        v.fail(at + ": V2 mode " + far[i].mode + " at tick " + std::to_string(far[i].tick));
        break;
      }
    }
  }
  if (v.pass) v.detail << "9.9 m vehicle stopped, 10.1 m vehicle unchanged, " << kSeeds << " seeds";
  return v;
}

Verdict speed_regime() {
  Verdict v;
  double worst = 0.0;
  std::vector<std::string> ns = {"ns_controlled.json", "ns_stopping.json", "estop_radius.json", "h4_comm_loss.json"};
  for (int h = 1; h <= 8; ++h) ns.push_back("suite/h" + std::to_string(h) + "_mitigated.json");
  for (const auto& name : ns) {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
      RunOptions o;
      o.seed = seed;
      const auto r = run_scenario(test::scenario(name), o);
      worst = std::max(worst, r.report.max_speed);
      if (r.report.max_speed > kNominalSpeedCap + 1e-9) v.fail(name + " reached " + std::to_string(r.report.max_speed));
    }
  }
  Simulation ns_run(test::scenario("ns_stopping.json"), quiet());
  ns_run.run_to_end();
  const double ns_d = stopping_distance(samples(ns_run.trace()).at("V1"), "EstopStop");
  Simulation hs_run(test::scenario("hs_stopping.json"), quiet());
  hs_run.run_to_end();
  const double hs_d = stopping_distance(samples(hs_run.trace()).at("V1"), "EstopStop");
  if (!(ns_d >= 0.0 && ns_d < 10.0)) v.fail("NS stop " + std::to_string(ns_d) + " m");
  if (!(hs_d > 10.0)) v.fail("HS stop " + std::to_string(hs_d) + " m");
  if (v.pass) v.detail << "NS max " << worst << " m/s; NS stop " << ns_d << " m; HS stop " << hs_d << " m";
  return v;
}

Verdict hazard_suite() {
  Verdict v;
  const auto r = run_suite(test::data_path("scenarios/suite"), kSeeds);
  for (const auto& row : r.rows) {
    if (!row.pass) {
      v.fail(std::string(to_string(row.hazard)) + (row.mitigated ? " mitigated: " : " unmitigated: ") +
             std::to_string(row.violating_seeds.size()) + " violating seeds");
    }
  }
  if (r.wall_s >= 300.0) v.fail("took " + std::to_string(r.wall_s) + " s");
  if (v.pass) {
    v.detail << r.rows.size() << " rows over " << kSeeds << " seeds in " << r.wall_s << " s; aggregate "
             << r.aggregate_hash;
  }
  return v;
}

Verdict resume() {
  Verdict v;
  const std::vector<std::string> names = {"ns_controlled.json", "h4_comm_loss.json", "suite/h5_mitigated.json",
                                          "suite/h1_unmitigated.json"};
  std::mt19937_64 rng(20);
  for (int trial = 0; trial < 20; ++trial) {
    auto cfg = test::scenario(names[static_cast<std::size_t>(trial) % names.size()]);
    cfg.seed = rng() % 1000 + 1;
    Simulation straight(cfg, quiet());
    straight.run_to_end();
    const Tick total = static_cast<Tick>(std::llround(cfg.duration_s / kTickSeconds));
    const Tick kill = std::uniform_int_distribution<Tick>(1, total - 1)(rng);

    Simulation first(cfg, quiet(true));
    while (first.tick() < kill) first.step();
    const DepotSnapshot snap = first.buffer().restore();
    const auto prefix = first.trace().records();
    Simulation resumed(cfg, quiet());
    resumed.restore(snap, prefix);
    resumed.run_to_end();
    if (resumed.trace().hash() != straight.trace().hash()) {
      v.fail(cfg.name + " seed " + std::to_string(cfg.seed) + " killed at " + std::to_string(kill));
    }
  }
  if (v.pass) v.detail << "20 of 20 restores reproduce the terminal hash";
  return v;
}

Verdict determinism() {
  Verdict v;
  const std::vector<std::string> names = {"ns_controlled.json", "h4_comm_loss.json", "suite/h5_unmitigated.json",
                                          "suite/h6_mitigated.json", "suite/h8_unmitigated.json"};
  int combos = 0;
  for (const auto& name : names) {
    for (std::uint64_t seed : {7ull, 1234ull}) {
      RunOptions o;
      o.seed = seed;
      const auto cfg = test::scenario(name);
      if (run_scenario(cfg, o).trace_hash != run_scenario(cfg, o).trace_hash) {
        v.fail(name + " seed " + std::to_string(seed));
      }
      ++combos;
    }
  }
  if (v.pass) v.detail << combos << " scenario/seed combinations hash identically";
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    const char* slug;
    const char* name;
    Verdict (*check)();
  };
  const std::vector<Criterion> criteria = {{"hara_golden", "HARA golden reproduction", hara_golden},
                                           {"asil_oracle", "ASIL matrix oracle", asil_oracle},
                                           {"watchdog_timing", "Watchdog timing", watchdog_timing},
                                           {"estop_radius", "E-stop radius", estop_radius},
                                           {"speed_regime", "Speed regime consistency", speed_regime},
                                           {"hazard_suite", "Hazard pair suite", hazard_suite},
                                           {"resume", "Rolling-buffer resume", resume},
                                           {"determinism", "Determinism", determinism}};
  // With arguments, only the named criteria run.
  const std::vector<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  int ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.slug) == only.end()) continue;
    ++ran;
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v.fail(std::string("error: ") + e.what());
    }
    failed += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << c.name << ": " << v.detail.str() << std::endl;
  }
  if (ran == 0) {
    std::cerr << "no such criterion\n";
    return 2;
  }
  return failed == 0 ? 0 : 1;
}
