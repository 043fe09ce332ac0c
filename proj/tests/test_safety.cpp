#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "ixda/safety.hpp"
#include "ixda/sim.hpp"
#include "support.hpp"

using namespace ixda;

TEST_CASE("injection windows") {
  const std::vector<Injection> schedule = {
      {HazardId::H4, "V1", 100, 200, nlohmann::json::object()},
      {HazardId::H2, "V2", 10, 20, {{"channels", "primary"}}},
      {HazardId::H3, "*", 0, 5, nlohmann::json::object()},
      {HazardId::H7, "ix", 0, 5, {{"velocity_scale", -3.0}}}};
  CHECK(apply_injections({}, 50).active.empty());

  const auto at99 = apply_injections(schedule, 99);
  CHECK(at99.active.empty());
  const auto at100 = apply_injections(schedule, 100);
  REQUIRE(at100.impairments.size() == 1);
  CHECK(at100.impairments[0].disconnect);
  CHECK(at100.impairments[0].selector == "V1");
  CHECK(apply_injections(schedule, 200).is_active(HazardId::H4));
  CHECK_FALSE(apply_injections(schedule, 201).is_active(HazardId::H4));

  const auto at3 = apply_injections(schedule, 3);
  CHECK(at3.speed_factor_for(VehicleId{9}) == 2.0);
  CHECK(at3.prediction_scale == -3.0);
  CHECK(at3.active == std::vector<HazardId>{HazardId::H3, HazardId::H7});

  const auto at15 = apply_injections(schedule, 15);
  SUBCASE("single channel keeps the vehicle braking") {
    const auto h = injected_health(at15, VehicleId{2}, true);
    CHECK_FALSE(h.brake_primary_ok);
    CHECK(h.brake_secondary_ok);
    CHECK_FALSE(h.significant_failure());
  }
  SUBCASE("without the redundant channel the same fault is significant") {
    const auto h = injected_health(at15, VehicleId{2}, false);
    CHECK(h.significant_failure());
  }
  CHECK(injected_health(at15, VehicleId{1}, true) == HealthStatus{});
}

TEST_CASE("collision checks") {
  CollisionScene scene;
  scene.tick = 7;
  VehicleState v;
  v.id = VehicleId{1};
  v.pose = {0, 0, 0};
  v.speed = 2.0;
  scene.vehicles = {v};
  const double front = scene.params.length / 2.0;

  SUBCASE("centre 0.2 m inside the footprint edge") {
    scene.pedestrians = {{PedestrianId{1}, {front - 0.2, 0}, {}, 0.3}};
    const auto hits = check_collisions(scene);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].other == "P1");
    CHECK(hits[0].other_kind == "pedestrian");
    CHECK(hits[0].relative_speed == doctest::Approx(2.0));
  }
  SUBCASE("everything at least 1 m clear") {
    VehicleState w = v;
    w.id = VehicleId{2};
    w.pose = {scene.params.length + 1.0, 0, 0};
    scene.vehicles.push_back(w);
    scene.pedestrians = {{PedestrianId{1}, {0, scene.params.width / 2.0 + 0.3 + 1.0}, {}, 0.3}};
    scene.obstacles = {{"cone", {-front - 1.5, 0}, 0.5}};
    CHECK(check_collisions(scene).empty());
  }
  SUBCASE("tangency counts") {
    scene.pedestrians = {{PedestrianId{1}, {front + 0.3, 0}, {}, 0.3}};
    CHECK(check_collisions(scene).size() == 1);
    scene.pedestrians[0].position.x += 1e-6;
    CHECK(check_collisions(scene).empty());
  }
  SUBCASE("vehicle and obstacle contacts") {
    VehicleState w = v;
    w.id = VehicleId{2};
    w.pose = {scene.params.length - 0.1, 0, 0};
    scene.vehicles.push_back(w);
    scene.obstacles = {{"cone", {-front - 0.4, 0}, 0.5}};
    const auto hits = check_collisions(scene);
    REQUIRE(hits.size() == 2);
  }
  SUBCASE("onsets are reported once") {
    scene.pedestrians = {{PedestrianId{1}, {front, 0}, {}, 0.3}};
    CollisionTracker tracker;
    CHECK(tracker.onsets(check_collisions(scene)).size() == 1);
    CHECK(tracker.onsets(check_collisions(scene)).empty());
    scene.pedestrians[0].position.x = 10;
    CHECK(tracker.onsets(check_collisions(scene)).empty());
    scene.pedestrians[0].position.x = front;
    CHECK(tracker.onsets(check_collisions(scene)).size() == 1);
  }
}

TEST_CASE("trace log") {
  std::ostringstream sink;
  TraceLog log(TraceVerbosity::Compact, &sink);
  log.append(0, "header", {{"a", 1}});
  log.append(0, "tick", {{"b", 2}});
  // FNV-1a 64 over the exact NDJSON lines, newline included.
  std::uint64_t h = 14695981039346656037ull;
  for (char c : sink.str()) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  CHECK(log.hash() == h);
  CHECK(fnv1a64(sink.str()) == h);
  CHECK(fnv1a64("") == 14695981039346656037ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);

  std::istringstream in(sink.str());
  const TraceLog back = TraceLog::read(in);
  CHECK(back.records() == log.records());
  CHECK(back.hash() == log.hash());
  std::istringstream bad("{\"kind\":\"tick\"\n");
  CHECK_THROWS(TraceLog::read(bad));
}

namespace {

std::vector<nlohmann::json> nominal_trace() {
  auto cfg = test::scenario("ns_stopping.json");
  Simulation sim(cfg, {TraceVerbosity::Compact, nullptr, false});
  sim.run_to_end();
  return sim.trace().records();
}

nlohmann::json& tick_vehicle(std::vector<nlohmann::json>& recs, Tick t) {
  for (auto& r : recs) {
    if (r["kind"] == "tick" && r["tick"] == t) {
      return r["payload"]["vehicles"][0];
    }
  }
  throw std::runtime_error("tick not found");
}

}  // namespace

TEST_CASE("goal monitors") {
  auto recs = nominal_trace();
  const auto clean = evaluate_goals(recs);
  CHECK(clean.all_pass());
  CHECK(clean.collisions == 0);
  REQUIRE(clean.estop_stops.size() == 1);
  CHECK(clean.estop_stops[0]["rest_tick"].get<Tick>() <= clean.estop_stops[0]["deadline"].get<Tick>());

  SUBCASE("missing end record") {
    recs.pop_back();
    CHECK_THROWS_AS(evaluate_goals(recs), IncompleteTrace);
  }
  SUBCASE("missing header") {
    recs.erase(recs.begin());
    CHECK_THROWS_AS(evaluate_goals(recs), IncompleteTrace);
  }
  SUBCASE("overspeed fails SG3") {
    tick_vehicle(recs, 20)["speed"] = 4.4704 + 1e-6;
    const auto r = evaluate_goals(recs);
    CHECK_FALSE(r.goals.at("SG3").pass);
    CHECK(r.goals.at("SG3").evidence[0]["tick"] == 20);
    CHECK(r.goals.at("SG1").pass);
  }
  SUBCASE("a detection without AEB fails SG1") {
    tick_vehicle(recs, 20)["aodca"]["detected"] = true;
    CHECK_FALSE(evaluate_goals(recs).goals.at("SG1").pass);
  }
  SUBCASE("a detection with AODCA disabled is not SG1's concern") {
    auto& v = tick_vehicle(recs, 20);
    v["aodca"]["detected"] = true;
    v["aodca"]["enabled"] = false;
    CHECK(evaluate_goals(recs).goals.at("SG1").pass);
  }
  SUBCASE("a stale trajectory without a stop fails SG4") {
    tick_vehicle(recs, 20)["age"] = 31;
    const auto r = evaluate_goals(recs);
    CHECK_FALSE(r.goals.at("SG4").pass);
  }
  SUBCASE("an e-stop path outage outside H8 fails SG6") {
    for (auto& r : recs) {
      if (r["kind"] == "tick" && r["tick"] == 30) r["payload"]["estop_path"] = false;
    }
    CHECK_FALSE(evaluate_goals(recs).goals.at("SG6").pass);
  }
  SUBCASE("an e-stop that does not bring the vehicle to rest fails SG6") {
    for (Tick t = 41; t < 200; ++t) {
      tick_vehicle(recs, t)["speed"] = 1.0;
    }
    CHECK_FALSE(evaluate_goals(recs).goals.at("SG6").pass);
  }
  SUBCASE("a collision record is counted") {
    nlohmann::json c = {{"kind", "collision"},
                        {"tick", 50},
                        {"payload", to_json(CollisionEvent{50, VehicleId{1}, "P1", "pedestrian", 1.0})}};
    recs.insert(recs.end() - 1, c);
    const auto r = evaluate_goals(recs);
    CHECK(r.collisions == 1);
    CHECK(r.pedestrian_collisions == 1);
    CHECK(r.violation());
  }
}
