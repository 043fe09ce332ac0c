#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "ixda/geometry.hpp"
#include "ixda/scenario.hpp"
#include "ixda/units.hpp"
#include "ixda/world.hpp"
#include "support.hpp"

using namespace ixda;

TEST_CASE("mph conversion") {
  CHECK(mph_to_mps(0) == 0.0);
  CHECK(mph_to_mps(10) == doctest::Approx(4.4704).epsilon(1e-12));
  CHECK(mph_to_mps(25) == doctest::Approx(11.176).epsilon(1e-12));
  CHECK_THROWS_AS(mph_to_mps(-1), std::invalid_argument);
  CHECK_THROWS_AS(mph_to_mps(std::numeric_limits<double>::infinity()), std::invalid_argument);
}

TEST_CASE("stopping distance brackets the regime boundary") {
  CHECK(stopping_distance(0, 4.0) == 0.0);
  // 4.4704^2 / 8 and 11.176^2 / 8 by hand.
  CHECK(stopping_distance(4.4704, 4.0) == doctest::Approx(2.498).epsilon(1e-3));
  CHECK(stopping_distance(4.4704, 4.0) < 10.0);
  CHECK(stopping_distance(11.176, 4.0) == doctest::Approx(15.61).epsilon(1e-3));
  CHECK(stopping_distance(11.176, 4.0) > 10.0);
  CHECK_THROWS_AS(stopping_distance(-1, 4.0), std::invalid_argument);
  CHECK_THROWS_AS(stopping_distance(1, 0.0), std::invalid_argument);
}

TEST_CASE("kinematic step floors speed at zero") {
  const auto a = kinematic_step(4.0, -4.0);
  CHECK(a.speed == doctest::Approx(3.6));
  CHECK(a.distance == doctest::Approx(0.38));
  const auto b = kinematic_step(0.3, -6.0);
  CHECK(b.speed == 0.0);
  // Stops after 0.05 s having covered 0.3 * 0.05 / 2.
  CHECK(b.distance == doctest::Approx(0.0075));
  CHECK(ticks_to_stop(4.4704, 6.0) == 8);
  CHECK(discrete_braking_distance(4.4704, 6.0) == doctest::Approx(stopping_distance(4.4704, 6.0)));
}

TEST_CASE("geometry primitives") {
  const Polygon sq{{0, 0}, {2, 0}, {2, 2}, {0, 2}};
  CHECK(is_convex(sq));
  CHECK(contains(sq, {1, 1}));
  CHECK(contains(sq, {2, 1}));
  CHECK_FALSE(contains(sq, {2.1, 1}));
  CHECK(centroid(sq) == Vec2{1, 1});
  CHECK(point_polygon_distance(sq, {3, 1}) == doctest::Approx(1.0));
  CHECK(point_polygon_distance(sq, {1, 1}) == 0.0);
  const Polygon right{{2, 0}, {4, 0}, {4, 2}, {2, 2}};
  CHECK_FALSE(interiors_overlap(sq, right));
  const Polygon shifted{{1.5, 0}, {3.5, 0}, {3.5, 2}, {1.5, 2}};
  CHECK(interiors_overlap(sq, shifted));
  CHECK(normalize_angle(kPi) == doctest::Approx(-kPi));
  CHECK(normalize_angle(3 * kPi / 2) == doctest::Approx(-kPi / 2));

  const OrientedBox box{{0, 0}, 0.0, 3.0, 1.1};
  CHECK(box_point_distance(box, {5, 0}) == doctest::Approx(2.0));
  CHECK(box_circle_intersect(box, {3.3, 0}, 0.3));
  CHECK_FALSE(box_circle_intersect(box, {3.31, 0}, 0.3));
  CHECK(boxes_intersect(box, {{6, 0}, 0.0, 3.0, 1.1}));
  CHECK_FALSE(boxes_intersect(box, {{6.01, 0}, 0.0, 3.0, 1.1}));
}

TEST_CASE("default map") {
  const DepotMap map = make_default_map();
  CHECK(map.zones.size() == 6);
  for (const auto& z : map.zones) {
    CHECK(is_convex(z.footprint));
    CHECK(static_cast<int>(z.slots.size()) == z.capacity);
  }
  for (const auto& e : map.lanes.edges()) {
    CHECK(e.length <= 2.0 + 1e-9);
    CHECK(e.speed_cap <= kHighSpeedMaxCap);
  }
  CHECK(map.estop_buttons.size() == 4);
  CHECK_NOTHROW(validate_map(map, "/map"));
}

TEST_CASE("zone_at") {
  const DepotMap map = make_default_map();
  const Zone* dropoff = map.find_zone("dropoff");
  REQUIRE(dropoff);
  CHECK(zone_at(map, centroid(dropoff->footprint)) == dropoff);
  CHECK(zone_at(map, {110, 45}) == nullptr);

  SUBCASE("shared boundary goes to the smallest id") {
    DepotMap m;
    Zone a{"b-zone", ZoneKind::Wash, {{0, 0}, {10, 0}, {10, 10}, {0, 10}}, 1, {}};
    Zone b{"a-zone", ZoneKind::Charging, {{10, 0}, {20, 0}, {20, 10}, {10, 10}}, 1, {}};
    m.zones = {a, b};
    const Zone* z = zone_at(m, {10, 5});
    REQUIRE(z);
    CHECK(z->id == "a-zone");
    CHECK(zone_at(m, {5, 5})->id == "b-zone");
  }
}

TEST_CASE("lane graph search") {
  const DepotMap map = make_default_map();
  const Zone* dropoff = map.find_zone("dropoff");
  const Zone* wash = map.find_zone("wash");
  const auto path = map.lanes.shortest_path(dropoff->slots.front(), wash->slots.front());
  REQUIRE(path);
  NodeId at = dropoff->slots.front();
  for (EdgeId e : *path) {
    CHECK(map.lanes.edge(e).from == at);
    at = map.lanes.edge(e).to;
  }
  CHECK(at == wash->slots.front());
  CHECK(map.lanes.shortest_path(at, at)->empty());
  const DepotMap cut{map.zones, map.lanes.without_edge(path->front()), {}, {}};
  CHECK_FALSE(cut.lanes.shortest_path(dropoff->slots.front(), wash->slots.front()));
}

TEST_CASE("load_scenario") {
  SUBCASE("bundled nominal scenario") {
    const ScenarioConfig cfg = test::scenario("ns_controlled.json");
    CHECK(cfg.mode.tag == SpeedRegime::NominalSpeed);
    CHECK(cfg.mode.speed_cap == kNominalSpeedCap);
    CHECK(cfg.traffic == TrafficSituation::Controlled);
    CHECK(cfg.vehicles.size() == 3);
    CHECK(cfg.duration_ticks() == 3000);
  }

  SUBCASE("tick other than 0.1 is rejected") {
    auto doc = test::scenario_json("ns_controlled.json");
    doc["tick_s"] = 0.05;
    try {
      parse_scenario(doc);
      FAIL("expected ScenarioError");
    } catch (const ScenarioError& e) {
      CHECK(e.path() == "/tick_s");
      CHECK(std::string(e.what()).find("tick must equal 0.1") != std::string::npos);
    }
  }

  SUBCASE("an unreachable zone is named") {
    const DepotMap map = make_default_map();
    const Zone* wash = map.find_zone("wash");
    // The only way into the bay is the edge feeding its rear slot chain.
    NodeId n = wash->slots.back();
    while (map.lanes.in_edges(n).size() == 1 && !map.lanes.is_junction(map.lanes.edge(map.lanes.in_edges(n)[0]).from)) {
      n = map.lanes.edge(map.lanes.in_edges(n)[0]).from;
    }
    const EdgeId cut = map.lanes.in_edges(n).at(0);
    DepotMap broken = map;
    broken.lanes = map.lanes.without_edge(cut);
    auto doc = test::scenario_json("ns_controlled.json");
    doc["map"] = map_to_json(broken);
    try {
      parse_scenario(doc);
      FAIL("expected ScenarioError");
    } catch (const ScenarioError& e) {
      CHECK(std::string(e.what()).find("wash") != std::string::npos);
    }
  }

  SUBCASE("structural errors carry a pointer") {
    auto doc = test::scenario_json("ns_controlled.json");
    doc["vehicles"][0]["mission"] = {"Wash", "PickUp"};
    CHECK_THROWS_AS(parse_scenario(doc), ScenarioError);
    doc = test::scenario_json("ns_controlled.json");
    doc["mode"]["speed_cap"] = 6.0;
    CHECK_THROWS_AS(parse_scenario(doc), ScenarioError);
    doc = test::scenario_json("ns_controlled.json");
    doc["traffic"] = "Sometimes";
    CHECK_THROWS_AS(parse_scenario(doc), ScenarioError);
    CHECK_THROWS_AS(load_scenario("{not json"), ScenarioError);
  }

  SUBCASE("serialize round-trips") {
    const ScenarioConfig cfg = test::scenario("suite/h5_mitigated.json");
    const ScenarioConfig again = parse_scenario(serialize(cfg));
    CHECK(serialize(again) == serialize(cfg));
  }
}
