#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "ixda/net.hpp"
#include "ixda/vehicle.hpp"

using namespace ixda;

namespace {

Message trajectory_msg(const std::string& to, Tick now) {
  Trajectory t;
  t.issued_tick = now;
  t.horizon_ticks = 2;
  for (int k = 0; k <= 2; ++k) {
    t.points.push_back({{1.5 * k, -0.25, 0.1}, 4.0 - k, k});
  }
  return {kIxEndpoint, to, now, t, {}};
}

std::vector<Message> every_kind() {
  StateReport r;
  r.pose = {3, 4, 0.5};
  r.speed = 2.5;
  r.mode = DriveMode::AebStop;
  r.health.brake_secondary_ok = false;
  r.warnings = {"brake_secondary"};
  r.aodca_nearest = 2.25;
  return {trajectory_msg("V1", 7),
          {kIxEndpoint, "V1", 8, EmergencyStopPayload{"button ES-S"}, {}},
          {kIxEndpoint, "V2", 9, StationPayload{false, "wash"}, {}},
          {"V1", kIxEndpoint, 10, r, {}},
          {"V3", kIxEndpoint, 11, OnboardRequestPayload{{"AODCA", "AEB"}}, {}},
          {kIxEndpoint, "V3", 12, OnboardAckPayload{false, "missing WATCHDOG_3S"}, {}},
          {kIxEndpoint, "V1", 13, EstopReleasePayload{}, {}},
          {kIxEndpoint, "*", 14, HazardClearPayload{"Fire"}, {}}};
}

}  // namespace

TEST_CASE("wire format round-trips every kind") {
  for (const auto& m : every_kind()) {
    CAPTURE(to_string(m.kind()));
    const auto bytes = serialize(m);
    CHECK(deserialize(bytes) == m);
    CHECK(message_from_json_hex(message_to_json_hex(m)) == m);
  }
  auto bytes = serialize(every_kind().front());
  bytes.pop_back();
  CHECK_THROWS_AS(deserialize(bytes), std::invalid_argument);
  CHECK_THROWS_AS(deserialize({}), std::invalid_argument);
  // Trailing garbage with a consistent-looking body is still a length mismatch.
  bytes = serialize(every_kind()[1]);
  bytes.push_back(0);
  CHECK_THROWS_AS(deserialize(bytes), std::invalid_argument);
  bytes = serialize(every_kind()[1]);
  bytes[4] = 9;
  CHECK_THROWS_AS(deserialize(bytes), std::invalid_argument);
}

TEST_CASE("authentication") {
  const AuthKey k1 = derive_key(1, "V1");
  const AuthKey k2 = derive_key(1, "V2");
  CHECK(k1 != k2);
  CHECK(derive_key(1, "V1") == k1);
  CHECK(derive_key(2, "V1") != k1);

  Message m = trajectory_msg("V1", 3);
  sign(m, k1);
  CHECK(verify(m, k1));

  SUBCASE("one payload byte flipped") {
    auto bytes = serialize(m);
    // Flip a byte inside the last point's target speed.
    bytes[bytes.size() - 6] ^= 0x01;
    Message tampered = deserialize(bytes);
    tampered.auth_tag = m.auth_tag;
    CHECK(compute_tag(tampered, k1) != m.auth_tag);
    CHECK_FALSE(verify(tampered, k1));
  }
  SUBCASE("another vehicle's key") {
    Message other = trajectory_msg("V1", 3);
    sign(other, k2);
    CHECK_FALSE(verify(other, k1));
  }
  SUBCASE("header fields are covered") {
    Message moved = m;
    moved.sent_tick = 4;
    CHECK_FALSE(verify(moved, k1));
  }
}

TEST_CASE("channel delivery") {
  SUBCASE("clean link delivers after the fixed delay") {
    ChannelModel ch({1, 0, 0.0, 0}, 7);
    CHECK(ch.send(trajectory_msg("V1", 5), Direction::Down, 5) == Tick{6});
    CHECK(ch.deliver_due(5, Direction::Down).empty());
    CHECK(ch.deliver_due(6, Direction::Down).size() == 1);
    CHECK(ch.deliver_due(7, Direction::Down).empty());
  }
  SUBCASE("disconnect window drops") {
    ChannelModel ch({1, 0, 0.0, 0}, 7);
    ch.set_impairments({{"V1", true, 0.0, 0}});
    CHECK_FALSE(ch.send(trajectory_msg("V1", 5), Direction::Down, 5));
    CHECK(ch.send(trajectory_msg("V2", 5), Direction::Down, 5) == Tick{6});
    ch.set_impairments({{"up:V1", true, 0.0, 0}});
    CHECK(ch.send(trajectory_msg("V1", 5), Direction::Down, 5) == Tick{6});
  }
  SUBCASE("certain loss") {
    ChannelModel ch({1, 0, 1.0, 0}, 7);
    for (Tick t = 0; t < 100; ++t) {
      CHECK_FALSE(ch.send(trajectory_msg("V1", t), Direction::Down, t));
    }
  }
  SUBCASE("same-tick messages keep send order") {
    ChannelModel ch({1, 0, 0.0, 0}, 7);
    Message a{kIxEndpoint, "V1", 3, EmergencyStopPayload{"a"}, {}};
    Message b{kIxEndpoint, "V1", 3, EmergencyStopPayload{"b"}, {}};
    ch.send(a, Direction::Down, 3);
    ch.send(b, Direction::Down, 3);
    const auto out = ch.deliver_due(4, Direction::Down);
    REQUIRE(out.size() == 2);
    CHECK(out[0] == a);
    CHECK(out[1] == b);
  }
  SUBCASE("jitter never reorders a link") {
    ChannelModel ch({1, 0, 0.0, 25}, 11);
    Tick last = 0;
    for (Tick t = 0; t < 200; ++t) {
      const auto at = ch.send(trajectory_msg("V1", t), Direction::Down, t);
      REQUIRE(at);
      CHECK(*at >= last);
      CHECK(*at >= t + 1);
      last = *at;
    }
  }
  SUBCASE("selectors") {
    CHECK(selector_matches("*", "down:V4"));
    CHECK(selector_matches("V4", "up:V4"));
    CHECK_FALSE(selector_matches("V4", "up:V40"));
    CHECK(selector_matches("down:V4", "down:V4"));
    CHECK_FALSE(selector_matches("down:V4", "up:V4"));
  }
  SUBCASE("save and restore keep the random stream") {
    ChannelModel a({1, 0, 0.3, 5}, 99);
    for (Tick t = 0; t < 20; ++t) a.send(trajectory_msg("V1", t), Direction::Down, t);
    ChannelModel b = ChannelModel::restore(a.save());
    CHECK(b.in_flight() == a.in_flight());
    for (Tick t = 20; t < 60; ++t) {
      CHECK(a.send(trajectory_msg("V1", t), Direction::Down, t) == b.send(trajectory_msg("V1", t), Direction::Down, t));
    }
  }
}

TEST_CASE("intermittent link can starve the watchdog") {
  // Trajectories every tick through a drop 0.5 / jitter 25 burst; track the
  // age of the freshest delivered plan and hand it to the VCU.
  Tick worst = 0;
  std::uint64_t seed = 0;
  for (std::uint64_t s = 1; s <= 20 && worst <= kWatchdogTicks; ++s) {
    ChannelModel ch({1, 0, 0.0, 0}, s);
    ch.set_impairments({{"down:V1", false, 0.5, 25}});
    Tick freshest = 0;
    for (Tick now = 0; now < 300; ++now) {
      ch.send(trajectory_msg("V1", now), Direction::Down, now);
      for (const auto& m : ch.deliver_due(now, Direction::Down)) {
        freshest = std::max(freshest, m.sent_tick);
      }
      if (now - freshest > worst) {
        worst = now - freshest;
        seed = s;
      }
    }
  }
  CAPTURE(seed);
  REQUIRE(worst > kWatchdogTicks);

  VehicleState v;
  v.mode = DriveMode::Following;
  v.speed = 4.0;
  v.active_traj = std::get<Trajectory>(trajectory_msg("V1", 0).payload);
  VcuInputs in;
  in.traj_age_ticks = worst;
  CHECK(vcu_step(v, in, worst, VehicleParams{}).mode == DriveMode::CommLossStop);
}
