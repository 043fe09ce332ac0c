#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ixda/vehicle.hpp"

using namespace ixda;

namespace {

const VehicleParams kParams{};

VehicleState moving(double speed) {
  VehicleState v;
  v.id = VehicleId{1};
  v.speed = speed;
  v.mode = DriveMode::Following;
  Trajectory t;
  t.issued_tick = 0;
  for (int k = 0; k <= 30; ++k) {
    t.points.push_back({{speed * 0.1 * k, 0, 0}, speed, k});
  }
  v.active_traj = t;
  return v;
}

}  // namespace

TEST_CASE("aodca gate") {
  const AodcaConfig cfg;
  VehicleState v = moving(4.47);
  // The footprint front sits 3 m ahead of the centre; obstacles are placed from it.
  const double front = kParams.length / 2.0;

  SUBCASE("obstacle 3 m ahead inside the margin-adjusted envelope") {
    // Envelope 4.47^2 / 8 = 2.50 m, plus radius 0.3 and margin 1.0 = 3.8 m.
    const auto r = aodca_scan(v, {{{front + 3.0, 0}, 0.3}}, cfg, kParams);
    CHECK(r.detected);
    CHECK(r.nearest == doctest::Approx(3.0));
  }
  SUBCASE("nothing around") {
    const auto r = aodca_scan(v, {}, cfg, kParams);
    CHECK_FALSE(r.detected);
    CHECK(std::isinf(r.nearest));
  }
  SUBCASE("beyond range") {
    const auto r = aodca_scan(v, {{{front + 12.0, 0}, 0.3}}, cfg, kParams);
    CHECK_FALSE(r.detected);
  }
  SUBCASE("in range but outside the envelope") {
    const auto r = aodca_scan(v, {{{front + 5.0, 0}, 0.3}}, cfg, kParams);
    CHECK_FALSE(r.detected);
    CHECK(r.nearest == doctest::Approx(5.0));
  }
  SUBCASE("behind the bumper field of view") {
    const auto r = aodca_scan(v, {{{-front - 1.0, 0}, 0.3}}, cfg, kParams);
    CHECK_FALSE(r.detected);
  }
  SUBCASE("stationary vehicle still guards its margin") {
    v.speed = 0.0;
    CHECK(aodca_scan(v, {{{front + 1.0, 0}, 0.3}}, cfg, kParams).detected);
    CHECK_FALSE(aodca_scan(v, {{{front + 1.5, 0}, 0.3}}, cfg, kParams).detected);
  }
}

TEST_CASE("vcu mode automaton") {
  const VehicleState v = moving(4.0);

  SUBCASE("watchdog fires once age exceeds 30 ticks") {
    VcuInputs in;
    in.traj_age_ticks = 30;
    CHECK(vcu_step(v, in, 30, kParams).mode == DriveMode::Following);
    in.traj_age_ticks = 31;
    const auto out = vcu_step(v, in, 31, kParams);
    CHECK(out.mode == DriveMode::CommLossStop);
    CHECK(out.accel == -kParams.service_decel);
    CHECK(out.lights == Lights::Hazard);
    in.watchdog_enabled = false;
    CHECK(vcu_step(v, in, 31, kParams).mode == DriveMode::Following);
  }

  SUBCASE("e-stop outranks AEB") {
    VcuInputs in;
    in.estop_cmd = true;
    in.aodca_detected = true;
    const auto out = vcu_step(v, in, 0, kParams);
    CHECK(out.mode == DriveMode::EstopStop);
    CHECK(out.accel == -kParams.aeb_decel);
  }

  SUBCASE("all 16 health combinations") {
    for (int bits = 0; bits < 16; ++bits) {
      VcuInputs in;
      in.health = {(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0, (bits & 8) != 0};
      const bool significant = !in.health.power_ok || (!in.health.brake_primary_ok && !in.health.brake_secondary_ok);
      CAPTURE(bits);
      CHECK(in.health.significant_failure() == significant);
      const auto out = vcu_step(v, in, 0, kParams);
      CHECK((out.mode == DriveMode::FaultStop) == significant);
      if (!significant) {
        CHECK(out.mode == DriveMode::Following);
      }
    }
  }

  SUBCASE("stop modes latch") {
    VehicleState stopped = v;
    stopped.mode = DriveMode::FaultStop;
    VcuInputs in;
    CHECK(vcu_step(stopped, in, 5, kParams).mode == DriveMode::FaultStop);
    stopped.mode = DriveMode::EstopStop;
    CHECK(vcu_step(stopped, in, 5, kParams).mode == DriveMode::EstopStop);
    in.estop_release = true;
    CHECK(vcu_step(stopped, in, 5, kParams).mode == DriveMode::Following);
  }

  SUBCASE("AEB releases after a clear dwell at rest") {
    VehicleState s = v;
    s.mode = DriveMode::AebStop;
    s.speed = 0.0;
    VcuInputs in;
    for (int k = 0; k < 9; ++k) {
      const auto out = vcu_step(s, in, k, kParams);
      REQUIRE(out.mode == DriveMode::AebStop);
      s.aeb_clear_ticks = out.aeb_clear_ticks;
    }
    CHECK(vcu_step(s, in, 9, kParams).mode == DriveMode::Following);
  }

  SUBCASE("stations open doors only at rest") {
    VehicleState s = v;
    s.speed = 0.0;
    VcuInputs in;
    in.station_cmd = StationCommand::Enter;
    const auto out = vcu_step(s, in, 0, kParams);
    CHECK(out.mode == DriveMode::AtStation);
    CHECK(out.doors == Doors::Open);
    s.mode = DriveMode::AtStation;
    in.station_cmd = StationCommand::Exit;
    CHECK(vcu_step(s, in, 1, kParams).mode == DriveMode::Following);
  }

  SUBCASE("limiter caps the followed speed") {
    VehicleState s = v;
    s.speed = 4.4704;
    VcuInputs in;
    in.target_speed_factor = 3.0;
    in.speed_cap = 4.4704;
    CHECK(vcu_step(s, in, 1, kParams).accel == 0.0);
    in.speed_cap.reset();
    CHECK(vcu_step(s, in, 1, kParams).accel == kParams.max_accel);
  }
}

TEST_CASE("limiters") {
  CHECK(speed_limiter(11.176, 4.4704) == 4.4704);
  CHECK(speed_limiter(3.0, 4.4704) == 3.0);
  CHECK(speed_limiter(6.7056, 6.7056) == 6.7056);
  CHECK(accel_limiter(10.0, 2.5, 4.0) == 2.5);
  CHECK(accel_limiter(-10.0, 2.5, 4.0) == -4.0);
}

TEST_CASE("actuation under brake and power faults") {
  HealthStatus h;
  CHECK(actuate(-6.0, h, 4.0, kParams) == -6.0);
  h.brake_primary_ok = false;
  CHECK(actuate(-6.0, h, 4.0, kParams) == -6.0);
  h.brake_secondary_ok = false;
  CHECK(actuate(-6.0, h, 4.0, kParams) == -kParams.coast_decel);
  h = {};
  h.power_ok = false;
  CHECK(actuate(2.0, h, 4.0, kParams) == -kParams.coast_decel);
  CHECK(actuate(-1.0, {}, 0.0, kParams) == 0.0);
}

TEST_CASE("integrate") {
  VehicleState v = moving(4.0);
  auto next = integrate(v, -4.0, 0.1);
  CHECK(next.speed == doctest::Approx(3.6));
  CHECK(next.pose.x == doctest::Approx(0.38));
  v.speed = 0.3;
  next = integrate(v, -6.0, 0.1);
  CHECK(next.speed == 0.0);
  CHECK(next.pose.x == doctest::Approx(0.0075));

  SUBCASE("follows the polyline around a corner") {
    VehicleState c;
    c.speed = 1.0;
    Trajectory t;
    t.points = {{{0, 0, 0}, 1.0, 0}, {{1, 0, 0}, 1.0, 1}, {{1, 1, kPi / 2}, 1.0, 2}};
    accept_trajectory(c, t, 0);
    c.traj_progress = 1.0;
    const auto out = integrate(c, 0.0, 0.5);
    CHECK(out.pose.x == doctest::Approx(1.0));
    CHECK(out.pose.y == doctest::Approx(0.5));
    CHECK(out.pose.heading == doctest::Approx(kPi / 2));
  }
}

TEST_CASE("trajectory lookup and validation") {
  Trajectory t;
  CHECK_THROWS_AS(validate(t), std::invalid_argument);
  t.issued_tick = 10;
  t.points = {{{0, 0, 0}, 1.0, 0}, {{1, 0, 0}, 2.0, 1}, {{2, 0, 0}, 3.0, 2}};
  CHECK_NOTHROW(validate(t));
  CHECK(t.at(11).target_speed == 2.0);
  CHECK(t.at(50).target_speed == 3.0);
  CHECK(t.at(5).target_speed == 1.0);
  t.points[2].tick_offset = 1;
  CHECK_THROWS_AS(validate(t), std::invalid_argument);
}

TEST_CASE("mode names round-trip") {
  for (auto m : {DriveMode::Idle, DriveMode::Following, DriveMode::AebStop, DriveMode::CommLossStop,
                 DriveMode::FaultStop, DriveMode::EstopStop, DriveMode::AtStation}) {
    CHECK(drive_mode_from_string(to_string(m)) == m);
  }
  CHECK(stop_priority(DriveMode::EstopStop) > stop_priority(DriveMode::FaultStop));
  CHECK(stop_priority(DriveMode::FaultStop) > stop_priority(DriveMode::AebStop));
  CHECK(stop_priority(DriveMode::AebStop) > stop_priority(DriveMode::CommLossStop));
}
