#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ixda/geometry.hpp"
#include "ixda/units.hpp"
#include "ixda/world.hpp"

namespace ixda {

struct HealthStatus {
  bool brake_primary_ok = true;
  bool brake_secondary_ok = true;
  bool power_ok = true;
  bool aodca_ok = true;

  bool significant_failure() const {
    return !power_ok || (!brake_primary_ok && !brake_secondary_ok);
  }
  bool any_brake() const { return brake_primary_ok || brake_secondary_ok; }
  friend bool operator==(const HealthStatus&, const HealthStatus&) = default;
};

enum class DriveMode { Idle, Following, AebStop, CommLossStop, FaultStop, EstopStop, AtStation };

const char* to_string(DriveMode m);
std::optional<DriveMode> drive_mode_from_string(std::string_view s);
bool is_stop_mode(DriveMode m);
/// Rank used by the mode automaton and the monitors; higher wins.
int stop_priority(DriveMode m);

enum class Lights { Off, Drive, Brake, Hazard };
enum class Doors { Closed, Open };
const char* to_string(Lights l);
const char* to_string(Doors d);
std::optional<Lights> lights_from_string(std::string_view s);
std::optional<Doors> doors_from_string(std::string_view s);

struct TrajectoryPoint {
  Pose pose;
  double target_speed = 0.0;
  int tick_offset = 0;

  friend bool operator==(const TrajectoryPoint&, const TrajectoryPoint&) = default;
};

/// Point k holds the planned pose and speed at the end of tick issued_tick + k.
/// Point 0 is the state the plan was computed from.
struct Trajectory {
  Tick issued_tick = 0;
  std::vector<TrajectoryPoint> points;
  int horizon_ticks = 0;

  /// Point for `now`, clamped to the last point.
  const TrajectoryPoint& at(Tick now) const;
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Throws std::invalid_argument if points are empty or offsets not increasing.
void validate(const Trajectory& traj);

struct VehicleParams {
  double service_decel = 4.0;
  double aeb_decel = 6.0;
  double max_accel = 2.5;
  /// Deceleration from rolling resistance alone, with no working brake.
  double coast_decel = 0.3;
  double length = 6.0;
  double width = 2.2;

  friend bool operator==(const VehicleParams&, const VehicleParams&) = default;
};

struct AodcaConfig {
  double range = 10.0;
  /// Field of view centred on the heading, apex at the front bumper.
  double fov = kPi;
  double aeb_decel = 6.0;
  double margin = 1.0;

  friend bool operator==(const AodcaConfig&, const AodcaConfig&) = default;
};

struct Obstacle {
  Vec2 position;
  double radius = 0.3;
};

struct AodcaResult {
  bool detected = false;
  /// Centre-to-footprint distance of the nearest obstacle in view; infinity if none.
  double nearest = 0.0;
};

struct VehicleState {
  VehicleId id{};
  Pose pose;
  double speed = 0.0;
  double accel = 0.0;
  DriveMode mode = DriveMode::Idle;
  HealthStatus health;
  Tick last_traj_tick = 0;
  std::optional<Trajectory> active_traj;
  /// Arc length travelled along the active trajectory polyline.
  double traj_progress = 0.0;
  Lights lights = Lights::Off;
  Doors doors = Doors::Closed;
  std::vector<std::string> warnings;
  /// Consecutive stationary ticks with AODCA clear while in AebStop.
  int aeb_clear_ticks = 0;

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

OrientedBox footprint(const VehicleState& v, const VehicleParams& params);
OrientedBox footprint(const Pose& pose, const VehicleParams& params);

AodcaResult aodca_scan(const VehicleState& self, const std::vector<Obstacle>& obstacles,
                       const AodcaConfig& cfg, const VehicleParams& params);

/// Circles covering another vehicle's body, used as AODCA obstacles.
std::vector<Obstacle> body_circles(const Pose& pose, const VehicleParams& params);

enum class StationCommand { None, Enter, Exit };

struct VcuInputs {
  Tick traj_age_ticks = 0;
  bool aodca_detected = false;
  bool estop_cmd = false;
  bool estop_release = false;
  StationCommand station_cmd = StationCommand::None;
  HealthStatus health;
  /// Speed cap enforced by the limiter; disabled when nullopt.
  std::optional<double> speed_cap;
  /// Multiplier applied to trajectory target speeds (unintended acceleration).
  double target_speed_factor = 1.0;
  /// Watchdog check; disabled by the mitigation switch.
  bool watchdog_enabled = true;
};

struct VcuOutput {
  DriveMode mode = DriveMode::Idle;
  double accel = 0.0;
  int aeb_clear_ticks = 0;
  Doors doors = Doors::Closed;
  Lights lights = Lights::Off;

  friend bool operator==(const VcuOutput&, const VcuOutput&) = default;
};

/// The VCU mode automaton. Pure in (self, inputs, now).
VcuOutput vcu_step(const VehicleState& self, const VcuInputs& inputs, Tick now,
                   const VehicleParams& params);

double speed_limiter(double commanded_speed, double cap);
/// Clamps a commanded acceleration to [-max_decel, max_accel].
double accel_limiter(double accel, double max_accel, double max_decel);

/// Acceleration the drivetrain delivers for a command, given brake and power health.
double actuate(double commanded, const HealthStatus& health, double speed, const VehicleParams& params);

/// Advances speed and pose one tick. The pose moves along the active
/// trajectory polyline, or straight ahead when there is none.
VehicleState integrate(const VehicleState& self, double accel, double dt = kTickSeconds);

/// Accepts a trajectory: resets progress to the projection of the current pose.
void accept_trajectory(VehicleState& v, Trajectory traj, Tick now);

/// Polyline helpers over trajectory poses.
Pose polyline_pose(const Trajectory& traj, double arc);
double polyline_project(const Trajectory& traj, Vec2 p);
double polyline_distance(const Trajectory& traj, Vec2 p);

}  // namespace ixda
