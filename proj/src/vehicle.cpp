#include "ixda/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ixda {

const char* to_string(DriveMode m) {
  switch (m) {
    case DriveMode::Idle: return "Idle";
    case DriveMode::Following: return "Following";
    case DriveMode::AebStop: return "AebStop";
    case DriveMode::CommLossStop: return "CommLossStop";
    case DriveMode::FaultStop: return "FaultStop";
    case DriveMode::EstopStop: return "EstopStop";
    case DriveMode::AtStation: return "AtStation";
  }
  return "?";
}

std::optional<DriveMode> drive_mode_from_string(std::string_view s) {
  for (auto m : {DriveMode::Idle, DriveMode::Following, DriveMode::AebStop, DriveMode::CommLossStop,
                 DriveMode::FaultStop, DriveMode::EstopStop, DriveMode::AtStation}) {
    if (s == to_string(m)) {
      return m;
    }
  }
  return std::nullopt;
}

bool is_stop_mode(DriveMode m) {
  return m == DriveMode::AebStop || m == DriveMode::CommLossStop || m == DriveMode::FaultStop ||
         m == DriveMode::EstopStop;
}

int stop_priority(DriveMode m) {
  switch (m) {
    case DriveMode::EstopStop: return 4;
    case DriveMode::FaultStop: return 3;
    case DriveMode::AebStop: return 2;
    case DriveMode::CommLossStop: return 1;
    default: return 0;
  }
}

const char* to_string(Lights l) {
  switch (l) {
    case Lights::Off: return "Off";
    case Lights::Drive: return "Drive";
    case Lights::Brake: return "Brake";
    case Lights::Hazard: return "Hazard";
  }
  return "?";
}

const char* to_string(Doors d) { return d == Doors::Open ? "Open" : "Closed"; }

std::optional<Lights> lights_from_string(std::string_view s) {
  for (auto l : {Lights::Off, Lights::Drive, Lights::Brake, Lights::Hazard}) {
    if (s == to_string(l)) {
      return l;
    }
  }
  return std::nullopt;
}

std::optional<Doors> doors_from_string(std::string_view s) {
  if (s == "Open") return Doors::Open;
  if (s == "Closed") return Doors::Closed;
  return std::nullopt;
}

const TrajectoryPoint& Trajectory::at(Tick now) const {
  const Tick offset = now - issued_tick;
  // Offsets are dense from 0 in planner output; fall back to a scan otherwise.
  if (offset >= 0 && offset < static_cast<Tick>(points.size()) && points[offset].tick_offset == offset) {
    return points[offset];
  }
  const TrajectoryPoint* best = &points.front();
  for (const auto& p : points) {
    if (p.tick_offset <= offset) {
      best = &p;
    }
  }
  return *best;
}

void validate(const Trajectory& traj) {
  if (traj.points.empty()) {
    throw std::invalid_argument("trajectory has no points");
  }
  for (std::size_t i = 1; i < traj.points.size(); ++i) {
    if (traj.points[i].tick_offset <= traj.points[i - 1].tick_offset) {
      throw std::invalid_argument("trajectory tick offsets must be strictly increasing");
    }
  }
}

OrientedBox footprint(const Pose& pose, const VehicleParams& params) {
  return {pose.position(), pose.heading, params.length / 2.0, params.width / 2.0};
}

OrientedBox footprint(const VehicleState& v, const VehicleParams& params) {
  return footprint(v.pose, params);
}

std::vector<Obstacle> body_circles(const Pose& pose, const VehicleParams& params) {
  const Vec2 dir{std::cos(pose.heading), std::sin(pose.heading)};
  const double step = params.length / 3.0;
  const double half = params.length / 6.0;
  const double r = std::hypot(half, params.width / 2.0);
  return {{pose.position() - dir * step, r}, {pose.position(), r}, {pose.position() + dir * step, r}};
}

AodcaResult aodca_scan(const VehicleState& self, const std::vector<Obstacle>& obstacles,
                       const AodcaConfig& cfg, const VehicleParams& params) {
  const OrientedBox box = footprint(self, params);
  const Vec2 dir{std::cos(self.pose.heading), std::sin(self.pose.heading)};
  const Vec2 bumper = box.center + dir * box.half_length;
  const double envelope = stopping_distance(self.speed, params.service_decel);
  AodcaResult out{false, std::numeric_limits<double>::infinity()};
  for (const auto& o : obstacles) {
    if (cfg.fov < 2.0 * kPi) {
      const Vec2 rel = o.position - bumper;
      if (norm(rel) > 1e-9) {
        const double off = std::abs(normalize_angle(std::atan2(rel.y, rel.x) - self.pose.heading));
        if (off > cfg.fov / 2.0 + 1e-12) {
          continue;
        }
      }
    }
    const double d = box_point_distance(box, o.position);
    if (d > cfg.range) {
      continue;
    }
    out.nearest = std::min(out.nearest, d);
    if (d <= std::min(cfg.range, envelope + o.radius + cfg.margin)) {
      out.detected = true;
    }
  }
  return out;
}

double speed_limiter(double commanded_speed, double cap) { return std::min(commanded_speed, cap); }

double accel_limiter(double accel, double max_accel, double max_decel) {
  return std::clamp(accel, -max_decel, max_accel);
}

VcuOutput vcu_step(const VehicleState& self, const VcuInputs& in, Tick now,
                   const VehicleParams& params) {
  const DriveMode prev = self.mode;
  const bool stationary = self.speed <= 0.0;

  int clear = 0;
  if (prev == DriveMode::AebStop && stationary && !in.aodca_detected) {
    clear = self.aeb_clear_ticks + 1;
  }
  constexpr int kAebReleaseTicks = 10;

  const bool estop = in.estop_cmd || (prev == DriveMode::EstopStop && !in.estop_release);
  const bool fault = in.health.significant_failure() || prev == DriveMode::FaultStop;
  const bool aeb = in.aodca_detected || (prev == DriveMode::AebStop && clear < kAebReleaseTicks);
  const bool stale = in.watchdog_enabled && in.traj_age_ticks > kWatchdogTicks;
  const bool comm = stale || (prev == DriveMode::CommLossStop && !(stationary && in.traj_age_ticks == 0));

  VcuOutput out;
  if (estop) {
    out.mode = DriveMode::EstopStop;
  } else if (fault) {
    out.mode = DriveMode::FaultStop;
  } else if (aeb) {
    out.mode = DriveMode::AebStop;
    out.aeb_clear_ticks = clear;
  } else if (comm) {
    out.mode = DriveMode::CommLossStop;
  } else if (prev == DriveMode::AtStation && in.station_cmd != StationCommand::Exit) {
    out.mode = DriveMode::AtStation;
  } else if (in.station_cmd == StationCommand::Enter && stationary) {
    out.mode = DriveMode::AtStation;
  } else if (self.active_traj) {
    out.mode = DriveMode::Following;
  } else {
    out.mode = DriveMode::Idle;
  }

  switch (out.mode) {
    case DriveMode::EstopStop:
    case DriveMode::AebStop:
      out.accel = -params.aeb_decel;
      break;
    case DriveMode::FaultStop:
    case DriveMode::CommLossStop:
    case DriveMode::Idle:
    case DriveMode::AtStation:
      out.accel = -params.service_decel;
      break;
    case DriveMode::Following: {
      double target = self.active_traj->at(now).target_speed * in.target_speed_factor;
      if (in.speed_cap) {
        target = speed_limiter(target, *in.speed_cap);
      }
      out.accel = accel_limiter((target - self.speed) / kTickSeconds, params.max_accel,
                                params.service_decel);
      break;
    }
  }
  if (stationary && out.accel < 0.0) {
    out.accel = 0.0;
  }

  out.doors = out.mode == DriveMode::AtStation && stationary ? Doors::Open : Doors::Closed;
  if (is_stop_mode(out.mode)) {
    out.lights = Lights::Hazard;
  } else if (out.accel < 0.0) {
    out.lights = Lights::Brake;
  } else if (out.mode == DriveMode::Following) {
    out.lights = Lights::Drive;
  } else {
    out.lights = Lights::Off;
  }
  return out;
}

double actuate(double commanded, const HealthStatus& health, double speed, const VehicleParams& params) {
  if (speed <= 0.0 && commanded <= 0.0) {
    return 0.0;
  }
  if (commanded < 0.0 && !health.any_brake()) {
    return -params.coast_decel;
  }
  if (commanded > 0.0 && !health.power_ok) {
    return -params.coast_decel;
  }
  return commanded;
}

namespace {

// Cumulative arc length at each point.
std::vector<double> arc_table(const Trajectory& traj) {
  std::vector<double> s(traj.points.size(), 0.0);
  for (std::size_t i = 1; i < traj.points.size(); ++i) {
    s[i] = s[i - 1] + distance(traj.points[i - 1].pose.position(), traj.points[i].pose.position());
  }
  return s;
}

}  // namespace

Pose polyline_pose(const Trajectory& traj, double arc) {
  const auto& pts = traj.points;
  const auto s = arc_table(traj);
  // Last segment with non-zero length, for extrapolation past the end.
  std::size_t seg = pts.size();
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double len = s[i] - s[i - 1];
    if (len <= 1e-12) {
      continue;
    }
    seg = i;
    if (arc <= s[i]) {
      break;
    }
  }
  if (seg == pts.size()) {
    Pose p = pts.front().pose;
    const Vec2 dir{std::cos(p.heading), std::sin(p.heading)};
    const Vec2 q = p.position() + dir * arc;
    return {q.x, q.y, p.heading};
  }
  const Vec2 a = pts[seg - 1].pose.position();
  const Vec2 b = pts[seg].pose.position();
  const double len = s[seg] - s[seg - 1];
  const double t = (arc - s[seg - 1]) / len;
  const Vec2 q = a + (b - a) * t;
  return {q.x, q.y, normalize_angle(std::atan2(b.y - a.y, b.x - a.x))};
}

double polyline_project(const Trajectory& traj, Vec2 p) {
  const auto& pts = traj.points;
  const auto s = arc_table(traj);
  double best_d = distance(p, pts.front().pose.position());
  double best_s = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const Vec2 a = pts[i - 1].pose.position();
    const Vec2 b = pts[i].pose.position();
    const Vec2 ab = b - a;
    const double len2 = dot(ab, ab);
    if (len2 <= 1e-24) {
      continue;
    }
    const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    const double d = distance(p, a + ab * t);
    if (d < best_d - 1e-12) {
      best_d = d;
      best_s = s[i - 1] + t * std::sqrt(len2);
    }
  }
  return best_s;
}

double polyline_distance(const Trajectory& traj, Vec2 p) {
  return distance(p, polyline_pose(traj, polyline_project(traj, p)).position());
}

VehicleState integrate(const VehicleState& self, double accel, double dt) {
  VehicleState out = self;
  const KinematicStep step = kinematic_step(self.speed, accel, dt);
  out.speed = step.speed;
  out.accel = accel;
  if (step.distance <= 0.0) {
    return out;
  }
  if (self.active_traj) {
    out.traj_progress = self.traj_progress + step.distance;
    const Pose p = polyline_pose(*self.active_traj, out.traj_progress);
    out.pose = p;
  } else {
    const Vec2 dir{std::cos(self.pose.heading), std::sin(self.pose.heading)};
    const Vec2 q = self.pose.position() + dir * step.distance;
    out.pose.x = q.x;
    out.pose.y = q.y;
  }
  return out;
}

void accept_trajectory(VehicleState& v, Trajectory traj, Tick now) {
  v.traj_progress = polyline_project(traj, v.pose.position());
  v.active_traj = std::move(traj);
  v.last_traj_tick = now;
}

}  // namespace ixda
