#include "ixda/units.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ixda {

double mph_to_mps(double mph) {
  if (!std::isfinite(mph) || mph < 0.0) {
    throw std::invalid_argument("speed in mph must be a finite non-negative number");
  }
  return mph * kMetersPerSecondPerMph;
}

double stopping_distance(double speed, double decel) {
  if (!(decel > 0.0)) {
    throw std::invalid_argument("deceleration must be positive");
  }
  if (!(speed >= 0.0)) {
    throw std::invalid_argument("speed must be non-negative");
  }
  return speed * speed / (2.0 * decel);
}

Tick ticks_to_stop(double speed, double decel, double dt) {
  if (!(decel > 0.0)) {
    throw std::invalid_argument("deceleration must be positive");
  }
  if (speed <= 0.0) {
    return 0;
  }
  // Small epsilon so that exact multiples do not round up a full tick.
  return static_cast<Tick>(std::ceil(speed / (decel * dt) - 1e-9));
}

KinematicStep kinematic_step(double speed, double accel, double dt) {
  const double next = speed + accel * dt;
  if (next >= 0.0) {
    return {next, 0.5 * (speed + next) * dt};
  }
  // Comes to rest inside the tick.
  return {0.0, speed * speed / (2.0 * -accel)};
}

double discrete_braking_distance(double speed, double decel, double dt) {
  double distance = 0.0;
  double v = speed;
  while (v > 0.0) {
    const auto step = kinematic_step(v, -decel, dt);
    v = step.speed;
    distance += step.distance;
  }
  return distance;
}

}  // namespace ixda
