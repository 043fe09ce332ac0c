#pragma once

#include <cstdint>

namespace ixda {

/// Simulation time in ticks of 100 ms. All timers count ticks.
using Tick = std::int64_t;

inline constexpr double kTickSeconds = 0.1;
inline constexpr double kMetersPerSecondPerMph = 0.44704;

/// 10 mph, the upper bound of the nominal-speed regime.
inline constexpr double kNominalSpeedCap = 4.4704;
/// 25 mph, the upper bound of the high-speed regime.
inline constexpr double kHighSpeedMaxCap = 11.176;
/// 15 mph, default cap for the high-speed regime.
inline constexpr double kHighSpeedDefaultCap = 6.7056;

/// Trajectory watchdog threshold; a stop is commanded once the age exceeds it.
inline constexpr Tick kWatchdogTicks = 30;
/// Depth of the infrastructure rolling state buffer (10 s).
inline constexpr Tick kRollingBufferTicks = 100;
/// Prediction / planning horizon (3 s).
inline constexpr Tick kHorizonTicks = 30;

/// Converts mph to m/s. Throws std::invalid_argument for negative or non-finite input.
double mph_to_mps(double mph);

/// Continuous-time stopping distance v^2 / (2 a).
/// Throws std::invalid_argument if speed < 0 or decel <= 0.
double stopping_distance(double speed, double decel);

/// One tick of constant-acceleration motion with the speed floored at zero.
/// The distance is exact for the step, including a stop part-way through it.
struct KinematicStep {
  double speed;
  double distance;
};
KinematicStep kinematic_step(double speed, double accel, double dt = kTickSeconds);

/// Distance covered when braking at `decel` tick by tick until rest.
double discrete_braking_distance(double speed, double decel, double dt = kTickSeconds);

/// Number of ticks the Euler recurrence needs to bring `speed` to zero.
Tick ticks_to_stop(double speed, double decel, double dt = kTickSeconds);

}  // namespace ixda
