#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ixda/hara/hara.hpp"
#include "ixda/net.hpp"
#include "ixda/vehicle.hpp"
#include "ixda/world.hpp"

namespace ixda {

/// Scenario validation failure; `path()` is a JSON pointer into the document.
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

enum class HazardId { H1 = 1, H2, H3, H4, H5, H6, H7, H8 };
const char* to_string(HazardId h);
std::optional<HazardId> hazard_from_string(std::string_view s);

/// One timed activation. Active during [from_tick, to_tick] inclusive.
struct Injection {
  HazardId hazard = HazardId::H1;
  std::string target;  // "V1", "*", a link name, or "ix"
  Tick from_tick = 0;
  Tick to_tick = 0;
  nlohmann::json params = nlohmann::json::object();
};

struct Mitigations {
  bool aodca = true;
  bool dual_brake = true;
  bool speed_limiter = true;
  bool watchdog = true;
  bool ix_pedestrian_avoidance = true;
  bool estop_monitor = true;
};

inline const std::vector<std::string> kRequiredCapabilities = {"AODCA",       "AEB",        "V2I_10HZ",
                                                               "WATCHDOG_3S", "FAULT_STOP", "AUTH"};

struct VehicleSpec {
  VehicleId id{};
  std::string spawn_zone;
  std::vector<ZoneKind> mission;
  std::vector<std::string> capabilities = kRequiredCapabilities;
  /// Onboard at spawn without waiting for a driver check-in.
  bool auto_checkin = true;
  /// Start pose override; otherwise the vehicle parks in a spawn-zone slot.
  std::optional<Pose> spawn_pose;
  double initial_speed = 0.0;
};

struct ScriptedWaypoint {
  Vec2 position;
  int wait_ticks = 0;
};

/// A pedestrian walking a fixed route, starting at `start_tick`.
struct ScriptedPedestrian {
  Vec2 start;
  Tick start_tick = 0;
  double speed = 1.4;
  std::vector<ScriptedWaypoint> waypoints;
};

struct PedestrianConfig {
  int count = 0;
  double speed_min = 0.8;
  double speed_max = 1.5;
  int pause_min_ticks = 0;
  int pause_max_ticks = 30;
  bool yield_to_vehicles = true;
  double radius = 0.3;
  /// Walk areas; empty means the whole sensor coverage.
  std::vector<Polygon> areas;
  std::vector<ScriptedPedestrian> scripted;
};

struct IxParams {
  double planner_margin = 3.0;
  double junction_radius = 8.0;
  double ped_clearance = 2.0;
  int station_dwell_ticks = 30;
  double deviation_threshold = 1.0;
  double estop_radius = 10.0;
  /// Planner work units per tick before PlannerOverload.
  std::int64_t work_budget = 2'000'000;
};

enum class EventKind { EstopPress, Estop, Release, Hazard, HazardClear, Checkin, Checkout };
const char* to_string(EventKind k);

/// Scheduled external input, applied at the start of `tick`.
struct ScenarioEvent {
  Tick tick = 0;
  EventKind kind = EventKind::Estop;
  std::string target;  // vehicle id or "*" for operator e-stops and releases
  std::string button;  // physical button id for estop_press
  std::string event;   // Fire, Smoke, Flood, Earthquake, Accident
  std::string driver;
  std::string token;
};

struct Driver {
  std::string id;
  std::string token;
};

struct ScenarioConfig {
  std::string name;
  DepotMap map;
  bool default_map = true;
  OperatingMode mode;
  TrafficSituation traffic = TrafficSituation::Controlled;
  double duration_s = 60.0;
  double tick_s = kTickSeconds;
  std::uint64_t seed = 1;
  std::vector<VehicleSpec> vehicles;
  PedestrianConfig pedestrians;
  std::vector<Injection> injections;
  hara::SecTable sec_table;
  std::vector<StaticObstacle> obstacles;
  Mitigations mitigations;
  VehicleParams vehicle_params;
  AodcaConfig aodca;
  ChannelConfig channel;
  IxParams ix;
  std::vector<ScenarioEvent> events;
  std::vector<Driver> drivers;

  Tick duration_ticks() const;
};

/// Parses and validates a scenario document. Throws ScenarioError.
ScenarioConfig load_scenario(const std::string& document);
ScenarioConfig load_scenario_file(const std::string& path);
ScenarioConfig parse_scenario(const nlohmann::json& doc);
nlohmann::json serialize(const ScenarioConfig& cfg);

/// Invariant checks shared by the loader; throws ScenarioError.
void validate(const ScenarioConfig& cfg);
void validate_map(const DepotMap& map, const std::string& path);

nlohmann::json map_to_json(const DepotMap& map);
DepotMap map_from_json(const nlohmann::json& j, const std::string& path);

}  // namespace ixda
