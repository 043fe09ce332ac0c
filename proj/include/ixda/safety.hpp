#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ixda/net.hpp"
#include "ixda/scenario.hpp"
#include "ixda/vehicle.hpp"

namespace ixda {

/// Effects of the injection windows active at one tick.
struct HazardState {
  std::vector<HazardId> active;
  // Vehicle-targeted effects keyed by target ("V1" or "*").
  std::set<std::string> aodca_lost;                 // H1
  std::map<std::string, std::string> brake_failed;  // H2: "primary", "secondary" or "both"
  std::map<std::string, double> speed_factor;       // H3
  std::vector<Impairment> impairments;                // H4, H5
  bool ix_blind = false;                              // H6
  double prediction_scale = 1.0;                      // H7
  bool estop_path_down = false;                       // H8

  bool is_active(HazardId h) const;
  bool aodca_lost_for(VehicleId v) const;
  std::optional<std::string> brake_failed_for(VehicleId v) const;
  double speed_factor_for(VehicleId v) const;
};

/// Windows are inclusive at both ends.
HazardState apply_injections(const std::vector<Injection>& schedule, Tick now);

/// Health a vehicle reports under `hz`; without dual brakes there is no
/// secondary channel at all.
HealthStatus injected_health(const HazardState& hz, VehicleId id, bool dual_brake);

struct CollisionEvent {
  Tick tick = 0;
  VehicleId vehicle{};
  std::string other;       // "P3", "V2", or an obstacle id
  std::string other_kind;  // "pedestrian", "vehicle", "obstacle"
  double relative_speed = 0.0;

  friend bool operator==(const CollisionEvent&, const CollisionEvent&) = default;
};

struct CollisionScene {
  Tick tick = 0;
  std::vector<VehicleState> vehicles;
  std::vector<Pedestrian> pedestrians;
  std::vector<StaticObstacle> obstacles;
  VehicleParams params;
};

/// Every contact at this instant. Tests are closed: tangency is a contact.
std::vector<CollisionEvent> check_collisions(const CollisionScene& scene);

/// Reports a contact once, when it starts.
class CollisionTracker {
 public:
  std::vector<CollisionEvent> onsets(const std::vector<CollisionEvent>& contacts);
  const std::set<std::pair<std::uint32_t, std::string>>& active() const { return active_; }
  void restore(std::set<std::pair<std::uint32_t, std::string>> a) { active_ = std::move(a); }

 private:
  std::set<std::pair<std::uint32_t, std::string>> active_;
};

nlohmann::json to_json(const CollisionEvent& e);

enum class TraceVerbosity { Compact, Full };

/// Append-only NDJSON trace. The hash is FNV-1a 64 over the serialized lines.
class TraceLog {
 public:
  explicit TraceLog(TraceVerbosity v = TraceVerbosity::Compact, std::ostream* sink = nullptr)
      : verbosity_(v), sink_(sink) {}

  void append(Tick tick, const std::string& kind, nlohmann::json payload);
  std::uint64_t hash() const { return hash_; }
  std::string hash_hex() const;
  const std::vector<nlohmann::json>& records() const { return records_; }
  TraceVerbosity verbosity() const { return verbosity_; }
  bool full() const { return verbosity_ == TraceVerbosity::Full; }

  /// Resumes from a saved position so a restored run continues the same hash.
  void restore(std::uint64_t hash, std::vector<nlohmann::json> records);
  void set_sink(std::ostream* sink) { sink_ = sink; }

  /// Parses NDJSON; throws std::runtime_error on malformed lines.
  static TraceLog read(std::istream& in);

 private:
  TraceVerbosity verbosity_;
  std::ostream* sink_;
  std::vector<nlohmann::json> records_;
  std::uint64_t hash_ = 14695981039346656037ull;
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 14695981039346656037ull);

class IncompleteTrace : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GoalVerdict {
  bool pass = true;
  nlohmann::json evidence = nlohmann::json::array();
};

struct MonitorReport {
  std::map<std::string, GoalVerdict> goals;  // SG1..SG6
  int collisions = 0;
  int pedestrian_collisions = 0;
  double max_speed = 0.0;
  std::vector<nlohmann::json> comm_loss_stops;
  std::vector<nlohmann::json> estop_stops;

  bool all_pass() const;
  /// Any failed goal or any collision.
  bool violation() const { return !all_pass() || collisions > 0; }
};

/// Pure function of the trace records; the scenario config is not needed
/// because the header record carries every parameter the monitors use.
MonitorReport evaluate_goals(const std::vector<nlohmann::json>& records);

nlohmann::json to_json(const MonitorReport& r);
std::string to_text(const MonitorReport& r);

}  // namespace ixda
