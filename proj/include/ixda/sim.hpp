#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "ixda/infra.hpp"
#include "ixda/net.hpp"
#include "ixda/pedestrians.hpp"
#include "ixda/planner.hpp"
#include "ixda/safety.hpp"
#include "ixda/scenario.hpp"

namespace ixda {

/// Full depot state after a tick, enough to resume the run bit-exactly.
struct DepotSnapshot {
  Tick tick = 0;
  nlohmann::json state;
};

struct SimOptions {
  TraceVerbosity verbosity = TraceVerbosity::Compact;
  std::ostream* trace_sink = nullptr;
  /// Keep the 10 s rolling buffer of snapshots (costly; off for bulk suites).
  bool rolling_buffer = true;
};

/// External command from an operator or driver, drained once per tick.
using Command = ScenarioEvent;

struct Alert {
  Tick tick = 0;
  std::string vehicle;
  std::string kind;
  std::string text;
};

/// Outcome of a driver check-in or check-out request.
struct CheckResult {
  bool accepted = false;
  std::string reason;
};

class Simulation {
 public:
  explicit Simulation(ScenarioConfig cfg, SimOptions opts = {});
  ~Simulation();
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  /// Advances one tick. The first call simulates tick 0.
  void step();
  /// Steps to the configured duration and writes the end record.
  void run_to_end();
  bool finished() const;
  /// Appends the end record (idempotent).
  void finish();

  /// Next tick to simulate.
  Tick tick() const { return next_tick_; }
  const ScenarioConfig& config() const { return cfg_; }
  const TraceLog& trace() const { return trace_; }
  MonitorReport report() const { return evaluate_goals(trace_.records()); }

  /// Queues a command for the start of the next tick. Malformed commands
  /// are rejected with a reason and leave the simulation untouched.
  std::optional<std::string> submit(const Command& cmd);
  CheckResult checkin(const std::string& driver, const std::string& token, const std::string& vehicle);
  CheckResult checkout(const std::string& driver, const std::string& token, const std::string& vehicle);

  DepotSnapshot snapshot() const;
  /// Resumes from a snapshot taken by an identically configured run. The
  /// trace continues from the snapshot's hash; `prefix` (if given) restores
  /// the records written before it.
  void restore(const DepotSnapshot& snap, std::vector<nlohmann::json> prefix = {});
  const RollingBuffer<DepotSnapshot>& buffer() const { return buffer_; }

  /// Summary for the live feed: {tick, vehicles[], pedestrians[], alerts[], sensor_health}.
  nlohmann::json feed() const;

  const std::vector<VehicleState> vehicles() const;
  const std::vector<Alert>& alerts() const { return alerts_; }
  int collisions() const { return collision_count_; }

  /// Test hook: offsets a vehicle from its tracked path, persistently.
  void displace_vehicle(VehicleId id, Vec2 offset);

 private:
  struct Impl;
  ScenarioConfig cfg_;
  SimOptions opts_;
  TraceLog trace_;
  RollingBuffer<DepotSnapshot> buffer_;
  std::unique_ptr<Impl> impl_;
  Tick next_tick_ = 0;
  bool ended_ = false;
  int collision_count_ = 0;
  std::vector<Alert> alerts_;
};

}  // namespace ixda
