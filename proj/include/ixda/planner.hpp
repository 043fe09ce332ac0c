#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ixda/infra.hpp"
#include "ixda/vehicle.hpp"
#include "ixda/world.hpp"

namespace ixda {

class NoRoute : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PlannerOverload : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A path through the lane graph in arc-length coordinates. Starts with a
/// few trailing edges so the body behind the reference point is covered and
/// runs on past the goal so braking envelopes never fall off the end.
struct Route {
  std::vector<EdgeId> edges;
  std::vector<double> start;  // arc at each edge start
  double length = 0.0;
  std::optional<double> goal_s;
  /// Junction nodes crossed, with their arc positions.
  std::vector<std::pair<NodeId, double>> junctions;
  int version = 0;

  std::size_t edge_index(double s) const;
  Pose pose_at(const LaneGraph& g, double s) const;
  /// Arc of the closest point, searching edges that overlap [lo, hi].
  double project(const LaneGraph& g, Vec2 p, double lo, double hi) const;
  double project(const LaneGraph& g, Vec2 p) const;
};

/// Route from `from` to `to` (a goal node). Throws NoRoute.
Route route_between(const DepotMap& map, NodeId from, NodeId to, int version = 0);
/// Route that starts on `edge` and ends at `to`. Throws NoRoute.
Route route_from_edge(const DepotMap& map, EdgeId edge, NodeId to, int version = 0);
/// Route that holds at `node` (goal at the node, no motion intended).
Route route_hold(const DepotMap& map, NodeId node, int version = 0);
/// Lane edge closest to `pose`, preferring edges aligned with its heading.
EdgeId locate_edge(const LaneGraph& g, const Pose& pose);

/// Exclusive (resource, tick) ownership. Resources are lane edges followed
/// by junction nodes.
class ReservationTable {
 public:
  /// False (and no change) when another vehicle owns the cell.
  bool reserve(int resource, Tick tick, VehicleId v);
  std::optional<VehicleId> owner(int resource, Tick tick) const;
  std::size_t size() const { return cells_.size(); }
  const std::map<std::pair<int, Tick>, VehicleId>& cells() const { return cells_; }
  std::size_t contested() const { return contested_; }

 private:
  std::map<std::pair<int, Tick>, VehicleId> cells_;
  std::size_t contested_ = 0;
};

struct PlannerConfig {
  double margin = 3.0;
  double junction_radius = 8.0;
  double ped_clearance = 2.0;
  double service_decel = 4.0;
  /// Deceleration used to shape approach profiles; below service so there is slack.
  double plan_decel = 3.0;
  double max_accel = 2.5;
  double half_length = 3.0;
  double half_width = 1.1;
  int horizon = static_cast<int>(kHorizonTicks);
  int candidates = 6;
  /// Reservation granularity along a lane, metres.
  double segment_length = 1.0;
  long work_budget = 2'000'000;
};

/// A previously sent plan that the vehicle may still be executing.
struct Commitment {
  Tick issued_tick = 0;
  int route_version = 0;
  std::vector<double> arcs;    // offsets 0..n
  std::vector<double> speeds;
};

struct PlanRequest {
  VehicleId id{};
  const Route* route = nullptr;
  double s0 = 0.0;
  double v0 = 0.0;
  /// Regime cap; 0 requests a stop.
  double cap = 0.0;
  std::vector<Commitment> commitments;
};

struct PlanResult {
  VehicleId id{};
  Trajectory traj;
  Commitment plan;
  /// No admissible candidate at some step; the plan brakes instead.
  bool degraded = false;
  /// Budget exhausted before this vehicle was reached; `traj` is empty.
  bool skipped = false;
};

/// An object the planner must keep clear of (pedestrian, obstacle, unknown).
struct Keepout {
  std::vector<Vec2> positions;  // offsets 0..n, held at the last one beyond
  double radius = 0.3;
};

class Planner {
 public:
  Planner(const DepotMap& map, PlannerConfig cfg);

  int resource_count() const { return static_cast<int>(junction_of_.size()) + segment_count_; }
  /// Resource id of the segment of `edge` containing local arc `s`.
  int segment_resource(EdgeId edge, double s) const;
  int junction_resource(NodeId n) const;
  const PlannerConfig& config() const { return cfg_; }

  /// Plans every request in order (callers sort by vehicle id). Cells of the
  /// new plans are recorded in `table` at absolute ticks now+1..now+K.
  std::vector<PlanResult> plan_all(const std::vector<PlanRequest>& requests, const std::vector<Keepout>& keepouts,
                                   Tick now, ReservationTable* table = nullptr);

  /// Number of offsets per plan for a given top speed.
  int plan_length(double top_speed) const;
  long work_done() const { return work_; }

 private:
  using Mask = unsigned __int128;

  /// Segments overlapping [a, b] and, unless junction_pad < 0, junctions within pad of it.
  void interval_cells(const Route& r, double a, double b, double junction_pad, std::vector<int>& out) const;
  /// Segments within `radius` of `p`.
  void segments_near(Vec2 p, double radius, std::vector<int>& out) const;
  double allowed_speed(const Route& r, const std::vector<double>& lim_end, double s, double cap) const;
  PlanResult plan_one(const PlanRequest& req, const std::vector<Mask>& occ, const std::vector<Mask>& blocked,
                      int K, std::vector<std::pair<int, Mask>>& cells_out, bool& over_budget);

  const DepotMap* map_;
  PlannerConfig cfg_;
  // Each edge is cut into equal segments no longer than cfg_.segment_length.
  int segment_count_ = 0;
  std::vector<int> first_segment_;
  std::vector<int> segments_of_;
  std::vector<double> segment_len_;
  std::map<NodeId, int> junction_of_;
  // Uniform grid over edge bounding boxes for keep-out queries.
  double grid_x0_ = 0.0, grid_y0_ = 0.0, cell_ = 4.0;
  int grid_w_ = 0, grid_h_ = 0;
  std::vector<std::vector<int>> grid_;
  mutable std::vector<int> stamp_;
  mutable int stamp_gen_ = 0;
  long work_ = 0;
};

}  // namespace ixda
