#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ixda/geometry.hpp"
#include "ixda/units.hpp"

namespace ixda {

using NodeId = std::int32_t;
using EdgeId = std::int32_t;

enum class VehicleId : std::uint32_t {};
enum class PedestrianId : std::uint32_t {};

inline std::uint32_t raw(VehicleId id) { return static_cast<std::uint32_t>(id); }
inline std::uint32_t raw(PedestrianId id) { return static_cast<std::uint32_t>(id); }
/// "V3", "P12".
std::string to_string(VehicleId id);
std::string to_string(PedestrianId id);

enum class ZoneKind { DropOff, Wash, Calibration, Charging, Loading, PickUp };

const char* to_string(ZoneKind kind);
std::optional<ZoneKind> zone_kind_from_string(std::string_view s);

struct Zone {
  std::string id;
  ZoneKind kind = ZoneKind::DropOff;
  Polygon footprint;
  int capacity = 1;
  /// Parking slots on the lane graph, front-most first. One per unit of capacity.
  std::vector<NodeId> slots;
};

struct LaneNode {
  NodeId id = 0;
  Vec2 position;
};

struct LaneEdge {
  EdgeId id = 0;
  NodeId from = 0;
  NodeId to = 0;
  double length = 0.0;     // meters, derived from node positions
  double speed_cap = 0.0;  // m/s
};

/// Directed lane graph. Node and edge ids are dense indices.
class LaneGraph {
 public:
  LaneGraph() = default;
  LaneGraph(std::vector<LaneNode> nodes, std::vector<LaneEdge> edges);

  const std::vector<LaneNode>& nodes() const { return nodes_; }
  const std::vector<LaneEdge>& edges() const { return edges_; }
  const LaneNode& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  const LaneEdge& edge(EdgeId id) const { return edges_.at(static_cast<std::size_t>(id)); }
  const std::vector<EdgeId>& out_edges(NodeId id) const { return out_.at(static_cast<std::size_t>(id)); }
  const std::vector<EdgeId>& in_edges(NodeId id) const { return in_.at(static_cast<std::size_t>(id)); }

  /// Nodes where lanes fork or merge.
  bool is_junction(NodeId id) const;

  /// Shortest path by length (ties broken by lower edge id); nullopt if
  /// unreachable, empty if from == to.
  std::optional<std::vector<EdgeId>> shortest_path(NodeId from, NodeId to) const;
  std::vector<bool> reachable_from(NodeId from) const;

  /// Walks back along unique predecessors for at least `meters`.
  std::vector<EdgeId> trailing_edges(NodeId node, double meters) const;

  /// Removes one edge and re-indexes; used to build invalid fixtures.
  LaneGraph without_edge(EdgeId id) const;

 private:
  std::vector<LaneNode> nodes_;
  std::vector<LaneEdge> edges_;
  std::vector<std::vector<EdgeId>> out_;
  std::vector<std::vector<EdgeId>> in_;
};

struct EstopButton {
  std::string id;
  Vec2 position;
};

struct StaticObstacle {
  std::string id;
  Vec2 position;
  double radius = 0.5;
};

struct DepotMap {
  std::vector<Zone> zones;
  LaneGraph lanes;
  std::vector<EstopButton> estop_buttons;
  std::vector<Polygon> sensor_coverage;

  const Zone* find_zone(std::string_view id) const;
  bool in_coverage(Vec2 p) const;
  /// Lane corridor: within `half_width` of any lane edge centreline.
  bool in_lane_corridor(Vec2 p, double half_width) const;
};

/// Unique zone containing `point`; boundary ties go to the smallest id.
const Zone* zone_at(const DepotMap& map, Vec2 point);

enum class SpeedRegime { NominalSpeed, HighSpeed };

struct OperatingMode {
  SpeedRegime tag = SpeedRegime::NominalSpeed;
  double speed_cap = kNominalSpeedCap;
};

enum class TrafficSituation { Controlled, Uncontrolled };

const char* to_string(SpeedRegime r);
const char* to_string(TrafficSituation t);

struct Pedestrian {
  PedestrianId id{};
  Vec2 position;
  Vec2 velocity;
  double radius = 0.3;
};

inline constexpr double kMaxPedestrianSpeed = 2.0;
inline constexpr double kLaneCorridorHalfWidth = 2.5;

/// The bundled Fig.-1-style depot: a counter-clockwise rectangular loop with
/// drive-through bays for drop-off, wash, calibration, charging, loading and
/// pick-up. Lanes are densified to edges of at most 2 m.
DepotMap make_default_map();

}  // namespace ixda
