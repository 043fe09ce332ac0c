#include "ixda/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <stdexcept>

namespace ixda {

std::string to_string(VehicleId id) { return "V" + std::to_string(raw(id)); }
std::string to_string(PedestrianId id) { return "P" + std::to_string(raw(id)); }

const char* to_string(ZoneKind kind) {
  switch (kind) {
    case ZoneKind::DropOff: return "DropOff";
    case ZoneKind::Wash: return "Wash";
    case ZoneKind::Calibration: return "Calibration";
    case ZoneKind::Charging: return "Charging";
    case ZoneKind::Loading: return "Loading";
    case ZoneKind::PickUp: return "PickUp";
  }
  return "?";
}

std::optional<ZoneKind> zone_kind_from_string(std::string_view s) {
  for (auto k : {ZoneKind::DropOff, ZoneKind::Wash, ZoneKind::Calibration, ZoneKind::Charging,
                 ZoneKind::Loading, ZoneKind::PickUp}) {
    if (s == to_string(k)) {
      return k;
    }
  }
  return std::nullopt;
}

const char* to_string(SpeedRegime r) {
  return r == SpeedRegime::NominalSpeed ? "NominalSpeed" : "HighSpeed";
}

const char* to_string(TrafficSituation t) {
  return t == TrafficSituation::Controlled ? "Controlled" : "Uncontrolled";
}

LaneGraph::LaneGraph(std::vector<LaneNode> nodes, std::vector<LaneEdge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  out_.assign(nodes_.size(), {});
  in_.assign(nodes_.size(), {});
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].id != static_cast<NodeId>(i)) {
      throw std::invalid_argument("lane node ids must be dense and ordered");
    }
  }
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    auto& e = edges_[i];
    if (e.id != static_cast<EdgeId>(i)) {
      throw std::invalid_argument("lane edge ids must be dense and ordered");
    }
    if (e.from < 0 || e.to < 0 || static_cast<std::size_t>(e.from) >= nodes_.size() ||
        static_cast<std::size_t>(e.to) >= nodes_.size()) {
      throw std::invalid_argument("lane edge " + std::to_string(e.id) + " references an unknown node");
    }
    e.length = distance(nodes_[e.from].position, nodes_[e.to].position);
    out_[e.from].push_back(e.id);
    in_[e.to].push_back(e.id);
  }
}

bool LaneGraph::is_junction(NodeId id) const {
  return out_edges(id).size() > 1 || in_edges(id).size() > 1;
}

std::optional<std::vector<EdgeId>> LaneGraph::shortest_path(NodeId from, NodeId to) const {
  const std::size_t n = nodes_.size();
  if (from == to) {
    return std::vector<EdgeId>{};
  }
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<EdgeId> via(n, -1);
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  dist[from] = 0.0;
  open.emplace(0.0, from);
  while (!open.empty()) {
    auto [d, u] = open.top();
    open.pop();
    if (d > dist[u]) {
      continue;
    }
    if (u == to) {
      break;
    }
    for (EdgeId eid : out_[u]) {
      const auto& e = edges_[eid];
      const double nd = d + e.length;
      if (nd < dist[e.to] - 1e-12) {
        dist[e.to] = nd;
        via[e.to] = eid;
        open.emplace(nd, e.to);
      }
    }
  }
  if (via[to] < 0) {
    return std::nullopt;
  }
  std::vector<EdgeId> path;
  for (NodeId cur = to; cur != from;) {
    const EdgeId eid = via[cur];
    path.push_back(eid);
    cur = edges_[eid].from;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<bool> LaneGraph::reachable_from(NodeId from) const {
  std::vector<bool> seen(nodes_.size(), false);
  std::vector<NodeId> stack{from};
  seen[from] = true;
  while (!stack.empty()) {
    const NodeId u = stack.back();
    stack.pop_back();
    for (EdgeId eid : out_[u]) {
      const NodeId v = edges_[eid].to;
      if (!seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
    }
  }
  return seen;
}

std::vector<EdgeId> LaneGraph::trailing_edges(NodeId node, double meters) const {
  std::vector<EdgeId> trail;
  double covered = 0.0;
  NodeId cur = node;
  while (covered < meters) {
    const auto& in = in_edges(cur);
    if (in.empty()) {
      break;
    }
    // At a merge any predecessor is as good as another; take the lowest id.
    const EdgeId eid = *std::min_element(in.begin(), in.end());
    trail.push_back(eid);
    covered += edges_[eid].length;
    cur = edges_[eid].from;
    if (trail.size() > edges_.size()) {
      break;
    }
  }
  std::reverse(trail.begin(), trail.end());
  return trail;
}

LaneGraph LaneGraph::without_edge(EdgeId id) const {
  std::vector<LaneEdge> kept;
  for (const auto& e : edges_) {
    if (e.id != id) {
      kept.push_back(e);
      kept.back().id = static_cast<EdgeId>(kept.size() - 1);
    }
  }
  return LaneGraph(nodes_, std::move(kept));
}

const Zone* DepotMap::find_zone(std::string_view id) const {
  for (const auto& z : zones) {
    if (z.id == id) {
      return &z;
    }
  }
  return nullptr;
}

bool DepotMap::in_coverage(Vec2 p) const {
  return std::any_of(sensor_coverage.begin(), sensor_coverage.end(),
                     [&](const Polygon& poly) { return contains(poly, p); });
}

bool DepotMap::in_lane_corridor(Vec2 p, double half_width) const {
  for (const auto& e : lanes.edges()) {
    if (point_segment_distance(p, lanes.node(e.from).position, lanes.node(e.to).position) <=
        half_width) {
      return true;
    }
  }
  return false;
}

const Zone* zone_at(const DepotMap& map, Vec2 point) {
  const Zone* best = nullptr;
  for (const auto& z : map.zones) {
    if (contains(z.footprint, point) && (best == nullptr || z.id < best->id)) {
      best = &z;
    }
  }
  return best;
}

namespace {

constexpr double kMaxEdgeLength = 2.0;
constexpr double kLoopCap = kHighSpeedMaxCap;
constexpr double kSlowCap = 3.0;

class MapBuilder {
 public:
  NodeId add_node(Vec2 p) {
    nodes_.push_back({static_cast<NodeId>(nodes_.size()), p});
    return nodes_.back().id;
  }

  // Connects `from` to `to` with straight densified edges.
  void connect(NodeId from, NodeId to, double cap) {
    const Vec2 a = nodes_[from].position;
    const Vec2 b = nodes_[to].position;
    const int pieces = std::max(1, static_cast<int>(std::ceil(distance(a, b) / kMaxEdgeLength - 1e-9)));
    NodeId prev = from;
    for (int i = 1; i <= pieces; ++i) {
      const NodeId next = i == pieces ? to : add_node(a + (b - a) * (static_cast<double>(i) / pieces));
      edges_.push_back({static_cast<EdgeId>(edges_.size()), prev, next, 0.0, cap});
      prev = next;
    }
  }

  LaneGraph build() { return LaneGraph(std::move(nodes_), std::move(edges_)); }

 private:
  std::vector<LaneNode> nodes_;
  std::vector<LaneEdge> edges_;
};

Polygon rect(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

struct BaySpec {
  std::string id;
  ZoneKind kind;
  Vec2 entry;             // on the loop
  Vec2 lane_start;
  Vec2 lane_end;
  Vec2 exit;              // on the loop
  std::vector<Vec2> slots;  // front-most first
  Polygon footprint;
};

}  // namespace

DepotMap make_default_map() {
  const std::vector<BaySpec> bays = {
      {"dropoff", ZoneKind::DropOff, {16, 0}, {24, -24}, {54, -24}, {62, 0},
       {{50, -24}, {40, -24}, {30, -24}}, rect(22, -28, 56, -20)},
      {"pickup", ZoneKind::PickUp, {150, 0}, {158, -24}, {188, -24}, {196, 0},
       {{184, -24}, {174, -24}, {164, -24}}, rect(156, -28, 190, -20)},
      {"wash", ZoneKind::Wash, {200, 90}, {192, 114}, {172, 114}, {164, 90},
       {{176, 114}, {186, 114}}, rect(170, 110, 194, 118)},
      {"calibration", ZoneKind::Calibration, {156, 90}, {148, 114}, {128, 114}, {120, 90},
       {{132, 114}, {142, 114}}, rect(126, 110, 150, 118)},
      {"charging", ZoneKind::Charging, {112, 90}, {104, 114}, {84, 114}, {76, 90},
       {{88, 114}, {98, 114}}, rect(82, 110, 106, 118)},
      {"loading", ZoneKind::Loading, {68, 90}, {60, 114}, {40, 114}, {32, 90},
       {{44, 114}, {54, 114}}, rect(38, 110, 62, 118)},
  };

  // Counter-clockwise loop key points with 6 m chamfers at the corners.
  struct KeyPoint {
    Vec2 p;
    double cap_to_next;
  };
  const std::vector<KeyPoint> loop = {
      {{6, 0}, kLoopCap},    {{16, 0}, kLoopCap},   {{62, 0}, kLoopCap},   {{150, 0}, kLoopCap},
      {{196, 0}, kLoopCap},  {{214, 0}, kSlowCap},  {{220, 6}, kLoopCap},  {{220, 84}, kSlowCap},
      {{214, 90}, kLoopCap}, {{200, 90}, kLoopCap}, {{164, 90}, kLoopCap}, {{156, 90}, kLoopCap},
      {{120, 90}, kLoopCap}, {{112, 90}, kLoopCap}, {{76, 90}, kLoopCap},  {{68, 90}, kLoopCap},
      {{32, 90}, kLoopCap},  {{6, 90}, kSlowCap},   {{0, 84}, kLoopCap},   {{0, 6}, kSlowCap},
  };

  MapBuilder b;
  std::vector<NodeId> loop_ids;
  for (const auto& k : loop) {
    loop_ids.push_back(b.add_node(k.p));
  }
  for (std::size_t i = 0; i < loop.size(); ++i) {
    b.connect(loop_ids[i], loop_ids[(i + 1) % loop.size()], loop[i].cap_to_next);
  }
  auto loop_node = [&](Vec2 p) {
    for (std::size_t i = 0; i < loop.size(); ++i) {
      if (loop[i].p == p) {
        return loop_ids[i];
      }
    }
    throw std::logic_error("bay attaches to a point that is not a loop key point");
  };

  DepotMap map;
  for (const auto& bay : bays) {
    // Lane points in travel order, slots included as nodes.
    std::vector<Vec2> lane_points{bay.lane_start};
    std::vector<Vec2> slots_in_travel_order(bay.slots.rbegin(), bay.slots.rend());
    lane_points.insert(lane_points.end(), slots_in_travel_order.begin(), slots_in_travel_order.end());
    lane_points.push_back(bay.lane_end);

    std::vector<NodeId> lane_ids;
    for (const auto& p : lane_points) {
      lane_ids.push_back(b.add_node(p));
    }
    b.connect(loop_node(bay.entry), lane_ids.front(), kSlowCap);
    for (std::size_t i = 0; i + 1 < lane_ids.size(); ++i) {
      b.connect(lane_ids[i], lane_ids[i + 1], kSlowCap);
    }
    b.connect(lane_ids.back(), loop_node(bay.exit), kSlowCap);

    Zone z;
    z.id = bay.id;
    z.kind = bay.kind;
    z.footprint = bay.footprint;
    z.capacity = static_cast<int>(bay.slots.size());
    // lane_ids = start, slots (back..front), end
    for (std::size_t i = 0; i < bay.slots.size(); ++i) {
      z.slots.push_back(lane_ids[lane_ids.size() - 2 - i]);
    }
    map.zones.push_back(std::move(z));
  }
  map.lanes = b.build();
  map.estop_buttons = {
      {"ES-S", {110, 5}}, {"ES-N", {110, 85}}, {"ES-W", {5, 45}}, {"ES-E", {215, 45}}};
  map.sensor_coverage = {rect(-10, -35, 115, 125), rect(105, -35, 230, 125)};
  return map;
}

}  // namespace ixda
