#include "ixda/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ixda {

using nlohmann::json;

const char* to_string(HazardId h) {
  static const char* kNames[] = {"H1", "H2", "H3", "H4", "H5", "H6", "H7", "H8"};
  return kNames[static_cast<int>(h) - 1];
}

std::optional<HazardId> hazard_from_string(std::string_view s) {
  for (int i = 1; i <= 8; ++i) {
    if (s == to_string(static_cast<HazardId>(i))) {
      return static_cast<HazardId>(i);
    }
  }
  return std::nullopt;
}

const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::EstopPress: return "estop_press";
    case EventKind::Estop: return "estop";
    case EventKind::Release: return "release";
    case EventKind::Hazard: return "hazard";
    case EventKind::HazardClear: return "hazard_clear";
    case EventKind::Checkin: return "checkin";
    case EventKind::Checkout: return "checkout";
  }
  return "?";
}

Tick ScenarioConfig::duration_ticks() const {
  return static_cast<Tick>(std::llround(duration_s / kTickSeconds));
}

namespace {

// A JSON node with its pointer, for error reporting.
struct Node {
  const json& j;
  std::string path;

  [[noreturn]] void fail(const std::string& what) const { throw ScenarioError(path.empty() ? "/" : path, what); }

  bool has(const char* key) const { return j.is_object() && j.contains(key); }

  Node at(const char* key) const {
    if (!j.is_object()) fail("expected an object");
    if (!j.contains(key)) fail(std::string("missing required key '") + key + "'");
    return {j.at(key), path + "/" + key};
  }

  Node item(std::size_t i) const { return {j.at(i), path + "/" + std::to_string(i)}; }

  std::size_t size() const { return j.size(); }

  const json& array() const {
    if (!j.is_array()) fail("expected an array");
    return j;
  }

  double number() const {
    if (!j.is_number()) fail("expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }

  std::int64_t integer() const {
    if (!j.is_number_integer()) fail("expected an integer");
    return j.get<std::int64_t>();
  }

  bool boolean() const {
    if (!j.is_boolean()) fail("expected a boolean");
    return j.get<bool>();
  }

  std::string string() const {
    if (!j.is_string()) fail("expected a string");
    return j.get<std::string>();
  }

  Vec2 point() const {
    if (!j.is_array() || j.size() != 2) fail("expected [x, y]");
    return {item(0).number(), item(1).number()};
  }

  Polygon polygon() const {
    Polygon p;
    array();
    for (std::size_t i = 0; i < size(); ++i) p.push_back(item(i).point());
    return p;
  }

  double number_or(const char* key, double dflt) const { return has(key) ? at(key).number() : dflt; }
  std::int64_t integer_or(const char* key, std::int64_t dflt) const {
    return has(key) ? at(key).integer() : dflt;
  }
  bool boolean_or(const char* key, bool dflt) const { return has(key) ? at(key).boolean() : dflt; }
};

json point_json(Vec2 p) { return json::array({p.x, p.y}); }

json polygon_json(const Polygon& poly) {
  json a = json::array();
  for (auto p : poly) a.push_back(point_json(p));
  return a;
}

VehicleId parse_vehicle_id(const Node& n) {
  const auto v = n.integer();
  if (v <= 0 || v > 1'000'000) n.fail("vehicle id must be a positive integer");
  return static_cast<VehicleId>(v);
}

double segment_segment_distance(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  auto orient = [](Vec2 p, Vec2 q, Vec2 r) { return cross(q - p, r - p); };
  const double d1 = orient(a, b, c), d2 = orient(a, b, d), d3 = orient(c, d, a), d4 = orient(c, d, b);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return 0.0;
  }
  return std::min({point_segment_distance(a, c, d), point_segment_distance(b, c, d),
                   point_segment_distance(c, a, b), point_segment_distance(d, a, b)});
}

double segment_polygon_distance(Vec2 a, Vec2 b, const Polygon& poly) {
  if (contains(poly, a) || contains(poly, b)) {
    return 0.0;
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.size(); ++i) {
    best = std::min(best, segment_segment_distance(a, b, poly[i], poly[(i + 1) % poly.size()]));
  }
  return best;
}

double lane_clearance(const DepotMap& map, Vec2 a, Vec2 b) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : map.lanes.edges()) {
    best = std::min(best, segment_segment_distance(a, b, map.lanes.node(e.from).position,
                                                   map.lanes.node(e.to).position));
  }
  return best;
}

double lane_clearance(const DepotMap& map, const Polygon& area) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : map.lanes.edges()) {
    best = std::min(best, segment_polygon_distance(map.lanes.node(e.from).position,
                                                   map.lanes.node(e.to).position, area));
  }
  return best;
}

}  // namespace

json map_to_json(const DepotMap& map) {
  json zones = json::array();
  for (const auto& z : map.zones) {
    zones.push_back({{"id", z.id},
                     {"kind", to_string(z.kind)},
                     {"footprint", polygon_json(z.footprint)},
                     {"capacity", z.capacity},
                     {"slots", z.slots}});
  }
  json nodes = json::array();
  for (const auto& n : map.lanes.nodes()) nodes.push_back(point_json(n.position));
  json edges = json::array();
  for (const auto& e : map.lanes.edges()) edges.push_back({e.from, e.to, e.speed_cap});
  json buttons = json::array();
  for (const auto& b : map.estop_buttons) buttons.push_back({{"id", b.id}, {"position", point_json(b.position)}});
  json coverage = json::array();
  for (const auto& c : map.sensor_coverage) coverage.push_back(polygon_json(c));
  return {{"zones", zones},
          {"lanes", {{"nodes", nodes}, {"edges", edges}}},
          {"estop_buttons", buttons},
          {"sensor_coverage", coverage}};
}

DepotMap map_from_json(const json& j, const std::string& path) {
  const Node root{j, path};
  DepotMap map;
  const Node lanes = root.at("lanes");
  const Node nodes = lanes.at("nodes");
  std::vector<LaneNode> lane_nodes;
  nodes.array();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    lane_nodes.push_back({static_cast<NodeId>(i), nodes.item(i).point()});
  }
  const Node edges = lanes.at("edges");
  std::vector<LaneEdge> lane_edges;
  edges.array();
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const Node e = edges.item(i);
    if (!e.j.is_array() || e.size() != 3) e.fail("expected [from, to, speed_cap]");
    const auto from = e.item(0).integer();
    const auto to = e.item(1).integer();
    if (from < 0 || to < 0 || from >= static_cast<std::int64_t>(lane_nodes.size()) ||
        to >= static_cast<std::int64_t>(lane_nodes.size())) {
      e.fail("edge references an unknown node");
    }
    const double cap = e.item(2).number();
    if (cap <= 0.0) e.item(2).fail("speed cap must be positive");
    lane_edges.push_back({static_cast<EdgeId>(i), static_cast<NodeId>(from), static_cast<NodeId>(to), 0.0, cap});
  }
  map.lanes = LaneGraph(std::move(lane_nodes), std::move(lane_edges));

  const Node zones = root.at("zones");
  zones.array();
  for (std::size_t i = 0; i < zones.size(); ++i) {
    const Node z = zones.item(i);
    Zone zone;
    zone.id = z.at("id").string();
    const auto kind = zone_kind_from_string(z.at("kind").string());
    if (!kind) z.at("kind").fail("unknown zone kind");
    zone.kind = *kind;
    zone.footprint = z.at("footprint").polygon();
    const auto cap = z.at("capacity").integer();
    if (cap <= 0) z.at("capacity").fail("capacity must be positive");
    zone.capacity = static_cast<int>(cap);
    const Node slots = z.at("slots");
    slots.array();
    for (std::size_t s = 0; s < slots.size(); ++s) {
      const auto id = slots.item(s).integer();
      if (id < 0 || id >= static_cast<std::int64_t>(map.lanes.nodes().size())) {
        slots.item(s).fail("slot references an unknown node");
      }
      zone.slots.push_back(static_cast<NodeId>(id));
    }
    if (static_cast<int>(zone.slots.size()) != zone.capacity) {
      slots.fail("slot count must equal capacity");
    }
    map.zones.push_back(std::move(zone));
  }

  const Node buttons = root.at("estop_buttons");
  buttons.array();
  for (std::size_t i = 0; i < buttons.size(); ++i) {
    const Node b = buttons.item(i);
    map.estop_buttons.push_back({b.at("id").string(), b.at("position").point()});
  }
  const Node coverage = root.at("sensor_coverage");
  coverage.array();
  for (std::size_t i = 0; i < coverage.size(); ++i) {
    map.sensor_coverage.push_back(coverage.item(i).polygon());
  }
  return map;
}

void validate_map(const DepotMap& map, const std::string& path) {
  std::set<std::string> ids;
  for (std::size_t i = 0; i < map.zones.size(); ++i) {
    const auto& z = map.zones[i];
    const std::string zp = path + "/zones/" + std::to_string(i);
    if (!ids.insert(z.id).second) throw ScenarioError(zp + "/id", "duplicate zone id '" + z.id + "'");
    if (z.footprint.size() < 3 || !is_convex(z.footprint)) {
      throw ScenarioError(zp + "/footprint", "zone '" + z.id + "' footprint must be a convex polygon with at least 3 vertices");
    }
    for (std::size_t k = 0; k < i; ++k) {
      if (interiors_overlap(z.footprint, map.zones[k].footprint)) {
        throw ScenarioError(zp + "/footprint", "zone '" + z.id + "' overlaps zone '" + map.zones[k].id + "'");
      }
    }
  }
  for (std::size_t i = 0; i < map.sensor_coverage.size(); ++i) {
    const auto& c = map.sensor_coverage[i];
    if (c.size() < 3 || !is_convex(c)) {
      throw ScenarioError(path + "/sensor_coverage/" + std::to_string(i), "coverage polygon must be convex");
    }
  }
  for (const auto& e : map.lanes.edges()) {
    const Vec2 a = map.lanes.node(e.from).position;
    const Vec2 b = map.lanes.node(e.to).position;
    if (!map.in_coverage(a) || !map.in_coverage(b) || !map.in_coverage((a + b) * 0.5)) {
      throw ScenarioError(path + "/lanes/edges/" + std::to_string(e.id), "lane edge lies outside sensor coverage");
    }
  }

  std::vector<NodeId> dropoff_slots;
  std::vector<NodeId> pickup_slots;
  for (const auto& z : map.zones) {
    if (z.kind == ZoneKind::DropOff) dropoff_slots.insert(dropoff_slots.end(), z.slots.begin(), z.slots.end());
    if (z.kind == ZoneKind::PickUp) pickup_slots.insert(pickup_slots.end(), z.slots.begin(), z.slots.end());
  }
  if (dropoff_slots.empty()) throw ScenarioError(path + "/zones", "map has no DropOff zone");
  if (pickup_slots.empty()) throw ScenarioError(path + "/zones", "map has no PickUp zone");

  const auto from_dropoff = map.lanes.reachable_from(dropoff_slots.front());
  for (std::size_t i = 0; i < map.zones.size(); ++i) {
    const auto& z = map.zones[i];
    const std::string zp = path + "/zones/" + std::to_string(i);
    for (NodeId slot : z.slots) {
      if (!from_dropoff[slot]) {
        throw ScenarioError(zp, "zone '" + z.id + "' is not reachable from DropOff");
      }
      const auto onward = map.lanes.reachable_from(slot);
      const bool reaches_pickup =
          std::any_of(pickup_slots.begin(), pickup_slots.end(), [&](NodeId p) { return onward[p]; });
      if (!reaches_pickup) {
        throw ScenarioError(zp, "zone '" + z.id + "' cannot reach PickUp");
      }
    }
  }
}

void validate(const ScenarioConfig& cfg) {
  if (std::abs(cfg.tick_s - kTickSeconds) > 1e-12) {
    throw ScenarioError("/tick_s", "tick must equal 0.1");
  }
  const double n = cfg.duration_s / kTickSeconds;
  if (cfg.duration_s <= 0.0 || std::abs(n - std::round(n)) > 1e-6) {
    throw ScenarioError("/duration_s", "duration must be a positive multiple of the tick");
  }
  if (cfg.mode.tag == SpeedRegime::NominalSpeed) {
    if (std::abs(cfg.mode.speed_cap - kNominalSpeedCap) > 1e-9) {
      throw ScenarioError("/mode/speed_cap", "NominalSpeed cap must be 4.4704 m/s");
    }
  } else if (!(cfg.mode.speed_cap > kNominalSpeedCap && cfg.mode.speed_cap <= kHighSpeedMaxCap + 1e-9)) {
    throw ScenarioError("/mode/speed_cap", "HighSpeed cap must lie in (4.4704, 11.176] m/s");
  }
  validate_map(cfg.map, "/map");

  const Tick duration = cfg.duration_ticks();
  std::set<std::uint32_t> vids;
  std::map<std::string, int> spawns;
  for (std::size_t i = 0; i < cfg.vehicles.size(); ++i) {
    const auto& v = cfg.vehicles[i];
    const std::string vp = "/vehicles/" + std::to_string(i);
    if (!vids.insert(raw(v.id)).second) throw ScenarioError(vp + "/id", "duplicate vehicle id");
    const Zone* z = cfg.map.find_zone(v.spawn_zone);
    if (z == nullptr) throw ScenarioError(vp + "/spawn_zone", "unknown zone '" + v.spawn_zone + "'");
    if (!v.spawn_pose && ++spawns[v.spawn_zone] > z->capacity) {
      throw ScenarioError(vp + "/spawn_zone", "zone '" + v.spawn_zone + "' has no free slot");
    }
    if (v.mission.size() < 2 || v.mission.front() != ZoneKind::DropOff || v.mission.back() != ZoneKind::PickUp) {
      throw ScenarioError(vp + "/mission", "mission must start at DropOff and end at PickUp");
    }
    for (std::size_t k = 0; k < v.mission.size(); ++k) {
      const bool present = std::any_of(cfg.map.zones.begin(), cfg.map.zones.end(),
                                       [&](const Zone& zz) { return zz.kind == v.mission[k]; });
      if (!present) {
        throw ScenarioError(vp + "/mission/" + std::to_string(k),
                            std::string("map has no zone of kind ") + to_string(v.mission[k]));
      }
    }
    if (v.initial_speed < 0.0 || v.initial_speed > cfg.mode.speed_cap + 1e-9) {
      throw ScenarioError(vp + "/initial_speed", "initial speed must lie in [0, speed_cap]");
    }
  }

  const auto& peds = cfg.pedestrians;
  if (peds.count < 0) throw ScenarioError("/pedestrians/count", "count must be non-negative");
  if (!(peds.speed_min > 0.0 && peds.speed_min <= peds.speed_max && peds.speed_max <= kMaxPedestrianSpeed)) {
    throw ScenarioError("/pedestrians/speed", "speed range must satisfy 0 < min <= max <= 2.0");
  }
  if (peds.radius <= 0.0) throw ScenarioError("/pedestrians/radius", "radius must be positive");
  if (peds.pause_min_ticks < 0 || peds.pause_min_ticks > peds.pause_max_ticks) {
    throw ScenarioError("/pedestrians/pause", "pause range must satisfy 0 <= min <= max");
  }
  for (std::size_t i = 0; i < peds.areas.size(); ++i) {
    const auto& a = peds.areas[i];
    const std::string ap = "/pedestrians/areas/" + std::to_string(i);
    if (a.size() < 3 || !is_convex(a)) throw ScenarioError(ap, "walk area must be a convex polygon");
    for (auto p : a) {
      if (!cfg.map.in_coverage(p)) throw ScenarioError(ap, "walk area must lie inside sensor coverage");
    }
    if (cfg.traffic == TrafficSituation::Controlled &&
        lane_clearance(cfg.map, a) <= kLaneCorridorHalfWidth + peds.radius) {
      throw ScenarioError(ap, "Controlled traffic confines pedestrians outside lane corridors");
    }
  }
  if (cfg.traffic == TrafficSituation::Controlled && peds.count > 0 && peds.areas.empty()) {
    throw ScenarioError("/pedestrians/areas", "Controlled traffic requires walk areas outside lane corridors");
  }
  for (std::size_t i = 0; i < peds.scripted.size(); ++i) {
    const auto& s = peds.scripted[i];
    const std::string sp = "/pedestrians/scripted/" + std::to_string(i);
    if (!(s.speed > 0.0 && s.speed <= kMaxPedestrianSpeed)) {
      throw ScenarioError(sp + "/speed", "speed must lie in (0, 2.0]");
    }
    if (cfg.traffic == TrafficSituation::Controlled) {
      Vec2 prev = s.start;
      for (const auto& w : s.waypoints) {
        if (lane_clearance(cfg.map, prev, w.position) <= kLaneCorridorHalfWidth + peds.radius) {
          throw ScenarioError(sp, "Controlled traffic confines pedestrians outside lane corridors");
        }
        prev = w.position;
      }
    }
  }

  for (std::size_t i = 0; i < cfg.injections.size(); ++i) {
    const auto& inj = cfg.injections[i];
    const std::string ip = "/injections/" + std::to_string(i);
    if (inj.from_tick < 0 || inj.to_tick < inj.from_tick || inj.to_tick > duration) {
      throw ScenarioError(ip, "injection window must lie within the scenario duration");
    }
    const std::string& t = inj.target;
    bool ok = t == "*" || t == "ix";
    const std::string vpart = t.rfind("down:", 0) == 0 ? t.substr(5) : t.rfind("up:", 0) == 0 ? t.substr(3) : t;
    for (const auto& v : cfg.vehicles) {
      ok = ok || vpart == to_string(v.id);
    }
    if (!ok) throw ScenarioError(ip + "/target", "unknown injection target '" + t + "'");
  }

  for (std::size_t i = 0; i < cfg.events.size(); ++i) {
    const auto& e = cfg.events[i];
    const std::string ep = "/events/" + std::to_string(i);
    if (e.tick < 0 || e.tick > duration) throw ScenarioError(ep + "/tick", "event tick outside duration");
    if (e.kind == EventKind::EstopPress) {
      const bool found = std::any_of(cfg.map.estop_buttons.begin(), cfg.map.estop_buttons.end(),
                                     [&](const EstopButton& b) { return b.id == e.button; });
      if (!found) throw ScenarioError(ep + "/button", "unknown e-stop button '" + e.button + "'");
    }
  }
  for (std::size_t i = 0; i < cfg.obstacles.size(); ++i) {
    if (!cfg.map.in_coverage(cfg.obstacles[i].position)) {
      throw ScenarioError("/obstacles/" + std::to_string(i), "obstacle outside sensor coverage");
    }
  }
  if (cfg.ix.deviation_threshold <= 0.0 || cfg.ix.estop_radius <= 0.0 || cfg.ix.planner_margin < 0.0 ||
      cfg.ix.ped_clearance < 0.0 || cfg.ix.station_dwell_ticks < 0 || cfg.ix.work_budget <= 0) {
    throw ScenarioError("/ix", "ix parameters out of range");
  }
  if (cfg.channel.drop_probability < 0.0 || cfg.channel.drop_probability > 1.0 ||
      cfg.channel.jitter_ticks < 0 || cfg.channel.down_delay_ticks < 0 || cfg.channel.up_delay_ticks < 0) {
    throw ScenarioError("/channel", "channel parameters out of range");
  }
  const auto& vp = cfg.vehicle_params;
  if (vp.service_decel <= 0.0 || vp.aeb_decel < vp.service_decel || vp.max_accel <= 0.0 ||
      vp.coast_decel < 0.0 || vp.length <= 0.0 || vp.width <= 0.0) {
    throw ScenarioError("/vehicle_params", "vehicle parameters out of range");
  }
  if (cfg.aodca.range <= 0.0 || cfg.aodca.aeb_decel < vp.service_decel || cfg.aodca.fov <= 0.0) {
    throw ScenarioError("/aodca", "aodca parameters out of range");
  }
}

namespace {

ZoneKind parse_zone_kind(const Node& n) {
  const auto k = zone_kind_from_string(n.string());
  if (!k) n.fail("unknown zone kind '" + n.string() + "'");
  return *k;
}

PedestrianConfig parse_pedestrians(const Node& n) {
  PedestrianConfig p;
  p.count = static_cast<int>(n.at("count").integer());
  if (n.has("speed")) {
    const Node s = n.at("speed");
    if (!s.j.is_array() || s.size() != 2) s.fail("expected [min, max]");
    p.speed_min = s.item(0).number();
    p.speed_max = s.item(1).number();
  }
  if (n.has("pause")) {
    const Node s = n.at("pause");
    if (!s.j.is_array() || s.size() != 2) s.fail("expected [min_ticks, max_ticks]");
    p.pause_min_ticks = static_cast<int>(s.item(0).integer());
    p.pause_max_ticks = static_cast<int>(s.item(1).integer());
  }
  p.yield_to_vehicles = n.boolean_or("yield_to_vehicles", true);
  p.radius = n.number_or("radius", 0.3);
  if (n.has("areas")) {
    const Node a = n.at("areas");
    a.array();
    for (std::size_t i = 0; i < a.size(); ++i) p.areas.push_back(a.item(i).polygon());
  }
  if (n.has("scripted")) {
    const Node s = n.at("scripted");
    s.array();
    for (std::size_t i = 0; i < s.size(); ++i) {
      const Node e = s.item(i);
      ScriptedPedestrian sp;
      sp.start = e.at("start").point();
      sp.start_tick = e.integer_or("start_tick", 0);
      sp.speed = e.number_or("speed", 1.4);
      const Node w = e.at("waypoints");
      w.array();
      for (std::size_t k = 0; k < w.size(); ++k) {
        const Node wp = w.item(k);
        if (wp.j.is_array()) {
          sp.waypoints.push_back({wp.point(), 0});
        } else {
          sp.waypoints.push_back({wp.at("position").point(), static_cast<int>(wp.integer_or("wait_ticks", 0))});
        }
      }
      p.scripted.push_back(std::move(sp));
    }
  }
  return p;
}

}  // namespace

ScenarioConfig parse_scenario(const json& doc) {
  const Node root{doc, ""};
  if (!doc.is_object()) root.fail("scenario must be a JSON object");
  ScenarioConfig cfg;
  cfg.name = doc.contains("name") && doc["name"].is_string() ? doc["name"].get<std::string>() : "";

  const Node map = root.at("map");
  if (map.j.is_string()) {
    if (map.string() != "default") map.fail("map must be \"default\" or a map object");
    cfg.map = make_default_map();
    cfg.default_map = true;
  } else {
    cfg.map = map_from_json(map.j, "/map");
    cfg.default_map = false;
  }

  const Node mode = root.at("mode");
  const std::string tag = mode.at("tag").string();
  if (tag == "NominalSpeed" || tag == "NS") {
    cfg.mode = {SpeedRegime::NominalSpeed, mode.number_or("speed_cap", kNominalSpeedCap)};
  } else if (tag == "HighSpeed" || tag == "HS") {
    cfg.mode = {SpeedRegime::HighSpeed, mode.number_or("speed_cap", kHighSpeedDefaultCap)};
  } else {
    mode.at("tag").fail("unknown operating mode '" + tag + "'");
  }

  const Node traffic = root.at("traffic");
  const std::string t = traffic.j.is_object() ? traffic.at("tag").string() : traffic.string();
  if (t == "Controlled" || t == "C") cfg.traffic = TrafficSituation::Controlled;
  else if (t == "Uncontrolled" || t == "UC") cfg.traffic = TrafficSituation::Uncontrolled;
  else traffic.fail("unknown traffic situation '" + t + "'");

  cfg.duration_s = root.at("duration_s").number();
  cfg.tick_s = root.at("tick_s").number();
  const Node seed = root.at("seed");
  if (!seed.j.is_number_unsigned() && !seed.j.is_number_integer()) seed.fail("expected an integer seed");
  cfg.seed = seed.j.get<std::uint64_t>();

  const Node vehicles = root.at("vehicles");
  vehicles.array();
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    const Node v = vehicles.item(i);
    VehicleSpec spec;
    spec.id = parse_vehicle_id(v.at("id"));
    spec.spawn_zone = v.at("spawn_zone").string();
    const Node mission = v.at("mission");
    mission.array();
    for (std::size_t k = 0; k < mission.size(); ++k) spec.mission.push_back(parse_zone_kind(mission.item(k)));
    if (v.has("capabilities")) {
      spec.capabilities.clear();
      const Node c = v.at("capabilities");
      c.array();
      for (std::size_t k = 0; k < c.size(); ++k) spec.capabilities.push_back(c.item(k).string());
    }
    spec.auto_checkin = v.boolean_or("auto_checkin", true);
    if (v.has("spawn_pose")) {
      const Node p = v.at("spawn_pose");
      if (!p.j.is_array() || p.size() != 3) p.fail("expected [x, y, heading]");
      spec.spawn_pose = Pose{p.item(0).number(), p.item(1).number(), normalize_angle(p.item(2).number())};
    }
    spec.initial_speed = v.number_or("initial_speed", 0.0);
    cfg.vehicles.push_back(std::move(spec));
  }

  cfg.pedestrians = parse_pedestrians(root.at("pedestrians"));

  const Node injections = root.at("injections");
  injections.array();
  for (std::size_t i = 0; i < injections.size(); ++i) {
    const Node e = injections.item(i);
    Injection inj;
    const auto h = hazard_from_string(e.at("hazard").string());
    if (!h) e.at("hazard").fail("unknown hazard '" + e.at("hazard").string() + "'");
    inj.hazard = *h;
    inj.target = e.has("target") ? e.at("target").string() : "*";
    inj.from_tick = e.at("from_tick").integer();
    inj.to_tick = e.at("to_tick").integer();
    if (e.has("params")) {
      if (!e.at("params").j.is_object()) e.at("params").fail("expected an object");
      inj.params = e.at("params").j;
    }
    cfg.injections.push_back(std::move(inj));
  }

  const Node sec = root.at("sec_table");
  try {
    if (sec.j.is_string()) {
      if (sec.string() != "default") sec.fail("sec_table must be \"default\" or an object");
      std::ifstream in(std::string(IXDA_DATA_DIR) + "/hara/sec_table.json");
      if (!in) sec.fail("bundled sec_table not found");
      cfg.sec_table = hara::parse_sec_table(json::parse(in));
    } else {
      cfg.sec_table = hara::parse_sec_table(json{{"sec_table", sec.j}});
    }
  } catch (const hara::HaraError& e) {
    throw ScenarioError("/sec_table", e.what());
  }

  if (root.has("obstacles")) {
    const Node o = root.at("obstacles");
    o.array();
    for (std::size_t i = 0; i < o.size(); ++i) {
      const Node e = o.item(i);
      cfg.obstacles.push_back({e.has("id") ? e.at("id").string() : "O" + std::to_string(i + 1),
                               e.at("position").point(), e.number_or("radius", 0.5)});
    }
  }
  if (root.has("mitigations")) {
    const Node m = root.at("mitigations");
    auto& mt = cfg.mitigations;
    mt.aodca = m.boolean_or("aodca", true);
    mt.dual_brake = m.boolean_or("dual_brake", true);
    mt.speed_limiter = m.boolean_or("speed_limiter", true);
    mt.watchdog = m.boolean_or("watchdog", true);
    mt.ix_pedestrian_avoidance = m.boolean_or("ix_pedestrian_avoidance", true);
    mt.estop_monitor = m.boolean_or("estop_monitor", true);
  }
  if (root.has("vehicle_params")) {
    const Node p = root.at("vehicle_params");
    auto& vp = cfg.vehicle_params;
    vp.service_decel = p.number_or("service_decel", vp.service_decel);
    vp.aeb_decel = p.number_or("aeb_decel", vp.aeb_decel);
    vp.max_accel = p.number_or("max_accel", vp.max_accel);
    vp.coast_decel = p.number_or("coast_decel", vp.coast_decel);
    vp.length = p.number_or("length", vp.length);
    vp.width = p.number_or("width", vp.width);
  }
  cfg.aodca.aeb_decel = cfg.vehicle_params.aeb_decel;
  if (root.has("aodca")) {
    const Node a = root.at("aodca");
    cfg.aodca.range = a.number_or("range", cfg.aodca.range);
    cfg.aodca.fov = a.number_or("fov", cfg.aodca.fov);
    cfg.aodca.margin = a.number_or("margin", cfg.aodca.margin);
  }
  if (root.has("channel")) {
    const Node c = root.at("channel");
    auto& ch = cfg.channel;
    ch.down_delay_ticks = static_cast<int>(c.integer_or("down_delay_ticks", ch.down_delay_ticks));
    ch.up_delay_ticks = static_cast<int>(c.integer_or("up_delay_ticks", ch.up_delay_ticks));
    ch.drop_probability = c.number_or("drop_probability", ch.drop_probability);
    ch.jitter_ticks = static_cast<int>(c.integer_or("jitter_ticks", ch.jitter_ticks));
  }
  if (root.has("ix")) {
    const Node x = root.at("ix");
    auto& ix = cfg.ix;
    ix.planner_margin = x.number_or("planner_margin", ix.planner_margin);
    ix.junction_radius = x.number_or("junction_radius", ix.junction_radius);
    ix.ped_clearance = x.number_or("ped_clearance", ix.ped_clearance);
    ix.station_dwell_ticks = static_cast<int>(x.integer_or("station_dwell_ticks", ix.station_dwell_ticks));
    ix.deviation_threshold = x.number_or("deviation_threshold", ix.deviation_threshold);
    ix.estop_radius = x.number_or("estop_radius", ix.estop_radius);
    ix.work_budget = x.integer_or("work_budget", ix.work_budget);
  }
  if (root.has("events")) {
    const Node ev = root.at("events");
    ev.array();
    for (std::size_t i = 0; i < ev.size(); ++i) {
      const Node e = ev.item(i);
      ScenarioEvent se;
      se.tick = e.at("tick").integer();
      const std::string kind = e.at("kind").string();
      bool known = false;
      for (auto k : {EventKind::EstopPress, EventKind::Estop, EventKind::Release, EventKind::Hazard,
                     EventKind::HazardClear, EventKind::Checkin, EventKind::Checkout}) {
        if (kind == to_string(k)) {
          se.kind = k;
          known = true;
        }
      }
      if (!known) e.at("kind").fail("unknown event kind '" + kind + "'");
      if (e.has("target")) se.target = e.at("target").string();
      if (e.has("button")) se.button = e.at("button").string();
      if (e.has("event")) se.event = e.at("event").string();
      if (e.has("driver")) se.driver = e.at("driver").string();
      if (e.has("token")) se.token = e.at("token").string();
      cfg.events.push_back(std::move(se));
    }
  }
  if (root.has("drivers")) {
    const Node d = root.at("drivers");
    d.array();
    for (std::size_t i = 0; i < d.size(); ++i) {
      cfg.drivers.push_back({d.item(i).at("id").string(), d.item(i).at("token").string()});
    }
  }
  validate(cfg);
  return cfg;
}

ScenarioConfig load_scenario(const std::string& document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ScenarioError("/", std::string("invalid JSON: ") + e.what());
  }
  return parse_scenario(doc);
}

ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open scenario " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return load_scenario(ss.str());
}

json serialize(const ScenarioConfig& cfg) {
  json doc;
  if (!cfg.name.empty()) doc["name"] = cfg.name;
  doc["map"] = cfg.default_map ? json("default") : map_to_json(cfg.map);
  doc["mode"] = {{"tag", to_string(cfg.mode.tag)}, {"speed_cap", cfg.mode.speed_cap}};
  doc["traffic"] = to_string(cfg.traffic);
  doc["duration_s"] = cfg.duration_s;
  doc["tick_s"] = cfg.tick_s;
  doc["seed"] = cfg.seed;
  json vehicles = json::array();
  for (const auto& v : cfg.vehicles) {
    json mission = json::array();
    for (auto k : v.mission) mission.push_back(to_string(k));
    json jv = {{"id", raw(v.id)},
               {"spawn_zone", v.spawn_zone},
               {"mission", mission},
               {"capabilities", v.capabilities},
               {"auto_checkin", v.auto_checkin}};
    if (v.spawn_pose) jv["spawn_pose"] = {v.spawn_pose->x, v.spawn_pose->y, v.spawn_pose->heading};
    if (v.initial_speed != 0.0) jv["initial_speed"] = v.initial_speed;
    vehicles.push_back(jv);
  }
  doc["vehicles"] = vehicles;
  const auto& p = cfg.pedestrians;
  json areas = json::array();
  for (const auto& a : p.areas) areas.push_back(polygon_json(a));
  json scripted = json::array();
  for (const auto& s : p.scripted) {
    json wps = json::array();
    for (const auto& w : s.waypoints) wps.push_back({{"position", point_json(w.position)}, {"wait_ticks", w.wait_ticks}});
    scripted.push_back({{"start", point_json(s.start)}, {"start_tick", s.start_tick}, {"speed", s.speed}, {"waypoints", wps}});
  }
  doc["pedestrians"] = {{"count", p.count},
                        {"speed", {p.speed_min, p.speed_max}},
                        {"pause", {p.pause_min_ticks, p.pause_max_ticks}},
                        {"yield_to_vehicles", p.yield_to_vehicles},
                        {"radius", p.radius},
                        {"areas", areas},
                        {"scripted", scripted}};
  json inj = json::array();
  for (const auto& i : cfg.injections) {
    inj.push_back({{"hazard", to_string(i.hazard)},
                   {"target", i.target},
                   {"from_tick", i.from_tick},
                   {"to_tick", i.to_tick},
                   {"params", i.params}});
  }
  doc["injections"] = inj;
  doc["sec_table"] = hara::sec_table_to_json(cfg.sec_table).at("sec_table");
  json obstacles = json::array();
  for (const auto& o : cfg.obstacles) {
    obstacles.push_back({{"id", o.id}, {"position", point_json(o.position)}, {"radius", o.radius}});
  }
  doc["obstacles"] = obstacles;
  const auto& m = cfg.mitigations;
  doc["mitigations"] = {{"aodca", m.aodca},
                        {"dual_brake", m.dual_brake},
                        {"speed_limiter", m.speed_limiter},
                        {"watchdog", m.watchdog},
                        {"ix_pedestrian_avoidance", m.ix_pedestrian_avoidance},
                        {"estop_monitor", m.estop_monitor}};
  const auto& vp = cfg.vehicle_params;
  doc["vehicle_params"] = {{"service_decel", vp.service_decel}, {"aeb_decel", vp.aeb_decel},
                           {"max_accel", vp.max_accel},         {"coast_decel", vp.coast_decel},
                           {"length", vp.length},               {"width", vp.width}};
  doc["aodca"] = {{"range", cfg.aodca.range}, {"fov", cfg.aodca.fov}, {"margin", cfg.aodca.margin}};
  const auto& ch = cfg.channel;
  doc["channel"] = {{"down_delay_ticks", ch.down_delay_ticks},
                    {"up_delay_ticks", ch.up_delay_ticks},
                    {"drop_probability", ch.drop_probability},
                    {"jitter_ticks", ch.jitter_ticks}};
  const auto& ix = cfg.ix;
  doc["ix"] = {{"planner_margin", ix.planner_margin},
               {"junction_radius", ix.junction_radius},
               {"ped_clearance", ix.ped_clearance},
               {"station_dwell_ticks", ix.station_dwell_ticks},
               {"deviation_threshold", ix.deviation_threshold},
               {"estop_radius", ix.estop_radius},
               {"work_budget", ix.work_budget}};
  json events = json::array();
  for (const auto& e : cfg.events) {
    json je = {{"tick", e.tick}, {"kind", to_string(e.kind)}};
    if (!e.target.empty()) je["target"] = e.target;
    if (!e.button.empty()) je["button"] = e.button;
    if (!e.event.empty()) je["event"] = e.event;
    if (!e.driver.empty()) je["driver"] = e.driver;
    if (!e.token.empty()) je["token"] = e.token;
    events.push_back(je);
  }
  doc["events"] = events;
  json drivers = json::array();
  for (const auto& d : cfg.drivers) drivers.push_back({{"id", d.id}, {"token", d.token}});
  doc["drivers"] = drivers;
  return doc;
}

}  // namespace ixda
