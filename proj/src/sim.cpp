#include "ixda/sim.hpp"

#include <algorithm>
#include <cmath>

namespace ixda {

using nlohmann::json;

namespace {

constexpr Tick kEstopLatencyTicks = 1;
constexpr double kArrivalTolerance = 0.5;
constexpr Tick kResendTicks = 10;
constexpr Tick kNoRouteRetryTicks = 50;
constexpr std::size_t kMaxCommitments = 64;
constexpr std::size_t kFeedAlerts = 20;

json pose_json(const Pose& p) { return json::array({p.x, p.y, p.heading}); }
Pose pose_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json health_json(const HealthStatus& h) {
  return json::array({h.brake_primary_ok, h.brake_secondary_ok, h.power_ok, h.aodca_ok});
}
HealthStatus health_from(const json& j) {
  return {j.at(0).get<bool>(), j.at(1).get<bool>(), j.at(2).get<bool>(), j.at(3).get<bool>()};
}

json vehicle_json(const VehicleState& v) {
  return {{"id", raw(v.id)},
          {"pose", pose_json(v.pose)},
          {"speed", v.speed},
          {"accel", v.accel},
          {"mode", to_string(v.mode)},
          {"health", health_json(v.health)},
          {"last_traj_tick", v.last_traj_tick},
          {"active_traj", v.active_traj ? to_json(*v.active_traj) : json(nullptr)},
          {"traj_progress", v.traj_progress},
          {"lights", to_string(v.lights)},
          {"doors", to_string(v.doors)},
          {"warnings", v.warnings},
          {"aeb_clear_ticks", v.aeb_clear_ticks}};
}

VehicleState vehicle_from(const json& j) {
  VehicleState v;
  v.id = VehicleId{j.at("id").get<std::uint32_t>()};
  v.pose = pose_from(j.at("pose"));
  v.speed = j.at("speed").get<double>();
  v.accel = j.at("accel").get<double>();
  v.mode = *drive_mode_from_string(j.at("mode").get<std::string>());
  v.health = health_from(j.at("health"));
  v.last_traj_tick = j.at("last_traj_tick").get<Tick>();
  if (!j.at("active_traj").is_null()) {
    v.active_traj = trajectory_from_json(j.at("active_traj"));
  }
  v.traj_progress = j.at("traj_progress").get<double>();
  v.lights = *lights_from_string(j.at("lights").get<std::string>());
  v.doors = *doors_from_string(j.at("doors").get<std::string>());
  v.warnings = j.at("warnings").get<std::vector<std::string>>();
  v.aeb_clear_ticks = j.at("aeb_clear_ticks").get<int>();
  return v;
}

json commitment_json(const Commitment& c) {
  return {{"issued", c.issued_tick}, {"version", c.route_version}, {"arcs", c.arcs}, {"speeds", c.speeds}};
}
Commitment commitment_from(const json& j) {
  return {j.at("issued").get<Tick>(), j.at("version").get<int>(), j.at("arcs").get<std::vector<double>>(),
          j.at("speeds").get<std::vector<double>>()};
}

json report_json(const StateReport& r) {
  return {{"pose", pose_json(r.pose)},
          {"speed", r.speed},
          {"accel", r.accel},
          {"mode", to_string(r.mode)},
          {"health", health_json(r.health)},
          {"last_traj_tick", r.last_traj_tick},
          {"active_issued_tick", r.active_issued_tick},
          {"lights", to_string(r.lights)},
          {"doors", to_string(r.doors)},
          {"warnings", r.warnings},
          {"aodca_nearest", r.aodca_nearest}};
}
StateReport report_from(const json& j) {
  StateReport r;
  r.pose = pose_from(j.at("pose"));
  r.speed = j.at("speed").get<double>();
  r.accel = j.at("accel").get<double>();
  r.mode = *drive_mode_from_string(j.at("mode").get<std::string>());
  r.health = health_from(j.at("health"));
  r.last_traj_tick = j.at("last_traj_tick").get<Tick>();
  r.active_issued_tick = j.at("active_issued_tick").get<Tick>();
  r.lights = *lights_from_string(j.at("lights").get<std::string>());
  r.doors = *doors_from_string(j.at("doors").get<std::string>());
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  r.aodca_nearest = j.at("aodca_nearest").get<double>();
  return r;
}

PlannerConfig planner_config(const ScenarioConfig& cfg) {
  PlannerConfig pc;
  pc.margin = cfg.ix.planner_margin;
  pc.junction_radius = cfg.ix.junction_radius;
  pc.ped_clearance = cfg.ix.ped_clearance;
  pc.service_decel = cfg.vehicle_params.service_decel;
  pc.max_accel = cfg.vehicle_params.max_accel;
  pc.half_length = cfg.vehicle_params.length / 2.0;
  pc.half_width = cfg.vehicle_params.width / 2.0;
  pc.work_budget = static_cast<long>(cfg.ix.work_budget);
  return pc;
}

}  // namespace

struct Simulation::Impl {
  enum class Phase { Waiting, Driving, Entering, Dwell, Done };

  // How a route was built, so a restored run rebuilds it identically.
  struct RouteSpec {
    int kind = 2;  // 0 between nodes, 1 from edge, 2 hold at node
    int a = 0;
    int b = 0;
    int version = 0;
  };

  struct VehicleRt {
    VehicleSpec spec;
    VehicleState st;
    AuthKey key{};
    bool present = true;
    bool onboarded = false;
    bool request_pending = false;
    bool estop_cmd = false;
    bool estop_release = false;
    StationCommand station = StationCommand::None;
    AodcaResult scan;
    bool deviating = false;
    // Tracking error injected by the test hook; carried through every step.
    Vec2 drift{};
  };

  struct Track {
    bool accepted = false;
    std::optional<StateReport> report;
    Tick report_tick = -1;
    RouteSpec rspec;
    Route route;
    bool has_route = false;
    bool fresh_route = true;
    int leg = 0;
    Phase phase = Phase::Waiting;
    Tick phase_tick = 0;
    Tick retry_tick = 0;
    Tick last_cmd_tick = -1000;
    std::string zone;
    bool loaded_ready = false;
    std::vector<Commitment> sent;
    double s_hint = 0.0;
  };

  struct EstopMsg {
    Tick deliver = 0;
    Message msg;
  };

  Simulation& sim;
  const ScenarioConfig& cfg;
  Planner planner;
  PedestrianModel peds;
  ChannelModel channel;
  std::map<std::uint32_t, VehicleRt> veh;
  std::map<std::uint32_t, Track> tracks;
  OnboardingRegistry registry;
  HazardProtocol protocol;
  std::map<std::string, std::vector<std::optional<std::uint32_t>>> slots;
  std::map<std::uint32_t, std::pair<std::string, int>> holding;
  std::deque<EstopMsg> estop_q;
  std::set<std::uint32_t> estopped;
  std::deque<Command> inbound;
  CollisionTracker contacts;
  std::vector<TrackedObject> tracked;
  ReservationTable table;
  HazardState hz;
  int route_counter = 0;
  int auth_rejects = 0;
  std::string planning_state = "ok";

  Impl(Simulation& s, const ScenarioConfig& c)
      : sim(s),
        cfg(c),
        planner(c.map, planner_config(c)),
        peds(c, c.seed),
        channel(c.channel, c.seed ^ 0x9e3779b97f4a7c15ull) {
    for (const auto& z : cfg.map.zones) {
      slots[z.id].assign(z.slots.size(), std::nullopt);
    }
    auto specs = cfg.vehicles;
    std::sort(specs.begin(), specs.end(), [](const auto& a, const auto& b) { return raw(a.id) < raw(b.id); });
    for (const auto& spec : specs) {
      VehicleRt v;
      v.spec = spec;
      v.st.id = spec.id;
      v.key = derive_key(cfg.seed, to_string(spec.id));
      if (spec.spawn_pose) {
        v.st.pose = *spec.spawn_pose;
      } else {
        const Zone* z = cfg.map.find_zone(spec.spawn_zone);
        const auto idx = claim_slot(z->id, raw(spec.id));
        const NodeId node = z->slots.at(static_cast<std::size_t>(idx.value()));
        holding[raw(spec.id)] = {z->id, *idx};
        v.st.pose = node_pose(node);
      }
      v.st.speed = spec.initial_speed;
      v.st.health = injected_health(HazardState{}, spec.id, cfg.mitigations.dual_brake);
      v.request_pending = spec.auto_checkin;
      veh[raw(spec.id)] = std::move(v);
    }
  }

  Pose node_pose(NodeId n) const {
    const auto& g = cfg.map.lanes;
    const Vec2 p = g.node(n).position;
    double heading = 0.0;
    if (!g.out_edges(n).empty()) {
      const auto& e = g.edge(g.out_edges(n).front());
      const Vec2 d = g.node(e.to).position - p;
      heading = std::atan2(d.y, d.x);
    } else if (!g.in_edges(n).empty()) {
      const auto& e = g.edge(g.in_edges(n).front());
      const Vec2 d = p - g.node(e.from).position;
      heading = std::atan2(d.y, d.x);
    }
    return {p.x, p.y, normalize_angle(heading)};
  }

  /// The slot directly behind the rearmost claimed one, or the front slot.
  std::optional<int> claim_slot(const std::string& zone, std::uint32_t v) {
    auto& s = slots.at(zone);
    int rear = -1;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i]) {
        rear = static_cast<int>(i);
      }
    }
    const int idx = rear + 1;
    if (idx >= static_cast<int>(s.size())) {
      return std::nullopt;
    }
    s[static_cast<std::size_t>(idx)] = v;
    return idx;
  }

  void release_slot(std::uint32_t v) {
    const auto it = holding.find(v);
    if (it == holding.end()) {
      return;
    }
    slots.at(it->second.first).at(static_cast<std::size_t>(it->second.second)).reset();
    holding.erase(it);
  }

  Route build_route(const RouteSpec& r) const {
    switch (r.kind) {
      case 0: return route_between(cfg.map, r.a, r.b, r.version);
      case 1: return route_from_edge(cfg.map, r.a, r.b, r.version);
      default: return route_hold(cfg.map, r.a, r.version);
    }
  }

  void set_route(Track& t, RouteSpec r) {
    r.version = ++route_counter;
    Route next = build_route(r);
    if (t.has_route && !t.sent.empty()) {
      // Plans already sent stay binding; restate them in the new route's arc.
      const auto& g = cfg.map.lanes;
      const double s_new = next.project(g, t.route.pose_at(g, t.s_hint).position());
      for (auto& c : t.sent) {
        for (auto& a : c.arcs) {
          a = next.project(g, t.route.pose_at(g, a).position(), s_new - 15.0, s_new + 60.0);
        }
        c.route_version = r.version;
      }
      t.s_hint = s_new;
    }
    t.route = std::move(next);
    t.rspec = r;
    t.has_route = true;
    t.fresh_route = true;
  }

  /// Vehicles bound for the same zone take its slots in arrival order, so a
  /// vehicle never parks across the lane to a slot further in.
  void reorder_slots(Tick now) {
    const auto& g = cfg.map.lanes;
    for (const auto& z : cfg.map.zones) {
      std::vector<std::tuple<double, std::uint32_t, int>> inbound_to;
      for (const auto& [id, t] : tracks) {
        const auto h = holding.find(id);
        if (t.phase != Phase::Driving || !t.has_route || !t.route.goal_s || h == holding.end() ||
            h->second.first != z.id) {
          continue;
        }
        const int idx = h->second.second;
        const double to_front = distance(g.node(z.slots.at(static_cast<std::size_t>(idx))).position,
                                         g.node(z.slots.front()).position);
        inbound_to.emplace_back(*t.route.goal_s - t.s_hint + to_front, id, idx);
      }
      if (inbound_to.size() < 2) {
        continue;
      }
      std::vector<int> idxs;
      for (const auto& e : inbound_to) {
        idxs.push_back(std::get<2>(e));
      }
      std::sort(idxs.begin(), idxs.end());
      std::sort(inbound_to.begin(), inbound_to.end());
      for (std::size_t i = 0; i < inbound_to.size(); ++i) {
        const auto [dist, id, old_idx] = inbound_to[i];
        const int idx = idxs[i];
        if (idx == old_idx) {
          continue;
        }
        auto& t = tracks.at(id);
        holding[id] = {z.id, idx};
        slots.at(z.id).at(static_cast<std::size_t>(idx)) = id;
        RouteSpec r = t.rspec;
        r.b = z.slots.at(static_cast<std::size_t>(idx));
        set_route(t, r);
        sim.trace_.append(now, "mission", {{"vehicle", to_string(VehicleId{id})}, {"event", "reslot"},
                                           {"zone", z.id}, {"slot", idx}});
      }
    }
  }

  // Current position as the IX knows it: fresh report, else sensing, else the last report.
  std::optional<std::pair<Pose, double>> ix_view(std::uint32_t id, const Track& t, Tick now) const {
    if (t.report && t.report_tick == now) {
      return std::make_pair(t.report->pose, t.report->speed);
    }
    const std::string name = to_string(VehicleId{id});
    for (const auto& o : tracked) {
      if (o.id == name) {
        return std::make_pair(Pose{o.position.x, o.position.y, std::atan2(o.velocity.y, o.velocity.x)},
                              norm(o.velocity));
      }
    }
    if (t.report) {
      return std::make_pair(t.report->pose, t.report->speed);
    }
    return std::nullopt;
  }

  void hold_route(std::uint32_t id, Track& t) {
    if (const auto it = holding.find(id); it != holding.end()) {
      const Zone* z = cfg.map.find_zone(it->second.first);
      set_route(t, {2, z->slots.at(static_cast<std::size_t>(it->second.second)), 0, 0});
      return;
    }
    const EdgeId e = locate_edge(cfg.map.lanes, veh.at(id).st.pose);
    set_route(t, {1, e, cfg.map.lanes.edge(e).to, 0});
  }

  /// Claims a slot in the next mission zone and routes there.
  bool start_leg(std::uint32_t id, Track& t, Tick now) {
    const auto& mission = veh.at(id).spec.mission;
    const std::size_t next = static_cast<std::size_t>(t.leg) + 1;
    if (next >= mission.size()) {
      t.phase = Phase::Done;
      return false;
    }
    for (const auto& z : cfg.map.zones) {
      if (z.kind != mission[next]) {
        continue;
      }
      const auto idx = claim_slot(z.id, id);
      if (!idx) {
        continue;
      }
      const NodeId goal = z.slots.at(static_cast<std::size_t>(*idx));
      RouteSpec r;
      if (const auto it = holding.find(id); it != holding.end()) {
        const Zone* from = cfg.map.find_zone(it->second.first);
        r = {0, from->slots.at(static_cast<std::size_t>(it->second.second)), goal, 0};
      } else {
        r = {1, locate_edge(cfg.map.lanes, veh.at(id).st.pose), goal, 0};
      }
      try {
        set_route(t, r);
      } catch (const NoRoute& e) {
        slots.at(z.id).at(static_cast<std::size_t>(*idx)).reset();
        sim.trace_.append(now, "planner", {{"vehicle", to_string(VehicleId{id})}, {"error", "NoRoute"},
                                           {"detail", e.what()}});
        t.phase = Phase::Waiting;
        t.retry_tick = now + kNoRouteRetryTicks;
        return false;
      }
      release_slot(id);
      holding[id] = {z.id, *idx};
      t.zone = z.id;
      t.leg = static_cast<int>(next);
      t.phase = Phase::Driving;
      t.phase_tick = now;
      sim.trace_.append(now, "mission", {{"vehicle", to_string(VehicleId{id})}, {"event", "leg"},
                                         {"zone", z.id}, {"slot", *idx}});
      return true;
    }
    t.phase = Phase::Waiting;
    return false;
  }

  Message make_msg(const std::string& from, const std::string& to, Tick now, Payload p, const AuthKey& key) {
    Message m{from, to, now, std::move(p), {}};
    sign(m, key);
    return m;
  }

  void send_down(std::uint32_t id, Tick now, Payload p) {
    auto& v = veh.at(id);
    Message m = make_msg(kIxEndpoint, to_string(v.st.id), now, std::move(p), v.key);
    const auto when = channel.send(m, Direction::Down, now);
    if (sim.trace_.full()) {
      sim.trace_.append(now, "message", {{"direction", "down"},
                                         {"delivery", when ? json(*when) : json(nullptr)},
                                         {"message", to_json(m)}});
    }
  }

  void send_up(std::uint32_t id, Tick now, Payload p) {
    auto& v = veh.at(id);
    Message m = make_msg(to_string(v.st.id), kIxEndpoint, now, std::move(p), v.key);
    const auto when = channel.send(m, Direction::Up, now);
    if (sim.trace_.full()) {
      sim.trace_.append(now, "message", {{"direction", "up"},
                                         {"delivery", when ? json(*when) : json(nullptr)},
                                         {"message", to_json(m)}});
    }
  }

  /// Sends over the dedicated e-stop path; false when the path is down.
  bool send_estop(std::uint32_t id, Tick now, Payload p) {
    if (hz.estop_path_down) {
      return false;
    }
    auto& v = veh.at(id);
    estop_q.push_back({now + kEstopLatencyTicks, make_msg(kIxEndpoint, to_string(v.st.id), now, std::move(p), v.key)});
    return true;
  }

  void step(Tick now);
  void handle_command(const Command& c, Tick now);
  void deliver_downstream(Tick now);
  void move_vehicles(Tick now);
  void report_upstream(Tick now);
  void ix_cycle(Tick now);
  void update_missions(Tick now);
  void plan(Tick now);
  void end_of_tick(Tick now);

  json save() const;
  void load(const json& j);
};

void Simulation::Impl::step(Tick now) {
  hz = apply_injections(cfg.injections, now);
  channel.set_impairments(hz.impairments);
  for (auto& [id, v] : veh) {
    v.st.health = injected_health(hz, v.st.id, cfg.mitigations.dual_brake);
  }
  for (const auto& e : cfg.events) {
    if (e.tick == now) {
      handle_command(e, now);
    }
  }
  while (!inbound.empty()) {
    const Command c = inbound.front();
    inbound.pop_front();
    handle_command(c, now);
  }
  deliver_downstream(now);
  move_vehicles(now);
  std::vector<VehicleBody> bodies;
  for (const auto& [id, v] : veh) {
    if (v.present) {
      bodies.push_back({v.st.pose, v.st.speed});
    }
  }
  peds.step(now, bodies);
  report_upstream(now);
  ix_cycle(now);
  end_of_tick(now);
}

void Simulation::Impl::handle_command(const Command& c, Tick now) {
  auto targets = [&](const std::string& target) {
    std::vector<std::uint32_t> out;
    for (const auto& [id, v] : veh) {
      if (v.present && (target == "*" || target == to_string(v.st.id))) {
        out.push_back(id);
      }
    }
    return out;
  };
  switch (c.kind) {
    case EventKind::EstopPress: {
      const auto& buttons = cfg.map.estop_buttons;
      const auto it = std::find_if(buttons.begin(), buttons.end(), [&](const auto& b) { return b.id == c.button; });
      if (it == buttons.end()) {
        return;
      }
      json hits = json::array();
      for (const auto& [id, v] : veh) {
        if (!v.present) {
          continue;
        }
        // Radius is button centre to vehicle centre, positions as of the end of the last tick.
        const double d = distance(it->position, v.st.pose.position());
        if (d <= cfg.ix.estop_radius) {
          send_estop(id, now, EmergencyStopPayload{"button " + it->id});
          estopped.insert(id);
          hits.push_back({{"id", to_string(v.st.id)}, {"distance", d}, {"speed", v.st.speed}});
        }
      }
      sim.trace_.append(now, "estop_press", {{"button", it->id},
                                              {"position", json::array({it->position.x, it->position.y})},
                                              {"radius", cfg.ix.estop_radius},
                                              {"vehicles", hits},
                                              {"delivered", !hz.estop_path_down}});
      return;
    }
    case EventKind::Estop: {
      json hits = json::array();
      for (auto id : targets(c.target)) {
        if (estopped.contains(id)) {
          continue;  // duplicate e-stops are no-ops
        }
        send_estop(id, now, EmergencyStopPayload{"operator"});
        estopped.insert(id);
        hits.push_back({{"id", to_string(VehicleId{id})}, {"speed", veh.at(id).st.speed}});
      }
      if (!hits.empty()) {
        sim.trace_.append(now, "estop_cmd",
                          {{"target", c.target}, {"vehicles", hits}, {"delivered", !hz.estop_path_down}});
      }
      return;
    }
    case EventKind::Release: {
      json ids = json::array();
      for (auto id : targets(c.target)) {
        send_estop(id, now, EstopReleasePayload{});
        estopped.erase(id);
        ids.push_back(to_string(VehicleId{id}));
      }
      sim.trace_.append(now, "release", {{"target", c.target}, {"vehicles", ids}, {"delivered", !hz.estop_path_down}});
      return;
    }
    case EventKind::Hazard: {
      const auto h = operational_hazard_from_string(c.event);
      if (!h) {
        return;
      }
      const bool fresh = protocol.raise(*h, now);
      if (fresh) {
        for (auto id : targets("*")) {
          send_estop(id, now, EmergencyStopPayload{c.event});
          estopped.insert(id);
        }
      }
      sim.trace_.append(now, "op_hazard", {{"event", c.event}, {"action", "raise"}, {"broadcast", fresh}});
      return;
    }
    case EventKind::HazardClear: {
      const auto active = protocol.active();
      if (!protocol.clear(now)) {
        return;
      }
      const std::string name = active ? to_string(*active) : "";
      for (auto id : targets("*")) {
        send_estop(id, now, EstopReleasePayload{});
        estopped.erase(id);
        send_down(id, now, HazardClearPayload{name});
      }
      sim.trace_.append(now, "op_hazard", {{"event", name}, {"action", "clear"}});
      return;
    }
    case EventKind::Checkin:
      sim.checkin(c.driver, c.token, c.target);
      return;
    case EventKind::Checkout:
      sim.checkout(c.driver, c.token, c.target);
      return;
  }
}

void Simulation::Impl::deliver_downstream(Tick now) {
  for (auto& [id, v] : veh) {
    v.estop_cmd = false;
    v.estop_release = false;
    v.station = StationCommand::None;
  }
  std::vector<Message> msgs = channel.deliver_due(now, Direction::Down);
  while (!estop_q.empty() && estop_q.front().deliver <= now) {
    msgs.push_back(std::move(estop_q.front().msg));
    estop_q.pop_front();
  }
  for (const auto& m : msgs) {
    const auto it = std::find_if(veh.begin(), veh.end(),
                                 [&](const auto& kv) { return to_string(kv.second.st.id) == m.recipient; });
    if (it == veh.end() || !it->second.present) {
      continue;
    }
    auto& v = it->second;
    if (!verify(m, v.key)) {
      ++auth_rejects;
      sim.trace_.append(now, "auth_reject", {{"receiver", m.recipient}, {"sender", m.sender},
                                             {"kind", to_string(m.kind())}, {"count", auth_rejects}});
      continue;
    }
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Trajectory>) {
            // Late plans describe a past the vehicle has left; only on-time ones are taken.
            if (v.onboarded && now - p.issued_tick <= cfg.channel.down_delay_ticks) {
              accept_trajectory(v.st, p, now);
            }
          } else if constexpr (std::is_same_v<T, EmergencyStopPayload>) {
            v.estop_cmd = true;
          } else if constexpr (std::is_same_v<T, EstopReleasePayload>) {
            v.estop_release = true;
          } else if constexpr (std::is_same_v<T, StationPayload>) {
            v.station = p.enter ? StationCommand::Enter : StationCommand::Exit;
          } else if constexpr (std::is_same_v<T, OnboardAckPayload>) {
            v.onboarded = p.accepted;
          }
        },
        m.payload);
  }
}

void Simulation::Impl::move_vehicles(Tick now) {
  const auto& params = cfg.vehicle_params;
  // Everyone scans the world as it stood at the start of the tick.
  std::map<std::uint32_t, std::vector<Obstacle>> bodies;
  for (const auto& [id, v] : veh) {
    if (v.present) {
      bodies[id] = body_circles(v.st.pose, params);
    }
  }
  std::vector<Obstacle> shared;
  for (const auto& p : peds.visible()) {
    shared.push_back({p.position, p.radius});
  }
  for (const auto& o : cfg.obstacles) {
    shared.push_back({o.position, o.radius});
  }
  for (auto& [id, v] : veh) {
    if (!v.present) {
      continue;
    }
    const bool aodca_on = cfg.mitigations.aodca && v.st.health.aodca_ok;
    v.scan = AodcaResult{};
    if (aodca_on) {
      std::vector<Obstacle> obs = shared;
      for (const auto& [other, circles] : bodies) {
        if (other != id) {
          obs.insert(obs.end(), circles.begin(), circles.end());
        }
      }
      v.scan = aodca_scan(v.st, obs, cfg.aodca, params);
    }
    VcuInputs in;
    in.traj_age_ticks = v.st.active_traj ? now - v.st.last_traj_tick : 0;
    in.aodca_detected = v.scan.detected;
    in.estop_cmd = v.estop_cmd;
    in.estop_release = v.estop_release;
    in.station_cmd = v.station;
    in.health = v.st.health;
    if (cfg.mitigations.speed_limiter) {
      in.speed_cap = cfg.mode.speed_cap;
    }
    in.target_speed_factor = hz.speed_factor_for(v.st.id);
    in.watchdog_enabled = cfg.mitigations.watchdog;
    const VcuOutput out = vcu_step(v.st, in, now, params);
    v.st.mode = out.mode;
    v.st.aeb_clear_ticks = out.aeb_clear_ticks;
    v.st.doors = out.doors;
    v.st.lights = out.lights;
    v.st.warnings.clear();
    if (!v.st.health.brake_primary_ok) {
      v.st.warnings.push_back("brake_primary_failed");
    }
    if (cfg.mitigations.dual_brake && !v.st.health.brake_secondary_ok) {
      v.st.warnings.push_back("brake_secondary_failed");
    }
    if (!v.st.health.aodca_ok) {
      v.st.warnings.push_back("aodca_lost");
    }
    const double accel = actuate(out.accel, v.st.health, v.st.speed, params);
    v.st = integrate(v.st, accel);
    v.st.pose.x += v.drift.x;
    v.st.pose.y += v.drift.y;
  }
}

void Simulation::Impl::report_upstream(Tick now) {
  for (auto& [id, v] : veh) {
    if (!v.present) {
      continue;
    }
    if (v.request_pending) {
      v.request_pending = false;
      send_up(id, now, OnboardRequestPayload{v.spec.capabilities});
    }
    if (v.onboarded) {
      send_up(id, now, make_report(v.st, v.scan.detected || v.scan.nearest > 0.0 ? v.scan.nearest : -1.0));
    }
  }
}

void Simulation::Impl::ix_cycle(Tick now) {
  for (const auto& m : channel.deliver_due(now, Direction::Up)) {
    const auto it = std::find_if(veh.begin(), veh.end(),
                                 [&](const auto& kv) { return to_string(kv.second.st.id) == m.sender; });
    if (it == veh.end()) {
      continue;
    }
    const std::uint32_t id = it->first;
    if (!verify(m, it->second.key)) {
      ++auth_rejects;
      sim.trace_.append(now, "auth_reject", {{"receiver", m.recipient}, {"sender", m.sender},
                                             {"kind", to_string(m.kind())}, {"count", auth_rejects}});
      continue;
    }
    if (const auto* req = std::get_if<OnboardRequestPayload>(&m.payload)) {
      try {
        const auto& rec = registry.submit(it->second.st.id, req->capabilities);
        sim.trace_.append(now, "onboard", {{"vehicle", m.sender}, {"accepted", rec.accepted}, {"reason", rec.reason}});
        send_down(id, now, OnboardAckPayload{rec.accepted, rec.reason});
        if (rec.accepted) {
          tracks[id] = Track{};
          tracks[id].accepted = true;
        }
      } catch (const OnboardingError& e) {
        sim.trace_.append(now, "onboard", {{"vehicle", m.sender}, {"accepted", false}, {"reason", e.what()}});
      }
    } else if (const auto* rep = std::get_if<StateReport>(&m.payload)) {
      if (const auto t = tracks.find(id); t != tracks.end()) {
        t->second.report = *rep;
        t->second.report_tick = now;
      }
    }
  }

  std::vector<Actor> actors;
  const double body_radius = std::hypot(cfg.vehicle_params.length / 2.0, cfg.vehicle_params.width / 2.0);
  for (const auto& [id, v] : veh) {
    if (v.present) {
      const Vec2 dir{std::cos(v.st.pose.heading), std::sin(v.st.pose.heading)};
      actors.push_back({to_string(v.st.id), ObjectClass::Vehicle, v.st.pose.position(), dir * v.st.speed, body_radius});
    }
  }
  for (const auto& p : peds.visible()) {
    actors.push_back({to_string(p.id), ObjectClass::Pedestrian, p.position, p.velocity, p.radius});
  }
  for (const auto& o : cfg.obstacles) {
    actors.push_back({o.id, ObjectClass::Unknown, o.position, {}, o.radius});
  }
  tracked = ix_sense(actors, cfg.map.sensor_coverage, !hz.ix_blind, now);

  update_missions(now);
  plan(now);
}

void Simulation::Impl::update_missions(Tick now) {
  reorder_slots(now);
  for (auto& [id, t] : tracks) {
    const auto& v = veh.at(id);
    if (!t.accepted || !v.present) {
      continue;
    }
    const auto view = ix_view(id, t, now);
    if (!t.has_route) {
      if (t.phase == Phase::Waiting && now >= t.retry_tick) {
        start_leg(id, t, now);
      }
      if (!t.has_route) {
        hold_route(id, t);
      }
    }
    if (view) {
      const Vec2 p = view->first.position();
      t.s_hint = t.fresh_route ? t.route.project(cfg.map.lanes, p)
                               : t.route.project(cfg.map.lanes, p, t.s_hint - 3.0, t.s_hint + 25.0);
      t.fresh_route = false;
    }
    const bool fresh = t.report && t.report_tick == now;
    const bool at_station = fresh && t.report->mode == DriveMode::AtStation;
    switch (t.phase) {
      case Phase::Waiting:
        if (now >= t.retry_tick && start_leg(id, t, now) && at_station) {
          send_down(id, now, StationPayload{false, t.zone});
          t.last_cmd_tick = now;
        }
        break;
      case Phase::Driving: {
        if (at_station) {
          if (now - t.last_cmd_tick >= kResendTicks) {
            send_down(id, now, StationPayload{false, t.zone});
            t.last_cmd_tick = now;
          }
          break;
        }
        const bool arrived = view && view->second <= 0.0 && t.route.goal_s &&
                             std::abs(t.s_hint - *t.route.goal_s) <= kArrivalTolerance;
        if (arrived && fresh) {
          send_down(id, now, StationPayload{true, t.zone});
          t.last_cmd_tick = now;
          t.phase = Phase::Entering;
          t.phase_tick = now;
        }
        break;
      }
      case Phase::Entering:
        if (at_station) {
          t.phase = Phase::Dwell;
          t.phase_tick = now;
          const Zone* z = cfg.map.find_zone(t.zone);
          sim.trace_.append(now, "mission", {{"vehicle", to_string(VehicleId{id})}, {"event", "arrive"},
                                             {"zone", t.zone}});
          if (z && z->kind == ZoneKind::PickUp) {
            t.loaded_ready = true;
            t.phase = Phase::Done;
            sim.trace_.append(now, "mission", {{"vehicle", to_string(VehicleId{id})}, {"event", "loaded_ready"}});
          }
        } else if (now - t.last_cmd_tick >= kResendTicks) {
          send_down(id, now, StationPayload{true, t.zone});
          t.last_cmd_tick = now;
        }
        break;
      case Phase::Dwell:
        if (now - t.phase_tick >= cfg.ix.station_dwell_ticks && start_leg(id, t, now)) {
          send_down(id, now, StationPayload{false, t.zone});
          t.last_cmd_tick = now;
        }
        break;
      case Phase::Done:
        break;
    }
    if (t.phase == Phase::Driving && t.fresh_route && view) {
      t.s_hint = t.route.project(cfg.map.lanes, view->first.position());
      t.fresh_route = false;
    }
  }
}

void Simulation::Impl::plan(Tick now) {
  table = ReservationTable{};
  if (protocol.planning_suspended(now)) {
    planning_state = "suspended";
    return;
  }
  const bool halt = cfg.mitigations.estop_monitor && hz.estop_path_down;
  planning_state = halt ? "halted" : "ok";

  const PredictionSet pred = predict(tracked, static_cast<int>(kHorizonTicks), hz.prediction_scale);
  std::vector<Keepout> keepouts;
  for (const auto& o : tracked) {
    bool keep = false;
    switch (o.cls) {
      case ObjectClass::Pedestrian:
        keep = cfg.mitigations.ix_pedestrian_avoidance;
        break;
      case ObjectClass::Unknown:
        keep = true;
        break;
      case ObjectClass::Vehicle: {
        // Vehicles outside the plan (not onboarded) are obstacles.
        const auto it = std::find_if(tracks.begin(), tracks.end(),
                                     [&](const auto& kv) { return to_string(VehicleId{kv.first}) == o.id; });
        keep = it == tracks.end() || !it->second.accepted;
        break;
      }
    }
    if (keep) {
      keepouts.push_back({pred.positions.at(o.id), o.radius});
    }
  }

  std::vector<PlanRequest> requests;
  std::vector<std::uint32_t> ids;
  for (auto& [id, t] : tracks) {
    const auto& v = veh.at(id);
    if (!t.accepted || !v.present || !t.has_route) {
      continue;
    }
    const auto view = ix_view(id, t, now);
    if (!view) {
      continue;
    }
    if (t.report && t.report_tick == now && t.report->active_issued_tick >= 0) {
      const Tick active = t.report->active_issued_tick;
      std::erase_if(t.sent, [&](const Commitment& c) { return c.issued_tick < active; });
    }
    PlanRequest q;
    q.id = v.st.id;
    q.route = &t.route;
    q.s0 = t.s_hint;
    q.v0 = view->second;
    q.cap = (t.phase == Phase::Driving && !halt) ? cfg.mode.speed_cap : 0.0;
    q.commitments = t.sent;
    requests.push_back(std::move(q));
    ids.push_back(id);
  }
  const auto results = planner.plan_all(requests, keepouts, now, &table);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    auto& t = tracks.at(ids[i]);
    if (r.skipped) {
      sim.trace_.append(now, "planner", {{"vehicle", to_string(r.id)}, {"error", "PlannerOverload"}});
      continue;
    }
    if (r.degraded) {
      sim.trace_.append(now, "planner", {{"vehicle", to_string(r.id)}, {"degraded", true}});
    }
    send_down(ids[i], now, r.traj);
    t.sent.push_back(r.plan);
    if (t.sent.size() > kMaxCommitments) {
      t.sent.erase(t.sent.begin());
    }
  }
  if (table.contested() > 0) {
    sim.trace_.append(now, "reservation_conflict", {{"cells", table.contested()}});
  }
}

void Simulation::Impl::end_of_tick(Tick now) {
  CollisionScene scene;
  scene.tick = now;
  scene.params = cfg.vehicle_params;
  scene.pedestrians = peds.visible();
  scene.obstacles = cfg.obstacles;
  for (const auto& [id, v] : veh) {
    if (v.present) {
      scene.vehicles.push_back(v.st);
    }
  }
  for (const auto& c : contacts.onsets(check_collisions(scene))) {
    ++sim.collision_count_;
    sim.trace_.append(now, "collision", to_json(c));
  }

  json vs = json::array();
  for (auto& [id, v] : veh) {
    if (!v.present) {
      continue;
    }
    const auto& s = v.st;
    if (s.active_traj) {
      const double dev = polyline_distance(*s.active_traj, s.pose.position());
      if (dev > cfg.ix.deviation_threshold && !v.deviating) {
        Alert a{now, to_string(s.id), "deviation", "off planned path by " + std::to_string(dev) + " m"};
        sim.alerts_.push_back(a);
        sim.trace_.append(now, "alert", {{"vehicle", a.vehicle}, {"kind", a.kind}, {"deviation", dev}});
      }
      v.deviating = dev > cfg.ix.deviation_threshold;
    }
    json rec = {{"id", to_string(s.id)},
                {"x", s.pose.x},
                {"y", s.pose.y},
                {"heading", s.pose.heading},
                {"speed", s.speed},
                {"accel", s.accel},
                {"mode", to_string(s.mode)},
                {"age", s.active_traj ? json(now - s.last_traj_tick) : json(nullptr)},
                {"aodca", {{"enabled", cfg.mitigations.aodca},
                           {"ok", s.health.aodca_ok},
                           {"detected", v.scan.detected},
                           {"nearest", v.scan.nearest}}},
                {"brakes", {{"primary", s.health.brake_primary_ok}, {"secondary", s.health.brake_secondary_ok}}},
                {"doors", to_string(s.doors)},
                {"lights", to_string(s.lights)}};
    if (sim.trace_.full()) {
      rec["warnings"] = s.warnings;
      rec["traj_progress"] = s.traj_progress;
    }
    vs.push_back(std::move(rec));
  }
  json hzs = json::array();
  for (auto h : hz.active) {
    hzs.push_back(to_string(h));
  }
  json payload = {{"vehicles", vs},
                  {"sensing", !hz.ix_blind},
                  {"estop_path", !hz.estop_path_down},
                  {"hazards", hzs},
                  {"planning", planning_state}};
  if (sim.trace_.full()) {
    json ps = json::array();
    for (const auto& p : peds.visible()) {
      ps.push_back({{"id", to_string(p.id)}, {"x", p.position.x}, {"y", p.position.y},
                    {"vx", p.velocity.x}, {"vy", p.velocity.y}});
    }
    payload["pedestrians"] = ps;
    payload["tracked"] = tracked.size();
    payload["reservations"] = table.size();
    payload["prediction_scale"] = hz.prediction_scale;
  }
  sim.trace_.append(now, "tick", std::move(payload));
}

namespace {

json command_json(const Command& c) {
  return {{"tick", c.tick}, {"kind", to_string(c.kind)}, {"target", c.target}, {"button", c.button},
          {"event", c.event}, {"driver", c.driver}, {"token", c.token}};
}

Command command_from(const json& j) {
  Command c;
  c.tick = j.at("tick").get<Tick>();
  const auto kind = j.at("kind").get<std::string>();
  for (auto k : {EventKind::EstopPress, EventKind::Estop, EventKind::Release, EventKind::Hazard,
                 EventKind::HazardClear, EventKind::Checkin, EventKind::Checkout}) {
    if (kind == to_string(k)) {
      c.kind = k;
    }
  }
  c.target = j.at("target").get<std::string>();
  c.button = j.at("button").get<std::string>();
  c.event = j.at("event").get<std::string>();
  c.driver = j.at("driver").get<std::string>();
  c.token = j.at("token").get<std::string>();
  return c;
}

}  // namespace

json Simulation::Impl::save() const {
  json vs = json::object();
  for (const auto& [id, v] : veh) {
    vs[std::to_string(id)] = {{"state", vehicle_json(v.st)},
                              {"present", v.present},
                              {"onboarded", v.onboarded},
                              {"request_pending", v.request_pending},
                              {"deviating", v.deviating},
                              {"drift", {v.drift.x, v.drift.y}},
                              {"scan", {v.scan.detected, v.scan.nearest}}};
  }
  json ts = json::object();
  for (const auto& [id, t] : tracks) {
    json sent = json::array();
    for (const auto& c : t.sent) {
      sent.push_back(commitment_json(c));
    }
    ts[std::to_string(id)] = {{"accepted", t.accepted},
                              {"report", t.report ? report_json(*t.report) : json(nullptr)},
                              {"report_tick", t.report_tick},
                              {"route", t.has_route ? json::array({t.rspec.kind, t.rspec.a, t.rspec.b, t.rspec.version})
                                                    : json(nullptr)},
                              {"fresh_route", t.fresh_route},
                              {"leg", t.leg},
                              {"phase", static_cast<int>(t.phase)},
                              {"phase_tick", t.phase_tick},
                              {"retry_tick", t.retry_tick},
                              {"last_cmd_tick", t.last_cmd_tick},
                              {"zone", t.zone},
                              {"loaded_ready", t.loaded_ready},
                              {"sent", sent},
                              {"s_hint", t.s_hint}};
  }
  json reg = json::array();
  for (const auto& [id, r] : registry.records()) {
    reg.push_back({{"vehicle", id}, {"capabilities", r.capabilities}, {"accepted", r.accepted}, {"reason", r.reason}});
  }
  json sl = json::object();
  for (const auto& [z, s] : slots) {
    json a = json::array();
    for (const auto& o : s) {
      a.push_back(o ? json(*o) : json(nullptr));
    }
    sl[z] = a;
  }
  json hold = json::array();
  for (const auto& [id, h] : holding) {
    hold.push_back({id, h.first, h.second});
  }
  json eq = json::array();
  for (const auto& e : estop_q) {
    eq.push_back({e.deliver, message_to_json_hex(e.msg)});
  }
  json in = json::array();
  for (const auto& c : inbound) {
    in.push_back(command_json(c));
  }
  json ct = json::array();
  for (const auto& [a, b] : contacts.active()) {
    ct.push_back({a, b});
  }
  return {{"vehicles", vs},
          {"tracks", ts},
          {"registry", reg},
          {"protocol", {protocol.active() ? json(to_string(*protocol.active())) : json(nullptr),
                        protocol.raised_tick(), protocol.cleared_tick()}},
          {"slots", sl},
          {"holding", hold},
          {"estop_queue", eq},
          {"estopped", estopped},
          {"inbound", in},
          {"contacts", ct},
          {"route_counter", route_counter},
          {"auth_rejects", auth_rejects},
          {"pedestrians", peds.save()},
          {"channel", channel.save()}};
}

void Simulation::Impl::load(const json& j) {
  for (const auto& [key, v] : j.at("vehicles").items()) {
    auto& rt = veh.at(static_cast<std::uint32_t>(std::stoul(key)));
    rt.st = vehicle_from(v.at("state"));
    rt.present = v.at("present").get<bool>();
    rt.onboarded = v.at("onboarded").get<bool>();
    rt.request_pending = v.at("request_pending").get<bool>();
    rt.deviating = v.at("deviating").get<bool>();
    rt.drift = {v.at("drift").at(0).get<double>(), v.at("drift").at(1).get<double>()};
    rt.scan = {v.at("scan").at(0).get<bool>(), v.at("scan").at(1).get<double>()};
  }
  tracks.clear();
  for (const auto& [key, v] : j.at("tracks").items()) {
    Track t;
    t.accepted = v.at("accepted").get<bool>();
    if (!v.at("report").is_null()) {
      t.report = report_from(v.at("report"));
    }
    t.report_tick = v.at("report_tick").get<Tick>();
    if (!v.at("route").is_null()) {
      const auto& r = v.at("route");
      t.rspec = {r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>(), r.at(3).get<int>()};
      t.route = build_route(t.rspec);
      t.has_route = true;
    }
    t.fresh_route = v.at("fresh_route").get<bool>();
    t.leg = v.at("leg").get<int>();
    t.phase = static_cast<Phase>(v.at("phase").get<int>());
    t.phase_tick = v.at("phase_tick").get<Tick>();
    t.retry_tick = v.at("retry_tick").get<Tick>();
    t.last_cmd_tick = v.at("last_cmd_tick").get<Tick>();
    t.zone = v.at("zone").get<std::string>();
    t.loaded_ready = v.at("loaded_ready").get<bool>();
    for (const auto& c : v.at("sent")) {
      t.sent.push_back(commitment_from(c));
    }
    t.s_hint = v.at("s_hint").get<double>();
    tracks[static_cast<std::uint32_t>(std::stoul(key))] = std::move(t);
  }
  registry = OnboardingRegistry{};
  for (const auto& r : j.at("registry")) {
    registry.restore({VehicleId{r.at("vehicle").get<std::uint32_t>()},
                      r.at("capabilities").get<std::set<std::string>>(), r.at("accepted").get<bool>(),
                      r.at("reason").get<std::string>()});
  }
  const auto& p = j.at("protocol");
  protocol.restore(p.at(0).is_null() ? std::nullopt
                                     : operational_hazard_from_string(p.at(0).get<std::string>()),
                   p.at(1).get<Tick>(), p.at(2).get<Tick>());
  for (const auto& [z, a] : j.at("slots").items()) {
    auto& s = slots.at(z);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = a.at(i).is_null() ? std::nullopt : std::optional<std::uint32_t>(a.at(i).get<std::uint32_t>());
    }
  }
  holding.clear();
  for (const auto& h : j.at("holding")) {
    holding[h.at(0).get<std::uint32_t>()] = {h.at(1).get<std::string>(), h.at(2).get<int>()};
  }
  estop_q.clear();
  for (const auto& e : j.at("estop_queue")) {
    estop_q.push_back({e.at(0).get<Tick>(), message_from_json_hex(e.at(1))});
  }
  estopped = j.at("estopped").get<std::set<std::uint32_t>>();
  inbound.clear();
  for (const auto& c : j.at("inbound")) {
    inbound.push_back(command_from(c));
  }
  std::set<std::pair<std::uint32_t, std::string>> ct;
  for (const auto& c : j.at("contacts")) {
    ct.insert({c.at(0).get<std::uint32_t>(), c.at(1).get<std::string>()});
  }
  contacts.restore(std::move(ct));
  route_counter = j.at("route_counter").get<int>();
  auth_rejects = j.at("auth_rejects").get<int>();
  peds.restore(j.at("pedestrians"));
  channel = ChannelModel::restore(j.at("channel"));
}

Simulation::Simulation(ScenarioConfig cfg, SimOptions opts)
    : cfg_(std::move(cfg)), opts_(opts), trace_(opts.verbosity, opts.trace_sink), buffer_(100) {
  impl_ = std::make_unique<Impl>(*this, cfg_);
  json mit = json::object();
  mit["aodca"] = cfg_.mitigations.aodca;
  mit["dual_brake"] = cfg_.mitigations.dual_brake;
  mit["speed_limiter"] = cfg_.mitigations.speed_limiter;
  mit["watchdog"] = cfg_.mitigations.watchdog;
  mit["ix_pedestrian_avoidance"] = cfg_.mitigations.ix_pedestrian_avoidance;
  mit["estop_monitor"] = cfg_.mitigations.estop_monitor;
  json inj = json::array();
  for (const auto& i : cfg_.injections) {
    inj.push_back({{"hazard", to_string(i.hazard)}, {"target", i.target}, {"from", i.from_tick},
                   {"to", i.to_tick}, {"params", i.params}});
  }
  trace_.append(0, "header", {{"name", cfg_.name},
                              {"seed", cfg_.seed},
                              {"mode", to_string(cfg_.mode.tag)},
                              {"speed_cap", cfg_.mode.speed_cap},
                              {"traffic", to_string(cfg_.traffic)},
                              {"tick_s", cfg_.tick_s},
                              {"duration_ticks", cfg_.duration_ticks()},
                              {"aeb_decel", cfg_.vehicle_params.aeb_decel},
                              {"service_decel", cfg_.vehicle_params.service_decel},
                              {"watchdog_ticks", kWatchdogTicks},
                              {"estop_latency_ticks", kEstopLatencyTicks},
                              {"estop_radius", cfg_.ix.estop_radius},
                              {"mitigations", mit},
                              {"injections", inj}});
}

Simulation::~Simulation() = default;

void Simulation::step() {
  if (ended_) {
    return;
  }
  impl_->step(next_tick_);
  ++next_tick_;
  if (opts_.rolling_buffer) {
    buffer_.push(snapshot());
  }
}

bool Simulation::finished() const { return next_tick_ >= cfg_.duration_ticks(); }

void Simulation::run_to_end() {
  while (!finished()) {
    step();
  }
  finish();
}

void Simulation::finish() {
  if (ended_) {
    return;
  }
  ended_ = true;
  trace_.append(next_tick_, "end", {{"ticks", next_tick_}, {"collisions", collision_count_},
                                    {"hash_before", trace_.hash_hex()}});
}

std::optional<std::string> Simulation::submit(const Command& cmd) {
  const auto vehicle_known = [&](const std::string& t) {
    return std::any_of(cfg_.vehicles.begin(), cfg_.vehicles.end(), [&](const auto& v) { return to_string(v.id) == t; });
  };
  switch (cmd.kind) {
    case EventKind::EstopPress: {
      const auto& b = cfg_.map.estop_buttons;
      if (std::none_of(b.begin(), b.end(), [&](const auto& x) { return x.id == cmd.button; })) {
        return "unknown button '" + cmd.button + "'";
      }
      break;
    }
    case EventKind::Estop:
    case EventKind::Release:
      if (cmd.target != "*" && !vehicle_known(cmd.target)) {
        return "unknown vehicle '" + cmd.target + "'";
      }
      break;
    case EventKind::Hazard:
      if (!operational_hazard_from_string(cmd.event)) {
        return "unknown hazard event '" + cmd.event + "'";
      }
      break;
    case EventKind::HazardClear:
      break;
    case EventKind::Checkin:
    case EventKind::Checkout:
      if (!vehicle_known(cmd.target)) {
        return "unknown vehicle '" + cmd.target + "'";
      }
      break;
  }
  if (ended_) {
    return "simulation has ended";
  }
  Command c = cmd;
  c.tick = next_tick_;
  impl_->inbound.push_back(std::move(c));
  return std::nullopt;
}

namespace {

bool credentials_ok(const ScenarioConfig& cfg, const std::string& driver, const std::string& token) {
  return std::any_of(cfg.drivers.begin(), cfg.drivers.end(),
                     [&](const Driver& d) { return d.id == driver && d.token == token; });
}

}  // namespace

CheckResult Simulation::checkin(const std::string& driver, const std::string& token, const std::string& vehicle) {
  CheckResult r;
  auto& im = *impl_;
  const auto it = std::find_if(im.veh.begin(), im.veh.end(),
                               [&](const auto& kv) { return to_string(kv.second.st.id) == vehicle; });
  if (!credentials_ok(cfg_, driver, token)) {
    r.reason = "invalid driver credentials";
  } else if (it == im.veh.end() || !it->second.present) {
    r.reason = "vehicle '" + vehicle + "' is not in the depot";
  } else if (it->second.onboarded || it->second.request_pending ||
             im.registry.records().contains(it->first)) {
    r.reason = "vehicle '" + vehicle + "' is already checked in";
  } else {
    it->second.request_pending = true;
    r.accepted = true;
  }
  trace_.append(next_tick_, "checkin", {{"driver", driver}, {"vehicle", vehicle}, {"direction", "DropOff"},
                                        {"accepted", r.accepted}, {"reason", r.reason}});
  return r;
}

CheckResult Simulation::checkout(const std::string& driver, const std::string& token, const std::string& vehicle) {
  CheckResult r;
  auto& im = *impl_;
  const auto it = std::find_if(im.veh.begin(), im.veh.end(),
                               [&](const auto& kv) { return to_string(kv.second.st.id) == vehicle; });
  const auto track = it == im.veh.end() ? im.tracks.end() : im.tracks.find(it->first);
  if (!credentials_ok(cfg_, driver, token)) {
    r.reason = "invalid driver credentials";
  } else if (it == im.veh.end() || !it->second.present) {
    r.reason = "vehicle '" + vehicle + "' is not in the depot";
  } else if (track == im.tracks.end() || !track->second.loaded_ready) {
    r.reason = "vehicle '" + vehicle + "' is not ready for pick-up";
  } else {
    it->second.present = false;
    it->second.onboarded = false;
    im.release_slot(it->first);
    im.estopped.erase(it->first);
    im.tracks.erase(track);
    r.accepted = true;
  }
  trace_.append(next_tick_, "checkout", {{"driver", driver}, {"vehicle", vehicle}, {"direction", "PickUp"},
                                         {"accepted", r.accepted}, {"reason", r.reason}});
  return r;
}

DepotSnapshot Simulation::snapshot() const {
  json s = impl_->save();
  s["next_tick"] = next_tick_;
  s["collision_count"] = collision_count_;
  s["trace"] = {{"hash", trace_.hash()}, {"records", trace_.records().size()}};
  json al = json::array();
  for (const auto& a : alerts_) {
    al.push_back({a.tick, a.vehicle, a.kind, a.text});
  }
  s["alerts"] = al;
  return {next_tick_ - 1, std::move(s)};
}

void Simulation::restore(const DepotSnapshot& snap, std::vector<json> prefix) {
  const auto& s = snap.state;
  impl_ = std::make_unique<Impl>(*this, cfg_);
  impl_->load(s);
  next_tick_ = s.at("next_tick").get<Tick>();
  ended_ = false;
  collision_count_ = s.at("collision_count").get<int>();
  alerts_.clear();
  for (const auto& a : s.at("alerts")) {
    alerts_.push_back({a.at(0).get<Tick>(), a.at(1).get<std::string>(), a.at(2).get<std::string>(),
                       a.at(3).get<std::string>()});
  }
  const auto count = s.at("trace").at("records").get<std::size_t>();
  if (!prefix.empty() && prefix.size() != count) {
    throw std::invalid_argument("trace prefix has " + std::to_string(prefix.size()) + " records, snapshot expects " +
                                std::to_string(count));
  }
  trace_.restore(s.at("trace").at("hash").get<std::uint64_t>(), std::move(prefix));
}

json Simulation::feed() const {
  json vs = json::array();
  for (const auto& [id, v] : impl_->veh) {
    if (!v.present) {
      continue;
    }
    const auto& st = v.st;
    vs.push_back({{"id", to_string(st.id)}, {"x", st.pose.x}, {"y", st.pose.y}, {"heading", st.pose.heading},
                  {"speed", st.speed}, {"mode", to_string(st.mode)}, {"doors", to_string(st.doors)},
                  {"lights", to_string(st.lights)}, {"warnings", st.warnings}});
  }
  json ps = json::array();
  for (const auto& p : impl_->peds.visible()) {
    ps.push_back({{"id", to_string(p.id)}, {"x", p.position.x}, {"y", p.position.y}});
  }
  json al = json::array();
  const std::size_t from = alerts_.size() > kFeedAlerts ? alerts_.size() - kFeedAlerts : 0;
  for (std::size_t i = from; i < alerts_.size(); ++i) {
    al.push_back({{"tick", alerts_[i].tick}, {"vehicle", alerts_[i].vehicle}, {"kind", alerts_[i].kind},
                  {"text", alerts_[i].text}});
  }
  return {{"tick", next_tick_ - 1},
          {"vehicles", vs},
          {"pedestrians", ps},
          {"alerts", al},
          {"sensor_health", !impl_->hz.ix_blind},
          {"estop_path", !impl_->hz.estop_path_down},
          {"planning", impl_->planning_state}};
}

const std::vector<VehicleState> Simulation::vehicles() const {
  std::vector<VehicleState> out;
  for (const auto& [id, v] : impl_->veh) {
    if (v.present) {
      out.push_back(v.st);
    }
  }
  return out;
}

void Simulation::displace_vehicle(VehicleId id, Vec2 offset) {
  auto& v = impl_->veh.at(raw(id));
  v.st.pose.x += offset.x;
  v.st.pose.y += offset.y;
  v.drift.x += offset.x;
  v.drift.y += offset.y;
}

}  // namespace ixda
