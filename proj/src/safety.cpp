#include "ixda/safety.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <sstream>

namespace ixda {

namespace {

bool targets(const std::string& target, VehicleId v) {
  return target == "*" || target == to_string(v);
}

template <class Map>
auto lookup(const Map& m, VehicleId v) -> std::optional<typename Map::mapped_type> {
  // A specific target wins over the wildcard.
  if (const auto it = m.find(to_string(v)); it != m.end()) {
    return it->second;
  }
  if (const auto it = m.find("*"); it != m.end()) {
    return it->second;
  }
  return std::nullopt;
}

}  // namespace

bool HazardState::is_active(HazardId h) const {
  return std::find(active.begin(), active.end(), h) != active.end();
}

bool HazardState::aodca_lost_for(VehicleId v) const {
  return std::any_of(aodca_lost.begin(), aodca_lost.end(), [&](const std::string& t) { return targets(t, v); });
}

std::optional<std::string> HazardState::brake_failed_for(VehicleId v) const {
  return lookup(brake_failed, v);
}

double HazardState::speed_factor_for(VehicleId v) const {
  return lookup(speed_factor, v).value_or(1.0);
}

HazardState apply_injections(const std::vector<Injection>& schedule, Tick now) {
  HazardState hz;
  for (const auto& inj : schedule) {
    if (now < inj.from_tick || now > inj.to_tick) {
      continue;
    }
    if (!hz.is_active(inj.hazard)) {
      hz.active.push_back(inj.hazard);
    }
    const auto& p = inj.params;
    switch (inj.hazard) {
      case HazardId::H1:
        hz.aodca_lost.insert(inj.target);
        break;
      case HazardId::H2:
        hz.brake_failed[inj.target] = p.value("channels", std::string("both"));
        break;
      case HazardId::H3:
        hz.speed_factor[inj.target] = p.value("factor", 2.0);
        break;
      case HazardId::H4:
        hz.impairments.push_back({inj.target, true, 0.0, 0});
        break;
      case HazardId::H5:
        hz.impairments.push_back({inj.target, false, p.value("drop_probability", 0.5), p.value("jitter_ticks", 25)});
        break;
      case HazardId::H6:
        hz.ix_blind = true;
        break;
      case HazardId::H7:
        hz.prediction_scale = p.value("velocity_scale", -1.0);
        break;
      case HazardId::H8:
        hz.estop_path_down = true;
        break;
    }
  }
  std::sort(hz.active.begin(), hz.active.end());
  return hz;
}

HealthStatus injected_health(const HazardState& hz, VehicleId id, bool dual_brake) {
  HealthStatus h;
  h.aodca_ok = !hz.aodca_lost_for(id);
  h.brake_secondary_ok = dual_brake;
  if (const auto failed = hz.brake_failed_for(id)) {
    if (*failed == "primary" || *failed == "both") {
      h.brake_primary_ok = false;
    }
    if (*failed == "secondary" || *failed == "both") {
      h.brake_secondary_ok = false;
    }
  }
  return h;
}

std::vector<CollisionEvent> check_collisions(const CollisionScene& scene) {
  std::vector<CollisionEvent> out;
  auto velocity = [](const VehicleState& v) {
    return Vec2{std::cos(v.pose.heading), std::sin(v.pose.heading)} * v.speed;
  };
  for (std::size_t i = 0; i < scene.vehicles.size(); ++i) {
    const auto& v = scene.vehicles[i];
    const OrientedBox box = footprint(v, scene.params);
    const Vec2 vel = velocity(v);
    for (const auto& p : scene.pedestrians) {
      if (box_circle_intersect(box, p.position, p.radius)) {
        out.push_back({scene.tick, v.id, to_string(p.id), "pedestrian", norm(vel - p.velocity)});
      }
    }
    for (std::size_t j = i + 1; j < scene.vehicles.size(); ++j) {
      const auto& w = scene.vehicles[j];
      if (boxes_intersect(box, footprint(w, scene.params))) {
        out.push_back({scene.tick, v.id, to_string(w.id), "vehicle", norm(vel - velocity(w))});
      }
    }
    for (const auto& o : scene.obstacles) {
      if (box_circle_intersect(box, o.position, o.radius)) {
        out.push_back({scene.tick, v.id, o.id, "obstacle", norm(vel)});
      }
    }
  }
  return out;
}

std::vector<CollisionEvent> CollisionTracker::onsets(const std::vector<CollisionEvent>& contacts) {
  std::set<std::pair<std::uint32_t, std::string>> now;
  std::vector<CollisionEvent> fresh;
  for (const auto& c : contacts) {
    const auto key = std::make_pair(raw(c.vehicle), c.other);
    now.insert(key);
    if (!active_.contains(key)) {
      fresh.push_back(c);
    }
  }
  active_ = std::move(now);
  return fresh;
}

nlohmann::json to_json(const CollisionEvent& e) {
  return {{"vehicle", to_string(e.vehicle)},
          {"other", e.other},
          {"other_kind", e.other_kind},
          {"relative_speed", e.relative_speed}};
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void TraceLog::append(Tick tick, const std::string& kind, nlohmann::json payload) {
  nlohmann::json rec = {{"tick", tick}, {"kind", kind}, {"payload", std::move(payload)}};
  std::string line = rec.dump();
  line.push_back('\n');
  hash_ = fnv1a64(line, hash_);
  if (sink_) {
    *sink_ << line;
  }
  records_.push_back(std::move(rec));
}

std::string TraceLog::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
  return buf;
}

void TraceLog::restore(std::uint64_t hash, std::vector<nlohmann::json> records) {
  hash_ = hash;
  records_ = std::move(records);
}

TraceLog TraceLog::read(std::istream& in) {
  TraceLog log;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) {
      continue;
    }
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("trace line " + std::to_string(n) + ": " + e.what());
    }
    if (!rec.is_object() || !rec.contains("tick") || !rec.contains("kind") || !rec.contains("payload")) {
      throw std::runtime_error("trace line " + std::to_string(n) + ": not a trace record");
    }
    log.append(rec.at("tick").get<Tick>(), rec.at("kind").get<std::string>(), rec.at("payload"));
  }
  return log;
}

bool MonitorReport::all_pass() const {
  return std::all_of(goals.begin(), goals.end(), [](const auto& g) { return g.second.pass; });
}

namespace {

struct Sample {
  double speed = 0.0;
  std::string mode;
  std::optional<Tick> age;
  bool aodca_enabled = true;
  bool aodca_ok = true;
  bool aodca_detected = false;
};

bool stop_mode(const std::string& m) {
  return m == "AebStop" || m == "CommLossStop" || m == "FaultStop" || m == "EstopStop";
}

bool hard_stop(const std::string& m) {
  return m == "AebStop" || m == "EstopStop" || m == "FaultStop";
}

void fail(GoalVerdict& g, nlohmann::json why) {
  g.pass = false;
  // Keep evidence bounded; the first few violations tell the story.
  if (g.evidence.size() < 20) {
    g.evidence.push_back(std::move(why));
  }
}

}  // namespace

MonitorReport evaluate_goals(const std::vector<nlohmann::json>& records) {
  if (records.empty() || records.front().at("kind") != "header") {
    throw IncompleteTrace("trace has no header record");
  }
  if (records.back().at("kind") != "end") {
    throw IncompleteTrace("trace has no end record");
  }
  const auto& hdr = records.front().at("payload");
  const double cap = hdr.at("speed_cap").get<double>();
  const double dt = hdr.at("tick_s").get<double>();
  const double aeb = hdr.at("aeb_decel").get<double>();
  const double service = hdr.at("service_decel").get<double>();
  const Tick watchdog = hdr.at("watchdog_ticks").get<Tick>();
  const Tick estop_latency = hdr.at("estop_latency_ticks").get<Tick>();

  MonitorReport rep;
  for (const char* id : {"SG1", "SG2", "SG3", "SG4", "SG5", "SG6"}) {
    rep.goals[id] = GoalVerdict{};
  }

  // Per vehicle: tick -> sample. Also per tick: sensing health.
  std::map<std::string, std::map<Tick, Sample>> series;
  std::map<Tick, bool> sensing;
  std::vector<const nlohmann::json*> collisions, presses;
  for (const auto& rec : records) {
    const std::string kind = rec.at("kind").get<std::string>();
    const Tick t = rec.at("tick").get<Tick>();
    const auto& p = rec.at("payload");
    if (kind == "tick") {
      sensing[t] = p.at("sensing").get<bool>();
      const bool path_up = p.at("estop_path").get<bool>();
      const auto& hz = p.at("hazards");
      const bool h8 = std::find(hz.begin(), hz.end(), "H8") != hz.end();
      if (!path_up && !h8) {
        fail(rep.goals["SG6"], {{"tick", t}, {"reason", "e-stop path unavailable outside an H8 window"}});
      }
      for (const auto& v : p.at("vehicles")) {
        Sample s;
        s.speed = v.at("speed").get<double>();
        s.mode = v.at("mode").get<std::string>();
        if (!v.at("age").is_null()) {
          s.age = v.at("age").get<Tick>();
        }
        const auto& a = v.at("aodca");
        s.aodca_enabled = a.at("enabled").get<bool>();
        s.aodca_ok = a.at("ok").get<bool>();
        s.aodca_detected = a.at("detected").get<bool>();
        const std::string id = v.at("id").get<std::string>();
        series[id][t] = s;
        if (s.speed > rep.max_speed) {
          rep.max_speed = s.speed;
        }
        if (s.speed > cap + 1e-9) {
          fail(rep.goals["SG3"], {{"tick", t}, {"vehicle", id}, {"speed", s.speed}, {"cap", cap}});
        }
        // Detection inside the envelope must already have triggered AEB (or a stronger stop).
        if (s.aodca_enabled && s.aodca_ok && s.aodca_detected && !hard_stop(s.mode)) {
          fail(rep.goals["SG1"], {{"tick", t}, {"vehicle", id}, {"mode", s.mode}});
        }
      }
    } else if (kind == "collision") {
      collisions.push_back(&rec);
    } else if (kind == "estop_press" || kind == "estop_cmd") {
      presses.push_back(&rec);
    }
  }

  auto sample = [&](const std::string& id, Tick t) -> const Sample* {
    const auto it = series.find(id);
    if (it == series.end()) {
      return nullptr;
    }
    const auto jt = it->second.find(t);
    return jt == it->second.end() ? nullptr : &jt->second;
  };
  // First tick in [from, to] at which the vehicle is at rest.
  auto rest_tick = [&](const std::string& id, Tick from, Tick to) -> std::optional<Tick> {
    const auto it = series.find(id);
    if (it == series.end()) {
      return std::nullopt;
    }
    for (auto jt = it->second.lower_bound(from); jt != it->second.end() && jt->first <= to; ++jt) {
      if (jt->second.speed <= 0.0) {
        return jt->first;
      }
    }
    return std::nullopt;
  };
  const Tick last_tick = records.back().at("tick").get<Tick>();

  for (const auto* rec : collisions) {
    const Tick t = rec->at("tick").get<Tick>();
    const auto& p = rec->at("payload");
    ++rep.collisions;
    if (p.at("other_kind") == "pedestrian") {
      ++rep.pedestrian_collisions;
    }
    std::vector<std::string> involved{p.at("vehicle").get<std::string>()};
    if (p.at("other_kind") == "vehicle") {
      involved.push_back(p.at("other").get<std::string>());
    }
    for (const auto& id : involved) {
      const Sample* s = sample(id, t);
      if (!s) {
        continue;
      }
      if (s->aodca_enabled && s->aodca_ok) {
        fail(rep.goals["SG1"], {{"tick", t}, {"vehicle", id}, {"reason", "collision with healthy AODCA"}});
      }
      const auto sit = sensing.find(t);
      if (s->mode == "Following" && sit != sensing.end() && sit->second) {
        fail(rep.goals["SG5"], {{"tick", t}, {"vehicle", id}, {"other", p.at("other")}});
      }
    }
  }

  for (const auto& [id, ticks] : series) {
    std::string prev_mode;
    double prev_speed = 0.0;
    for (const auto& [t, s] : ticks) {
      // SG2: every stop-mode entry ends at rest within the braking bound.
      if (stop_mode(s.mode) && !stop_mode(prev_mode)) {
        const double decel = s.mode == "AebStop" || s.mode == "EstopStop" ? aeb : service;
        const Tick bound = static_cast<Tick>(std::ceil(prev_speed / (decel * dt) - 1e-9)) + 1;
        const Tick deadline = t - 1 + bound;
        if (deadline <= last_tick) {
          const auto rest = rest_tick(id, t, deadline);
          if (!rest) {
            fail(rep.goals["SG2"], {{"tick", t}, {"vehicle", id}, {"mode", s.mode}, {"speed", prev_speed},
                                   {"deadline", deadline}});
          }
        }
      }
      // SG4: once the trajectory age exceeds the threshold a stop mode follows within one tick.
      if (s.age && *s.age == watchdog + 1) {
        const Sample* next = sample(id, t + 1);
        const bool stopped = stop_mode(s.mode) || (next && stop_mode(next->mode));
        if (!stopped && t + 1 <= last_tick) {
          fail(rep.goals["SG4"], {{"tick", t}, {"vehicle", id}, {"mode", s.mode}});
        } else if (stopped) {
          const Tick stop_at = stop_mode(s.mode) ? t : t + 1;
          const auto rest = rest_tick(id, stop_at, last_tick);
          nlohmann::json ev = {{"vehicle", id}, {"last_trajectory_tick", t - *s.age}, {"stop_tick", stop_at},
                               {"latency_ticks", stop_at - (t - *s.age)}};
          ev["rest_tick"] = rest ? nlohmann::json(*rest) : nlohmann::json(nullptr);
          rep.comm_loss_stops.push_back(ev);
        }
      }
      prev_mode = s.mode;
      prev_speed = s.speed;
    }
  }

  for (const auto* rec : presses) {
    const Tick t = rec->at("tick").get<Tick>();
    const auto& p = rec->at("payload");
    for (const auto& v : p.at("vehicles")) {
      const std::string id = v.at("id").get<std::string>();
      const double speed = v.at("speed").get<double>();
      const Tick deadline =
          t + estop_latency + static_cast<Tick>(std::ceil(speed / (aeb * dt) - 1e-9)) + 1;
      const auto rest = rest_tick(id, t, std::min(deadline, last_tick));
      nlohmann::json ev = {{"tick", t}, {"vehicle", id}, {"speed", speed}, {"deadline", deadline},
                           {"delivered", p.at("delivered")}};
      ev["rest_tick"] = rest ? nlohmann::json(*rest) : nlohmann::json(nullptr);
      if (v.contains("distance")) {
        ev["distance"] = v.at("distance");
      }
      rep.estop_stops.push_back(ev);
      if (!rest && deadline <= last_tick) {
        fail(rep.goals["SG6"], ev);
      }
    }
  }
  return rep;
}

nlohmann::json to_json(const MonitorReport& r) {
  nlohmann::json goals = nlohmann::json::object();
  for (const auto& [id, g] : r.goals) {
    goals[id] = {{"pass", g.pass}, {"evidence", g.evidence}};
  }
  return {{"goals", goals},
          {"collisions", r.collisions},
          {"pedestrian_collisions", r.pedestrian_collisions},
          {"max_speed", r.max_speed},
          {"comm_loss_stops", r.comm_loss_stops},
          {"estop_stops", r.estop_stops},
          {"pass", r.all_pass()}};
}

std::string to_text(const MonitorReport& r) {
  std::ostringstream out;
  for (const auto& [id, g] : r.goals) {
    out << id << ' ' << (g.pass ? "PASS" : "FAIL");
    if (!g.pass && !g.evidence.empty()) {
      out << "  first: " << g.evidence.front().dump();
    }
    out << '\n';
  }
  out << "collisions " << r.collisions << " (pedestrian " << r.pedestrian_collisions << ")\n";
  out << "max speed " << r.max_speed << " m/s\n";
  for (const auto& e : r.comm_loss_stops) {
    out << "comm-loss stop " << e.dump() << '\n';
  }
  for (const auto& e : r.estop_stops) {
    out << "e-stop " << e.dump() << '\n';
  }
  return out.str();
}

}  // namespace ixda
