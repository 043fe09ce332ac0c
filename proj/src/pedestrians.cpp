#include "ixda/pedestrians.hpp"

#include <algorithm>
#include <sstream>

namespace ixda {

namespace {

// Yielding agents keep out of this much of a moving vehicle's path.
constexpr double kYieldSeconds = 3.0;
constexpr double kYieldMargin = 1.0;
constexpr double kContactMargin = 0.2;

OrientedBox forward_corridor(const VehicleBody& v, const VehicleParams& p) {
  const double ahead = v.speed * kYieldSeconds + kYieldMargin;
  const Vec2 dir{std::cos(v.pose.heading), std::sin(v.pose.heading)};
  const Vec2 c = v.pose.position() + dir * (ahead / 2.0);
  return {c, v.pose.heading, p.length / 2.0 + ahead / 2.0, p.width / 2.0 + kYieldMargin};
}

nlohmann::json vec(Vec2 v) { return nlohmann::json::array({v.x, v.y}); }
Vec2 vec(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

PedestrianModel::PedestrianModel(const ScenarioConfig& cfg, std::uint64_t seed)
    : cfg_(cfg.pedestrians), vehicle_(cfg.vehicle_params), areas_(cfg.pedestrians.areas) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5045u};
  rng_.seed(seq);
  if (areas_.empty()) {
    areas_ = cfg.map.sensor_coverage;
  }
  std::uniform_real_distribution<double> speed(cfg_.speed_min, cfg_.speed_max);
  for (int i = 0; i < cfg_.count && !areas_.empty(); ++i) {
    PedestrianAgent a;
    a.body.id = PedestrianId{static_cast<std::uint32_t>(i + 1)};
    a.body.radius = cfg_.radius;
    a.home = i % static_cast<int>(areas_.size());
    a.body.position = sample_point(a.home);
    a.target = sample_point(a.home);
    a.speed = speed(rng_);
    agents_.push_back(a);
  }
  for (std::size_t k = 0; k < cfg_.scripted.size(); ++k) {
    const auto& s = cfg_.scripted[k];
    PedestrianAgent a;
    a.body.id = PedestrianId{static_cast<std::uint32_t>(cfg_.count + static_cast<int>(k) + 1)};
    a.body.radius = cfg_.radius;
    a.body.position = s.start;
    a.scripted = true;
    a.home = static_cast<int>(k);
    a.speed = s.speed;
    a.active = s.start_tick <= 0;
    a.target = s.waypoints.empty() ? s.start : s.waypoints.front().position;
    agents_.push_back(a);
  }
}

Vec2 PedestrianModel::sample_point(int area) {
  const auto& poly = areas_.at(static_cast<std::size_t>(area));
  double x0 = poly.front().x, x1 = x0, y0 = poly.front().y, y1 = y0;
  for (const auto& p : poly) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1);
  for (int tries = 0; tries < 1000; ++tries) {
    const Vec2 p{ux(rng_), uy(rng_)};
    if (contains(poly, p)) {
      return p;
    }
  }
  return centroid(poly);
}

bool PedestrianModel::blocked(const PedestrianAgent& a, Vec2 from, Vec2 to,
                              const std::vector<VehicleBody>& vehicles) const {
  for (const auto& v : vehicles) {
    const OrientedBox body = footprint(v.pose, vehicle_);
    if (box_point_distance(body, to) <= a.body.radius + kContactMargin) {
      return true;
    }
    if (cfg_.yield_to_vehicles && !a.scripted && v.speed > 0.0) {
      const OrientedBox lane = forward_corridor(v, vehicle_);
      const double before = box_point_distance(lane, from);
      const double after = box_point_distance(lane, to);
      // Entering the corridor, or going deeper once inside, is refused.
      if (after <= a.body.radius && after < before + 1e-12) {
        return true;
      }
    }
  }
  return false;
}

void PedestrianModel::step(Tick now, const std::vector<VehicleBody>& vehicles) {
  std::uniform_real_distribution<double> speed(cfg_.speed_min, cfg_.speed_max);
  std::uniform_int_distribution<int> pause(cfg_.pause_min_ticks, cfg_.pause_max_ticks);
  for (auto& a : agents_) {
    a.body.velocity = {};
    if (a.scripted) {
      const auto& s = cfg_.scripted[static_cast<std::size_t>(a.home)];
      if (!a.active) {
        if (now < s.start_tick) {
          continue;
        }
        a.active = true;
      }
      if (a.waypoint >= s.waypoints.size()) {
        continue;
      }
    }
    if (a.pause_left > 0) {
      --a.pause_left;
      continue;
    }
    const Vec2 from = a.body.position;
    const Vec2 d = a.target - from;
    const double dist = norm(d);
    const double reach = a.speed * kTickSeconds;
    const bool arrives = dist <= reach;
    const Vec2 to = arrives ? a.target : from + d * (reach / dist);
    if (blocked(a, from, to, vehicles)) {
      continue;
    }
    a.body.position = to;
    a.body.velocity = (to - from) * (1.0 / kTickSeconds);
    if (!arrives) {
      continue;
    }
    if (a.scripted) {
      const auto& s = cfg_.scripted[static_cast<std::size_t>(a.home)];
      a.pause_left = s.waypoints[a.waypoint].wait_ticks;
      ++a.waypoint;
      if (a.waypoint < s.waypoints.size()) {
        a.target = s.waypoints[a.waypoint].position;
      }
    } else {
      a.pause_left = pause(rng_);
      a.target = sample_point(a.home);
      a.speed = speed(rng_);
    }
  }
}

std::vector<Pedestrian> PedestrianModel::visible() const {
  std::vector<Pedestrian> out;
  for (const auto& a : agents_) {
    if (a.active) {
      out.push_back(a.body);
    }
  }
  return out;
}

nlohmann::json PedestrianModel::save() const {
  std::ostringstream rng;
  rng << rng_;
  auto list = nlohmann::json::array();
  for (const auto& a : agents_) {
    list.push_back({{"id", raw(a.body.id)},
                    {"position", vec(a.body.position)},
                    {"velocity", vec(a.body.velocity)},
                    {"radius", a.body.radius},
                    {"speed", a.speed},
                    {"target", vec(a.target)},
                    {"pause_left", a.pause_left},
                    {"home", a.home},
                    {"scripted", a.scripted},
                    {"active", a.active},
                    {"waypoint", a.waypoint}});
  }
  return {{"rng", rng.str()}, {"agents", list}};
}

void PedestrianModel::restore(const nlohmann::json& j) {
  std::istringstream rng(j.at("rng").get<std::string>());
  rng >> rng_;
  agents_.clear();
  for (const auto& e : j.at("agents")) {
    PedestrianAgent a;
    a.body.id = PedestrianId{e.at("id").get<std::uint32_t>()};
    a.body.position = vec(e.at("position"));
    a.body.velocity = vec(e.at("velocity"));
    a.body.radius = e.at("radius").get<double>();
    a.speed = e.at("speed").get<double>();
    a.target = vec(e.at("target"));
    a.pause_left = e.at("pause_left").get<int>();
    a.home = e.at("home").get<int>();
    a.scripted = e.at("scripted").get<bool>();
    a.active = e.at("active").get<bool>();
    a.waypoint = e.at("waypoint").get<std::size_t>();
    agents_.push_back(a);
  }
}

}  // namespace ixda
