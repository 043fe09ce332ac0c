#include "ixda/infra.hpp"

#include <algorithm>

#include "ixda/scenario.hpp"

namespace ixda {

const char* to_string(ObjectClass c) {
  switch (c) {
    case ObjectClass::Vehicle: return "Vehicle";
    case ObjectClass::Pedestrian: return "Pedestrian";
    case ObjectClass::Unknown: return "Unknown";
  }
  return "?";
}

std::vector<TrackedObject> ix_sense(const std::vector<Actor>& world, const std::vector<Polygon>& coverage,
                                    bool healthy, Tick now) {
  std::vector<TrackedObject> out;
  if (!healthy) {
    return out;
  }
  for (const auto& a : world) {
    const bool seen = std::any_of(coverage.begin(), coverage.end(),
                                  [&](const Polygon& poly) { return contains(poly, a.position); });
    if (seen) {
      out.push_back({a.id, a.cls, a.position, a.velocity, now, a.radius});
    }
  }
  return out;
}

PredictionSet predict(const std::vector<TrackedObject>& tracked, int horizon, double velocity_scale) {
  PredictionSet set;
  set.horizon = horizon;
  for (const auto& o : tracked) {
    auto& pts = set.positions[o.id];
    pts.reserve(static_cast<std::size_t>(horizon) + 1);
    const Vec2 v = o.velocity * velocity_scale;
    for (int k = 0; k <= horizon; ++k) {
      pts.push_back(o.position + v * (k * kTickSeconds));
    }
  }
  return set;
}

OnboardingRecord onboard(VehicleId id, const std::vector<std::string>& declared) {
  OnboardingRecord r;
  r.vehicle = id;
  r.capabilities.insert(declared.begin(), declared.end());
  std::vector<std::string> missing;
  for (const auto& cap : kRequiredCapabilities) {
    if (!r.capabilities.contains(cap)) {
      missing.push_back(cap);
    }
  }
  r.accepted = missing.empty();
  if (!r.accepted) {
    r.reason = "missing capability";
    for (std::size_t i = 0; i < missing.size(); ++i) {
      r.reason += (i == 0 ? " " : ", ") + missing[i];
    }
  }
  return r;
}

const OnboardingRecord& OnboardingRegistry::submit(VehicleId id, const std::vector<std::string>& declared) {
  if (records_.contains(raw(id))) {
    throw OnboardingError(to_string(id) + " has already been onboarded");
  }
  return records_[raw(id)] = onboard(id, declared);
}

bool OnboardingRegistry::accepted(VehicleId id) const {
  const auto it = records_.find(raw(id));
  return it != records_.end() && it->second.accepted;
}

const char* to_string(OperationalHazard h) {
  switch (h) {
    case OperationalHazard::Fire: return "Fire";
    case OperationalHazard::Smoke: return "Smoke";
    case OperationalHazard::Flood: return "Flood";
    case OperationalHazard::Earthquake: return "Earthquake";
    case OperationalHazard::Accident: return "Accident";
  }
  return "?";
}

std::optional<OperationalHazard> operational_hazard_from_string(std::string_view s) {
  for (auto h : {OperationalHazard::Fire, OperationalHazard::Smoke, OperationalHazard::Flood,
                 OperationalHazard::Earthquake, OperationalHazard::Accident}) {
    if (s == to_string(h)) {
      return h;
    }
  }
  return std::nullopt;
}

bool HazardProtocol::raise(OperationalHazard h, Tick now) {
  const bool fresh = !active_.has_value();
  if (fresh) {
    raised_tick_ = now;
  }
  active_ = h;
  return fresh;
}

bool HazardProtocol::clear(Tick now) {
  if (!active_) {
    return false;
  }
  active_.reset();
  cleared_tick_ = now;
  return true;
}

bool HazardProtocol::planning_suspended(Tick now) const {
  return active_.has_value() || (cleared_tick_ >= 0 && now == cleared_tick_);
}

}  // namespace ixda
