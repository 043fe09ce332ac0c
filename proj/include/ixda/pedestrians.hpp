#pragma once

#include <random>
#include <vector>

#include "json.hpp"
#include "ixda/scenario.hpp"

namespace ixda {

/// What a pedestrian can see of a vehicle.
struct VehicleBody {
  Pose pose;
  double speed = 0.0;
};

struct PedestrianAgent {
  Pedestrian body;
  double speed = 1.0;
  Vec2 target;
  int pause_left = 0;
  /// Index into the walk areas, or into the scripted list for scripted agents.
  int home = 0;
  bool scripted = false;
  bool active = true;
  std::size_t waypoint = 0;

  friend bool operator==(const PedestrianAgent&, const PedestrianAgent&) = default;
};

/// Seeded waypoint walkers plus scripted walkers. No agent ever steps into
/// contact with a vehicle body; yielding agents also stay out of the path
/// a moving vehicle covers in the next few seconds.
class PedestrianModel {
 public:
  PedestrianModel(const ScenarioConfig& cfg, std::uint64_t seed);

  void step(Tick now, const std::vector<VehicleBody>& vehicles);

  const std::vector<PedestrianAgent>& agents() const { return agents_; }
  std::vector<Pedestrian> visible() const;

  nlohmann::json save() const;
  void restore(const nlohmann::json& j);

 private:
  Vec2 sample_point(int area);
  bool blocked(const PedestrianAgent& a, Vec2 from, Vec2 to, const std::vector<VehicleBody>& vehicles) const;

  PedestrianConfig cfg_;
  VehicleParams vehicle_;
  std::vector<Polygon> areas_;
  std::mt19937_64 rng_;
  std::vector<PedestrianAgent> agents_;
};

}  // namespace ixda
