#pragma once

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ixda/geometry.hpp"
#include "ixda/units.hpp"
#include "ixda/world.hpp"

namespace ixda {

enum class ObjectClass { Vehicle, Pedestrian, Unknown };
const char* to_string(ObjectClass c);

/// Ground-truth actor as the IX sensors would see it.
struct Actor {
  std::string id;
  ObjectClass cls = ObjectClass::Unknown;
  Vec2 position;
  Vec2 velocity;
  double radius = 0.3;
};

struct TrackedObject {
  std::string id;
  ObjectClass cls = ObjectClass::Unknown;
  Vec2 position;
  Vec2 velocity;
  Tick last_seen_tick = 0;
  double radius = 0.3;

  friend bool operator==(const TrackedObject&, const TrackedObject&) = default;
};

/// Ideal sensing inside coverage; empty when unhealthy.
std::vector<TrackedObject> ix_sense(const std::vector<Actor>& world, const std::vector<Polygon>& coverage,
                                    bool healthy, Tick now);

/// Positions for offsets 0..horizon per object id.
struct PredictionSet {
  std::map<std::string, std::vector<Vec2>> positions;
  int horizon = kHorizonTicks;
};

/// Constant-velocity extrapolation. `velocity_scale` != 1 models a corrupted
/// predictor (offset 0 stays the observed position).
PredictionSet predict(const std::vector<TrackedObject>& tracked, int horizon = static_cast<int>(kHorizonTicks),
                      double velocity_scale = 1.0);

struct OnboardingRecord {
  VehicleId vehicle{};
  std::set<std::string> capabilities;
  bool accepted = false;
  std::string reason;
};

class OnboardingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Accepted iff `declared` covers every required capability.
OnboardingRecord onboard(VehicleId id, const std::vector<std::string>& declared);

class OnboardingRegistry {
 public:
  /// Throws OnboardingError on a second attempt for the same vehicle.
  const OnboardingRecord& submit(VehicleId id, const std::vector<std::string>& declared);
  bool accepted(VehicleId id) const;
  const std::map<std::uint32_t, OnboardingRecord>& records() const { return records_; }
  void clear(VehicleId id) { records_.erase(raw(id)); }
  void restore(OnboardingRecord r) { records_[raw(r.vehicle)] = std::move(r); }

 private:
  std::map<std::uint32_t, OnboardingRecord> records_;
};

enum class OperationalHazard { Fire, Smoke, Flood, Earthquake, Accident };
const char* to_string(OperationalHazard h);
std::optional<OperationalHazard> operational_hazard_from_string(std::string_view s);

/// Depot-wide emergency protocol: raising broadcasts an e-stop and suspends
/// planning; clearing resumes planning on the following tick.
class HazardProtocol {
 public:
  /// True when this raise starts a new emergency (the caller broadcasts the e-stop).
  bool raise(OperationalHazard h, Tick now);
  /// True when an emergency was active.
  bool clear(Tick now);
  bool planning_suspended(Tick now) const;
  std::optional<OperationalHazard> active() const { return active_; }
  Tick cleared_tick() const { return cleared_tick_; }
  void restore(std::optional<OperationalHazard> active, Tick raised, Tick cleared) {
    active_ = active;
    raised_tick_ = raised;
    cleared_tick_ = cleared;
  }
  Tick raised_tick() const { return raised_tick_; }

 private:
  std::optional<OperationalHazard> active_;
  Tick raised_tick_ = -1;
  Tick cleared_tick_ = -1;
};

class BufferError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Ring of the newest `capacity` snapshots at consecutive ticks.
template <class Snapshot>
class RollingBuffer {
 public:
  explicit RollingBuffer(std::size_t capacity = static_cast<std::size_t>(kRollingBufferTicks))
      : capacity_(capacity) {}

  /// Throws BufferError unless snap.tick follows the newest tick.
  void push(Snapshot snap) {
    if (!ring_.empty() && snap.tick != ring_.back().tick + 1) {
      throw BufferError("snapshot ticks must be consecutive");
    }
    ring_.push_back(std::move(snap));
    while (ring_.size() > capacity_) {
      ring_.pop_front();
    }
  }

  /// Newest snapshot. Throws BufferError when empty.
  const Snapshot& restore() const {
    if (ring_.empty()) {
      throw BufferError("rolling buffer is empty");
    }
    return ring_.back();
  }

  std::size_t size() const { return ring_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return ring_.empty(); }
  const Snapshot& oldest() const { return ring_.front(); }
  const std::deque<Snapshot>& items() const { return ring_; }

 private:
  std::size_t capacity_;
  std::deque<Snapshot> ring_;
};

}  // namespace ixda
