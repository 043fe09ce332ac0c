#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "ixda/units.hpp"
#include "ixda/vehicle.hpp"

namespace ixda {

inline constexpr const char* kIxEndpoint = "IX";

enum class MessageKind : std::uint8_t {
  TrajectoryUpdate = 1,
  EmergencyStop = 2,
  StationCommand = 3,
  VehicleStateReport = 4,
  OnboardRequest = 5,
  OnboardAck = 6,
  EstopRelease = 7,
  HazardClear = 8,
};

const char* to_string(MessageKind k);

struct EmergencyStopPayload {
  std::string reason;
  friend bool operator==(const EmergencyStopPayload&, const EmergencyStopPayload&) = default;
};

struct StationPayload {
  bool enter = true;
  std::string zone_id;
  friend bool operator==(const StationPayload&, const StationPayload&) = default;
};

/// Upstream state report: the vehicle state minus its trajectory body.
struct StateReport {
  Pose pose;
  double speed = 0.0;
  double accel = 0.0;
  DriveMode mode = DriveMode::Idle;
  HealthStatus health;
  Tick last_traj_tick = 0;
  /// Issue tick of the trajectory being followed, -1 if none.
  Tick active_issued_tick = -1;
  Lights lights = Lights::Off;
  Doors doors = Doors::Closed;
  std::vector<std::string> warnings;
  /// Nearest AODCA return in metres; negative when nothing is in view.
  double aodca_nearest = -1.0;
  friend bool operator==(const StateReport&, const StateReport&) = default;
};

StateReport make_report(const VehicleState& v, double aodca_nearest);

struct OnboardRequestPayload {
  std::vector<std::string> capabilities;
  friend bool operator==(const OnboardRequestPayload&, const OnboardRequestPayload&) = default;
};

struct OnboardAckPayload {
  bool accepted = false;
  std::string reason;
  friend bool operator==(const OnboardAckPayload&, const OnboardAckPayload&) = default;
};

struct EstopReleasePayload {
  friend bool operator==(const EstopReleasePayload&, const EstopReleasePayload&) = default;
};

struct HazardClearPayload {
  std::string event;
  friend bool operator==(const HazardClearPayload&, const HazardClearPayload&) = default;
};

using Payload = std::variant<Trajectory, EmergencyStopPayload, StationPayload, StateReport,
                             OnboardRequestPayload, OnboardAckPayload, EstopReleasePayload,
                             HazardClearPayload>;

using AuthTag = std::array<std::uint8_t, 16>;
using AuthKey = std::array<std::uint8_t, 32>;

struct Message {
  std::string sender;
  std::string recipient;
  Tick sent_tick = 0;
  Payload payload;
  AuthTag auth_tag{};

  MessageKind kind() const;
  friend bool operator==(const Message&, const Message&) = default;
};

/// Canonical binary layout, tag excluded. See docs/wire-format.md.
std::vector<std::uint8_t> serialize(const Message& msg);
/// Inverse of serialize; throws std::invalid_argument on malformed input.
Message deserialize(const std::vector<std::uint8_t>& bytes);

AuthKey derive_key(std::uint64_t seed, const std::string& endpoint);
AuthTag compute_tag(const Message& msg, const AuthKey& key);
void sign(Message& msg, const AuthKey& key);
bool verify(const Message& msg, const AuthKey& key);

nlohmann::json to_json(const Message& msg);
nlohmann::json to_json(const Trajectory& t);
Trajectory trajectory_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StateReport& r);
/// [wire hex, tag hex]; lossless, used by snapshots.
nlohmann::json message_to_json_hex(const Message& msg);
Message message_from_json_hex(const nlohmann::json& j);

enum class Direction { Down, Up };

/// Link name: "down:V1" for IX to V1, "up:V1" for V1 to IX.
std::string link_name(Direction dir, const std::string& vehicle);

/// Matches "*", "V1" (both directions), or a full link name.
bool selector_matches(const std::string& selector, const std::string& link);

struct ChannelConfig {
  int down_delay_ticks = 1;
  int up_delay_ticks = 0;
  double drop_probability = 0.0;
  int jitter_ticks = 0;
  friend bool operator==(const ChannelConfig&, const ChannelConfig&) = default;
};

/// A time-limited channel fault on the links a selector matches.
struct Impairment {
  std::string selector;
  bool disconnect = false;
  double drop_probability = 0.0;
  int jitter_ticks = 0;
  friend bool operator==(const Impairment&, const Impairment&) = default;
};

/// Simulated V2I channel. Per-link FIFO; randomness comes only from its own stream.
class ChannelModel {
 public:
  ChannelModel() = default;
  ChannelModel(ChannelConfig cfg, std::uint64_t seed);

  /// Delivery tick, or nullopt when the message is dropped.
  std::optional<Tick> send(const Message& msg, Direction dir, Tick now);
  /// Messages due at `now` in one direction, ordered by link name then send order.
  std::vector<Message> deliver_due(Tick now, Direction dir);

  void set_impairments(std::vector<Impairment> active) { impairments_ = std::move(active); }
  const std::vector<Impairment>& impairments() const { return impairments_; }
  const ChannelConfig& config() const { return cfg_; }
  std::size_t in_flight() const;

  nlohmann::json save() const;
  static ChannelModel restore(const nlohmann::json& j);

 private:
  struct Pending {
    Tick deliver_tick = 0;
    Message msg;
  };

  double uniform01();

  ChannelConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<Impairment> impairments_;
  std::map<std::string, std::deque<Pending>> links_;
};

}  // namespace ixda
