#include "ixda/net.hpp"

#include <sodium.h>

#include <bit>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace ixda {

using nlohmann::json;

namespace {

constexpr std::uint8_t kMagic[4] = {'I', 'X', 'D', 'A'};
constexpr std::uint8_t kWireVersion = 1;

void ensure_sodium() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) {
    throw std::runtime_error("libsodium initialisation failed");
  }
}

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void bytes(const std::vector<std::uint8_t>& b) {
    u32(static_cast<std::uint32_t>(b.size()));
    buf_.insert(buf_.end(), b.begin(), b.end());
  }
  std::vector<std::uint8_t>& buf() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) {
      throw std::invalid_argument("truncated message");
    }
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

std::uint8_t health_bits(const HealthStatus& h) {
  return static_cast<std::uint8_t>((h.brake_primary_ok ? 1 : 0) | (h.brake_secondary_ok ? 2 : 0) |
                                   (h.power_ok ? 4 : 0) | (h.aodca_ok ? 8 : 0));
}

HealthStatus health_from_bits(std::uint8_t b) {
  return {(b & 1) != 0, (b & 2) != 0, (b & 4) != 0, (b & 8) != 0};
}

void write_pose(Writer& w, const Pose& p) {
  w.f64(p.x);
  w.f64(p.y);
  w.f64(p.heading);
}

Pose read_pose(Reader& r) {
  Pose p;
  p.x = r.f64();
  p.y = r.f64();
  p.heading = r.f64();
  return p;
}

struct PayloadWriter {
  Writer& w;
  void operator()(const Trajectory& t) const {
    w.i64(t.issued_tick);
    w.u32(static_cast<std::uint32_t>(t.horizon_ticks));
    w.u32(static_cast<std::uint32_t>(t.points.size()));
    for (const auto& p : t.points) {
      write_pose(w, p.pose);
      w.f64(p.target_speed);
      w.u32(static_cast<std::uint32_t>(p.tick_offset));
    }
  }
  void operator()(const EmergencyStopPayload& p) const { w.str(p.reason); }
  void operator()(const StationPayload& p) const {
    w.u8(p.enter ? 1 : 0);
    w.str(p.zone_id);
  }
  void operator()(const StateReport& r) const {
    write_pose(w, r.pose);
    w.f64(r.speed);
    w.f64(r.accel);
    w.u8(static_cast<std::uint8_t>(r.mode));
    w.u8(health_bits(r.health));
    w.i64(r.last_traj_tick);
    w.i64(r.active_issued_tick);
    w.u8(static_cast<std::uint8_t>(r.lights));
    w.u8(static_cast<std::uint8_t>(r.doors));
    w.u32(static_cast<std::uint32_t>(r.warnings.size()));
    for (const auto& s : r.warnings) w.str(s);
    w.f64(r.aodca_nearest);
  }
  void operator()(const OnboardRequestPayload& p) const {
    w.u32(static_cast<std::uint32_t>(p.capabilities.size()));
    for (const auto& s : p.capabilities) w.str(s);
  }
  void operator()(const OnboardAckPayload& p) const {
    w.u8(p.accepted ? 1 : 0);
    w.str(p.reason);
  }
  void operator()(const EstopReleasePayload&) const {}
  void operator()(const HazardClearPayload& p) const { w.str(p.event); }
};

Payload read_payload(MessageKind kind, Reader& r) {
  switch (kind) {
    case MessageKind::TrajectoryUpdate: {
      Trajectory t;
      t.issued_tick = r.i64();
      t.horizon_ticks = static_cast<int>(r.u32());
      const std::uint32_t n = r.u32();
      for (std::uint32_t i = 0; i < n; ++i) {
        TrajectoryPoint p;
        p.pose = read_pose(r);
        p.target_speed = r.f64();
        p.tick_offset = static_cast<int>(r.u32());
        t.points.push_back(p);
      }
      return t;
    }
    case MessageKind::EmergencyStop: return EmergencyStopPayload{r.str()};
    case MessageKind::StationCommand: {
      StationPayload p;
      p.enter = r.u8() != 0;
      p.zone_id = r.str();
      return p;
    }
    case MessageKind::VehicleStateReport: {
      StateReport s;
      s.pose = read_pose(r);
      s.speed = r.f64();
      s.accel = r.f64();
      s.mode = static_cast<DriveMode>(r.u8());
      s.health = health_from_bits(r.u8());
      s.last_traj_tick = r.i64();
      s.active_issued_tick = r.i64();
      s.lights = static_cast<Lights>(r.u8());
      s.doors = static_cast<Doors>(r.u8());
      const std::uint32_t n = r.u32();
      for (std::uint32_t i = 0; i < n; ++i) s.warnings.push_back(r.str());
      s.aodca_nearest = r.f64();
      return s;
    }
    case MessageKind::OnboardRequest: {
      OnboardRequestPayload p;
      const std::uint32_t n = r.u32();
      for (std::uint32_t i = 0; i < n; ++i) p.capabilities.push_back(r.str());
      return p;
    }
    case MessageKind::OnboardAck: {
      OnboardAckPayload p;
      p.accepted = r.u8() != 0;
      p.reason = r.str();
      return p;
    }
    case MessageKind::EstopRelease: return EstopReleasePayload{};
    case MessageKind::HazardClear: return HazardClearPayload{r.str()};
  }
  throw std::invalid_argument("unknown message kind");
}

}  // namespace

const char* to_string(MessageKind k) {
  switch (k) {
    case MessageKind::TrajectoryUpdate: return "TrajectoryUpdate";
    case MessageKind::EmergencyStop: return "EmergencyStop";
    case MessageKind::StationCommand: return "StationCommand";
    case MessageKind::VehicleStateReport: return "VehicleStateReport";
    case MessageKind::OnboardRequest: return "OnboardRequest";
    case MessageKind::OnboardAck: return "OnboardAck";
    case MessageKind::EstopRelease: return "EstopRelease";
    case MessageKind::HazardClear: return "HazardClear";
  }
  return "?";
}

MessageKind Message::kind() const { return static_cast<MessageKind>(payload.index() + 1); }

StateReport make_report(const VehicleState& v, double aodca_nearest) {
  StateReport r;
  r.pose = v.pose;
  r.speed = v.speed;
  r.accel = v.accel;
  r.mode = v.mode;
  r.health = v.health;
  r.last_traj_tick = v.last_traj_tick;
  r.active_issued_tick = v.active_traj ? v.active_traj->issued_tick : -1;
  r.lights = v.lights;
  r.doors = v.doors;
  r.warnings = v.warnings;
  r.aodca_nearest = aodca_nearest;
  return r;
}

std::vector<std::uint8_t> serialize(const Message& msg) {
  Writer body;
  std::visit(PayloadWriter{body}, msg.payload);
  Writer w;
  for (auto b : kMagic) w.u8(b);
  w.u8(kWireVersion);
  w.u8(static_cast<std::uint8_t>(msg.kind()));
  w.str(msg.sender);
  w.str(msg.recipient);
  w.i64(msg.sent_tick);
  w.bytes(body.buf());
  return std::move(w.buf());
}

Message deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  for (auto b : kMagic) {
    if (r.u8() != b) {
      throw std::invalid_argument("bad magic");
    }
  }
  if (r.u8() != kWireVersion) {
    throw std::invalid_argument("unsupported wire version");
  }
  const std::uint8_t kind = r.u8();
  if (kind < 1 || kind > 8) {
    throw std::invalid_argument("unknown message kind");
  }
  Message m;
  m.sender = r.str();
  m.recipient = r.str();
  m.sent_tick = r.i64();
  if (r.u32() != r.remaining()) {
    throw std::invalid_argument("payload length mismatch");
  }
  m.payload = read_payload(static_cast<MessageKind>(kind), r);
  if (!r.done()) {
    throw std::invalid_argument("trailing bytes after payload");
  }
  return m;
}

AuthKey derive_key(std::uint64_t seed, const std::string& endpoint) {
  ensure_sodium();
  std::uint8_t master[crypto_generichash_KEYBYTES];
  std::memset(master, 0, sizeof master);
  for (int i = 0; i < 8; ++i) master[i] = static_cast<std::uint8_t>(seed >> (8 * i));
  const std::string label = "ixda-v2i-key:" + endpoint;
  AuthKey key{};
  crypto_generichash(key.data(), key.size(), reinterpret_cast<const unsigned char*>(label.data()),
                     label.size(), master, sizeof master);
  return key;
}

AuthTag compute_tag(const Message& msg, const AuthKey& key) {
  ensure_sodium();
  const auto bytes = serialize(msg);
  AuthTag tag{};
  crypto_generichash(tag.data(), tag.size(), bytes.data(), bytes.size(), key.data(), key.size());
  return tag;
}

void sign(Message& msg, const AuthKey& key) { msg.auth_tag = compute_tag(msg, key); }

bool verify(const Message& msg, const AuthKey& key) {
  const AuthTag expect = compute_tag(msg, key);
  return sodium_memcmp(expect.data(), msg.auth_tag.data(), expect.size()) == 0;
}

json to_json(const Trajectory& t) {
  json pts = json::array();
  for (const auto& p : t.points) {
    pts.push_back({p.pose.x, p.pose.y, p.pose.heading, p.target_speed, p.tick_offset});
  }
  return {{"issued_tick", t.issued_tick}, {"horizon_ticks", t.horizon_ticks}, {"points", pts}};
}

Trajectory trajectory_from_json(const json& j) {
  Trajectory t;
  t.issued_tick = j.at("issued_tick").get<Tick>();
  t.horizon_ticks = j.at("horizon_ticks").get<int>();
  for (const auto& p : j.at("points")) {
    t.points.push_back({{p[0].get<double>(), p[1].get<double>(), p[2].get<double>()},
                        p[3].get<double>(),
                        p[4].get<int>()});
  }
  return t;
}

json to_json(const StateReport& r) {
  return {{"pose", {r.pose.x, r.pose.y, r.pose.heading}},
          {"speed", r.speed},
          {"accel", r.accel},
          {"mode", to_string(r.mode)},
          {"health", health_bits(r.health)},
          {"last_traj_tick", r.last_traj_tick},
          {"active_issued_tick", r.active_issued_tick},
          {"lights", to_string(r.lights)},
          {"doors", to_string(r.doors)},
          {"warnings", r.warnings},
          {"aodca_nearest", r.aodca_nearest}};
}

json to_json(const Message& msg) {
  json payload = std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Trajectory>) {
          return to_json(p);
        } else if constexpr (std::is_same_v<T, EmergencyStopPayload>) {
          return {{"reason", p.reason}};
        } else if constexpr (std::is_same_v<T, StationPayload>) {
          return {{"enter", p.enter}, {"zone", p.zone_id}};
        } else if constexpr (std::is_same_v<T, StateReport>) {
          return to_json(p);
        } else if constexpr (std::is_same_v<T, OnboardRequestPayload>) {
          return {{"capabilities", p.capabilities}};
        } else if constexpr (std::is_same_v<T, OnboardAckPayload>) {
          return {{"accepted", p.accepted}, {"reason", p.reason}};
        } else if constexpr (std::is_same_v<T, HazardClearPayload>) {
          return {{"event", p.event}};
        } else {
          return json::object();
        }
      },
      msg.payload);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string tag;
  for (auto b : msg.auth_tag) {
    tag += kHex[b >> 4];
    tag += kHex[b & 15];
  }
  return {{"kind", to_string(msg.kind())},
          {"sender", msg.sender},
          {"recipient", msg.recipient},
          {"sent_tick", msg.sent_tick},
          {"payload", payload},
          {"tag", tag}};
}

std::string link_name(Direction dir, const std::string& vehicle) {
  return (dir == Direction::Down ? "down:" : "up:") + vehicle;
}

bool selector_matches(const std::string& selector, const std::string& link) {
  if (selector == "*" || selector == link) {
    return true;
  }
  const auto colon = link.find(':');
  return colon != std::string::npos && link.compare(colon + 1, std::string::npos, selector) == 0;
}

ChannelModel::ChannelModel(ChannelConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {}

double ChannelModel::uniform01() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

std::optional<Tick> ChannelModel::send(const Message& msg, Direction dir, Tick now) {
  const std::string vehicle = dir == Direction::Down ? msg.recipient : msg.sender;
  const std::string link = link_name(dir, vehicle);
  double drop = cfg_.drop_probability;
  int jitter = cfg_.jitter_ticks;
  for (const auto& imp : impairments_) {
    if (!selector_matches(imp.selector, link)) {
      continue;
    }
    if (imp.disconnect) {
      return std::nullopt;
    }
    drop = std::max(drop, imp.drop_probability);
    jitter = std::max(jitter, imp.jitter_ticks);
  }
  if (drop > 0.0 && uniform01() < drop) {
    return std::nullopt;
  }
  Tick at = now + (dir == Direction::Down ? cfg_.down_delay_ticks : cfg_.up_delay_ticks);
  if (jitter > 0) {
    at += static_cast<Tick>(rng_() % static_cast<std::uint64_t>(jitter + 1));
  }
  auto& q = links_[link];
  if (!q.empty()) {
    at = std::max(at, q.back().deliver_tick);
  }
  q.push_back({at, msg});
  return at;
}

std::vector<Message> ChannelModel::deliver_due(Tick now, Direction dir) {
  const std::string prefix = dir == Direction::Down ? "down:" : "up:";
  std::vector<Message> out;
  for (auto& [link, q] : links_) {
    if (link.rfind(prefix, 0) != 0) {
      continue;
    }
    while (!q.empty() && q.front().deliver_tick <= now) {
      out.push_back(std::move(q.front().msg));
      q.pop_front();
    }
  }
  return out;
}

std::size_t ChannelModel::in_flight() const {
  std::size_t n = 0;
  for (const auto& [_, q] : links_) n += q.size();
  return n;
}

namespace {

std::string to_hex(const std::vector<std::uint8_t>& b) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(b.size() * 2);
  for (auto x : b) {
    s += kHex[x >> 4];
    s += kHex[x & 15];
  }
  return s;
}

std::vector<std::uint8_t> from_hex(const std::string& s) {
  std::vector<std::uint8_t> b;
  auto nib = [](char c) { return c <= '9' ? c - '0' : c - 'a' + 10; };
  for (std::size_t i = 0; i + 1 < s.size(); i += 2) {
    b.push_back(static_cast<std::uint8_t>(nib(s[i]) << 4 | nib(s[i + 1])));
  }
  return b;
}

}  // namespace

json message_to_json_hex(const Message& msg) {
  std::vector<std::uint8_t> tag(msg.auth_tag.begin(), msg.auth_tag.end());
  return json::array({to_hex(serialize(msg)), to_hex(tag)});
}

Message message_from_json_hex(const json& j) {
  Message m = deserialize(from_hex(j.at(0).get<std::string>()));
  const auto tag = from_hex(j.at(1).get<std::string>());
  if (tag.size() != m.auth_tag.size()) {
    throw std::invalid_argument("bad auth tag length");
  }
  std::copy(tag.begin(), tag.end(), m.auth_tag.begin());
  return m;
}

json ChannelModel::save() const {
  std::ostringstream rng;
  rng << rng_;
  json links = json::object();
  for (const auto& [link, q] : links_) {
    json arr = json::array();
    for (const auto& p : q) {
      std::vector<std::uint8_t> tag(p.msg.auth_tag.begin(), p.msg.auth_tag.end());
      arr.push_back({p.deliver_tick, to_hex(serialize(p.msg)), to_hex(tag)});
    }
    links[link] = arr;
  }
  json imps = json::array();
  for (const auto& i : impairments_) {
    imps.push_back({i.selector, i.disconnect, i.drop_probability, i.jitter_ticks});
  }
  return {{"config",
           {cfg_.down_delay_ticks, cfg_.up_delay_ticks, cfg_.drop_probability, cfg_.jitter_ticks}},
          {"rng", rng.str()},
          {"impairments", imps},
          {"links", links}};
}

ChannelModel ChannelModel::restore(const json& j) {
  ChannelModel ch;
  const auto& c = j.at("config");
  ch.cfg_ = {c[0].get<int>(), c[1].get<int>(), c[2].get<double>(), c[3].get<int>()};
  std::istringstream rng(j.at("rng").get<std::string>());
  rng >> ch.rng_;
  for (const auto& i : j.at("impairments")) {
    ch.impairments_.push_back(
        {i[0].get<std::string>(), i[1].get<bool>(), i[2].get<double>(), i[3].get<int>()});
  }
  for (const auto& [link, arr] : j.at("links").items()) {
    auto& q = ch.links_[link];
    for (const auto& p : arr) {
      Message m = deserialize(from_hex(p[1].get<std::string>()));
      const auto tag = from_hex(p[2].get<std::string>());
      std::copy(tag.begin(), tag.end(), m.auth_tag.begin());
      q.push_back({p[0].get<Tick>(), std::move(m)});
    }
  }
  return ch;
}

}  // namespace ixda
