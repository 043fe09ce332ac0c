#include "serve.hpp"

#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

#include "ixda/sim.hpp"

namespace ixda {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;
using nlohmann::json;

namespace {

constexpr auto kTickPeriod = std::chrono::milliseconds(100);
constexpr std::size_t kMaxQueuedFrames = 8;

std::string field(const json& cmd, const char* key) {
  const auto it = cmd.find(key);
  if (it == cmd.end() || it->is_null()) {
    return "";
  }
  if (!it->is_string()) {
    throw std::invalid_argument(std::string("'") + key + "' must be a string");
  }
  return it->get<std::string>();
}

}  // namespace

json apply_service_command(Simulation& sim, const json& cmd, bool& paused) {
  json reply = {{"accepted", false}, {"reason", ""}};
  try {
    if (!cmd.is_object()) {
      throw std::invalid_argument("command must be a JSON object");
    }
    const std::string kind = field(cmd, "kind");
    if (kind == "pause" || kind == "resume") {
      paused = kind == "pause";
      reply["accepted"] = true;
      return reply;
    }
    if (kind == "checkin" || kind == "checkout") {
      const std::string vehicle = cmd.contains("vehicle") ? field(cmd, "vehicle") : field(cmd, "target");
      const std::string driver = field(cmd, "driver");
      const std::string token = field(cmd, "token");
      const Tick tick = sim.tick();
      const CheckResult r = kind == "checkin" ? sim.checkin(driver, token, vehicle) : sim.checkout(driver, token, vehicle);
      reply["accepted"] = r.accepted;
      reply["reason"] = r.reason;
      reply["log"] = {{"tick", tick}, {"kind", kind}, {"driver", driver}, {"token", token}, {"target", vehicle}};
      return reply;
    }
    Command c;
    if (kind == "estop") {
      c.kind = cmd.contains("button") ? EventKind::EstopPress : EventKind::Estop;
    } else if (kind == "estop_press") {
      c.kind = EventKind::EstopPress;
    } else if (kind == "release") {
      c.kind = EventKind::Release;
    } else if (kind == "hazard") {
      c.kind = EventKind::Hazard;
    } else if (kind == "hazard_clear") {
      c.kind = EventKind::HazardClear;
    } else {
      throw std::invalid_argument("unknown command kind '" + kind + "'");
    }
    c.target = field(cmd, "target");
    if (c.target.empty() && (c.kind == EventKind::Estop || c.kind == EventKind::Release)) {
      c.target = "*";
    }
    c.button = field(cmd, "button");
    c.event = field(cmd, "event");
    const Tick tick = sim.tick();
    if (const auto err = sim.submit(c)) {
      reply["reason"] = *err;
      return reply;
    }
    reply["accepted"] = true;
    json log = {{"tick", tick}, {"kind", to_string(c.kind)}};
    if (!c.target.empty()) log["target"] = c.target;
    if (!c.button.empty()) log["button"] = c.button;
    if (!c.event.empty()) log["event"] = c.event;
    reply["log"] = log;
  } catch (const std::exception& e) {
    reply["accepted"] = false;
    reply["reason"] = e.what();
  }
  return reply;
}

namespace {

class WsSession;

/// Shared between the network thread and the simulation thread. The two
/// queues below are the only crossing points.
class Hub {
 public:
  using Reply = std::function<void(json)>;

  explicit Hub(asio::io_context& ioc) : ioc_(ioc) {}

  // Network thread.
  void enqueue(json cmd, Reply reply) {
    std::lock_guard lock(mu_);
    inbound_.push_back({std::move(cmd), std::move(reply)});
  }
  void join(const std::shared_ptr<WsSession>& s) { sessions_.insert(s); }
  void leave(const std::shared_ptr<WsSession>& s) { sessions_.erase(s); }
  std::size_t clients() const { return sessions_.size(); }

  // Simulation thread.
  std::vector<std::pair<json, Reply>> drain() {
    std::lock_guard lock(mu_);
    std::vector<std::pair<json, Reply>> out(std::make_move_iterator(inbound_.begin()),
                                            std::make_move_iterator(inbound_.end()));
    inbound_.clear();
    return out;
  }
  void publish(std::string frame);
  void set_status(json s) {
    std::lock_guard lock(mu_);
    status_ = std::move(s);
  }
  json status() const {
    std::lock_guard lock(mu_);
    return status_;
  }

  asio::io_context& ioc() { return ioc_; }

 private:
  asio::io_context& ioc_;
  mutable std::mutex mu_;
  std::deque<std::pair<json, Reply>> inbound_;
  std::set<std::shared_ptr<WsSession>> sessions_;
  json status_ = json::object();
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, Hub& hub) : ws_(std::move(socket)), hub_(hub) {}

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) {
        return;
      }
      self->hub_.join(self);
      self->read();
    });
  }

  void send(std::shared_ptr<const std::string> frame) {
    // Slow clients lose old snapshots rather than stall the feed.
    if (queue_.size() >= kMaxQueuedFrames) {
      queue_.erase(queue_.begin() + 1);
    }
    queue_.push_back(std::move(frame));
    if (queue_.size() == 1) {
      write();
    }
  }

 private:
  void read() {
    ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->hub_.leave(self);
        return;
      }
      const std::string text = beast::buffers_to_string(self->buf_.data());
      self->buf_.consume(self->buf_.size());
      json cmd = json::parse(text, nullptr, false);
      if (cmd.is_discarded()) {
        self->send(std::make_shared<const std::string>(
            json{{"type", "ack"}, {"accepted", false}, {"reason", "malformed JSON"}}.dump()));
      } else {
        std::weak_ptr<WsSession> weak = self;
        self->hub_.enqueue(std::move(cmd), [weak, &ioc = self->hub_.ioc()](json reply) {
          asio::post(ioc, [weak, reply = std::move(reply)]() mutable {
            if (auto s = weak.lock()) {
              reply["type"] = "ack";
              s->send(std::make_shared<const std::string>(reply.dump()));
            }
          });
        });
      }
      self->read();
    });
  }

  void write() {
    ws_.text(true);
    ws_.async_write(asio::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->hub_.leave(self);
        return;
      }
      self->queue_.erase(self->queue_.begin());
      if (!self->queue_.empty()) {
        self->write();
      }
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  Hub& hub_;
  beast::flat_buffer buf_;
  std::vector<std::shared_ptr<const std::string>> queue_;
};

void Hub::publish(std::string frame) {
  auto shared = std::make_shared<const std::string>(std::move(frame));
  asio::post(ioc_, [this, shared] {
    for (const auto& s : sessions_) {
      s->send(shared);
    }
  });
}

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, Hub& hub) : stream_(std::move(socket)), hub_(hub) {}

  void start() { read(); }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buf_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (!ec) {
        self->route();
      }
    });
  }

  void route() {
    if (websocket::is_upgrade(req_)) {
      if (req_.target() == "/ws") {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), hub_)->start(std::move(req_));
        return;
      }
      respond(http::status::not_found, {{"error", "no such endpoint"}});
      return;
    }
    const std::string target(req_.target());
    if (target == "/health") {
      if (req_.method() != http::verb::get) {
        respond(http::status::method_not_allowed, {{"error", "use GET"}});
        return;
      }
      json h = hub_.status();
      h["status"] = "ok";
      h["clients"] = hub_.clients();
      respond(http::status::ok, h);
      return;
    }
    static const std::set<std::string> kPosts = {"/checkin", "/checkout", "/estop", "/release"};
    if (!kPosts.contains(target)) {
      respond(http::status::not_found, {{"error", "no such endpoint"}});
      return;
    }
    if (req_.method() != http::verb::post) {
      respond(http::status::method_not_allowed, {{"error", "use POST"}});
      return;
    }
    json body = req_.body().empty() ? json::object() : json::parse(req_.body(), nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
      respond(http::status::bad_request, {{"accepted", false}, {"reason", "body must be a JSON object"}});
      return;
    }
    body["kind"] = target.substr(1);
    std::weak_ptr<HttpSession> weak = shared_from_this();
    hub_.enqueue(std::move(body), [weak, &ioc = hub_.ioc()](json reply) {
      asio::post(ioc, [weak, reply = std::move(reply)]() mutable {
        if (auto s = weak.lock()) {
          reply.erase("log");
          const bool ok = reply.at("accepted").get<bool>();
          s->respond(ok ? http::status::ok : http::status::unprocessable_entity, reply);
        }
      });
    });
    // Keep this session alive until the simulation replies.
    pending_ = shared_from_this();
  }

  void respond(http::status status, const json& body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::content_type, "application/json");
    res->keep_alive(req_.keep_alive());
    res->body() = body.dump() + "\n";
    res->prepare_payload();
    auto self = shared_from_this();
    pending_.reset();
    http::async_write(stream_, *res, [self, res](beast::error_code ec, std::size_t) {
      if (ec) {
        return;
      }
      if (res->keep_alive()) {
        self->read();
      } else {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      }
    });
  }

  beast::tcp_stream stream_;
  Hub& hub_;
  beast::flat_buffer buf_;
  http::request<http::string_body> req_;
  std::shared_ptr<HttpSession> pending_;
};

void accept_loop(tcp::acceptor& acceptor, Hub& hub) {
  acceptor.async_accept([&acceptor, &hub](beast::error_code ec, tcp::socket socket) {
    if (!ec) {
      std::make_shared<HttpSession>(std::move(socket), hub)->start();
    }
    if (acceptor.is_open()) {
      accept_loop(acceptor, hub);
    }
  });
}

std::pair<std::string, unsigned short> split_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) {
    throw std::invalid_argument("bind address must be host:port");
  }
  const int port = std::stoi(bind.substr(colon + 1));
  if (port < 0 || port > 65535) {
    throw std::invalid_argument("port out of range");
  }
  return {bind.substr(0, colon), static_cast<unsigned short>(port)};
}

}  // namespace

int serve(const ScenarioConfig& cfg, const std::string& bind, const std::string& out_dir) {
  const auto [host, port] = split_bind(bind);
  std::filesystem::create_directories(out_dir);
  const auto stem = std::filesystem::path(out_dir) / (cfg.name + "_serve_s" + std::to_string(cfg.seed));
  std::ofstream trace(stem.string() + ".trace.ndjson", std::ios::binary);
  std::ofstream commands(stem.string() + ".commands.ndjson", std::ios::binary);
  if (!trace || !commands) {
    throw std::runtime_error("cannot write under " + out_dir);
  }

  asio::io_context ioc{1};
  tcp::acceptor acceptor(ioc);
  const tcp::endpoint ep(asio::ip::make_address(host), port);
  acceptor.open(ep.protocol());
  acceptor.set_option(asio::socket_base::reuse_address(true));
  acceptor.bind(ep);
  acceptor.listen();
  const auto bound = acceptor.local_endpoint();
  std::cout << "serving " << cfg.name << " on " << bound.address().to_string() << ':' << bound.port() << std::endl;

  Hub hub(ioc);
  std::atomic<bool> stop{false};
  asio::signal_set signals(ioc, SIGINT, SIGTERM);
  signals.async_wait([&](beast::error_code, int) {
    stop = true;
    acceptor.close();
    ioc.stop();
  });
  accept_loop(acceptor, hub);

  std::thread sim_thread([&] {
    Simulation sim(cfg, {TraceVerbosity::Compact, &trace, true});
    bool paused = false;
    auto deadline = std::chrono::steady_clock::now();
    while (!stop) {
      for (auto& [cmd, reply] : hub.drain()) {
        json r = apply_service_command(sim, cmd, paused);
        if (r.contains("log")) {
          commands << r["log"].dump() << '\n' << std::flush;
        }
        reply(std::move(r));
      }
      const bool running = !paused && !sim.finished();
      if (running) {
        sim.step();
        if (sim.finished()) {
          sim.finish();
          trace.flush();
        }
        hub.publish(json{{"type", "snapshot"}, {"snapshot", sim.feed()}}.dump());
      }
      hub.set_status({{"tick", sim.tick()}, {"paused", paused}, {"finished", sim.finished()},
                      {"trace_hash", sim.trace().hash_hex()}});
      deadline += kTickPeriod;
      const auto now = std::chrono::steady_clock::now();
      if (now > deadline) {
        // Overrun: the clock slips, no tick is skipped.
        if (running) {
          std::cerr << "tick " << sim.tick() - 1 << " overran by "
                    << std::chrono::duration_cast<std::chrono::milliseconds>(now - deadline).count()
                    << " ms; clock slipped\n";
        }
        deadline = now;
      } else {
        std::this_thread::sleep_until(deadline);
      }
    }
    sim.finish();
  });

  ioc.run();
  stop = true;
  sim_thread.join();
  return 0;
}

}  // namespace ixda
