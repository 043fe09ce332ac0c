#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include "ixda/runner.hpp"
#include "support.hpp"

using namespace ixda;
using nlohmann::json;
namespace fs = std::filesystem;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kServeSeconds = 6.0;

/// `ixda serve` on an ephemeral port; terminated on destruction.
class Server {
 public:
  Server(const std::string& scenario, const fs::path& out) {
    int fds[2];
    REQUIRE(pipe(fds) == 0);
    pid_ = fork();
    REQUIRE(pid_ >= 0);
    if (pid_ == 0) {
      dup2(fds[1], STDOUT_FILENO);
      close(fds[0]);
      const std::string duration = std::to_string(kServeSeconds);
      execl(IXDA_CLI, IXDA_CLI, "serve", scenario.c_str(), "--bind", "127.0.0.1:0", "--duration", duration.c_str(),
            "--out", out.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(fds[1]);
    // First line: "serving <name> on <host>:<port>".
    std::string line;
    char c;
    while (read(fds[0], &c, 1) == 1 && c != '\n') line.push_back(c);
    close(fds[0]);
    REQUIRE(line.rfind("serving ", 0) == 0);
    port_ = line.substr(line.rfind(':') + 1);
  }
  ~Server() { stop(); }

  int stop() {
    if (pid_ <= 0) return exit_;
    kill(pid_, SIGTERM);
    int status = 0;
    waitpid(pid_, &status, 0);
    pid_ = 0;
    exit_ = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return exit_;
  }
  const std::string& port() const { return port_; }

 private:
  pid_t pid_ = 0;
  int exit_ = -1;
  std::string port_;
};

struct Reply {
  unsigned status;
  json body;
};

Reply request(const Server& s, http::verb verb, const std::string& target, const std::string& body = "") {
  asio::io_context ioc;
  beast::tcp_stream stream(ioc);
  stream.connect(tcp::resolver(ioc).resolve("127.0.0.1", s.port()));
  http::request<http::string_body> req{verb, target, 11};
  req.set(http::field::host, "127.0.0.1");
  req.set(http::field::content_type, "application/json");
  req.body() = body;
  req.prepare_payload();
  http::write(stream, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(stream, buf, res);
  beast::error_code ignored;
  stream.socket().shutdown(tcp::socket::shutdown_both, ignored);
  return {res.result_int(), json::parse(res.body())};
}

class WsClient {
 public:
  explicit WsClient(const Server& s) : ws_(ioc_) {
    asio::connect(ws_.next_layer(), tcp::resolver(ioc_).resolve("127.0.0.1", s.port()));
    ws_.handshake("127.0.0.1:" + s.port(), "/ws");
  }
  json next() {
    buf_.consume(buf_.size());
    ws_.read(buf_);
    return json::parse(beast::buffers_to_string(buf_.data()));
  }
  json next_of(const std::string& type) {
    for (;;) {
      json f = next();
      if (f["type"] == type) return f;
    }
  }
  void send(const json& cmd) { ws_.write(asio::buffer(cmd.dump())); }
  void close() { ws_.close(websocket::close_code::normal); }

 private:
  asio::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
  beast::flat_buffer buf_;
};

}  // namespace

TEST_CASE("live service") {
  const fs::path out = fs::temp_directory_path() / "ixda_test_serve";
  fs::remove_all(out);
  const std::string scenario = test::data_path("scenarios/ns_controlled.json");
  Server server(scenario, out);

  const auto health = request(server, http::verb::get, "/health");
  CHECK(health.status == 200);
  CHECK(health.body["status"] == "ok");
  CHECK(request(server, http::verb::post, "/health").status == 405);
  CHECK(request(server, http::verb::get, "/estop").status == 405);
  CHECK(request(server, http::verb::get, "/nowhere").status == 404);

  SUBCASE("rest commands") {
    const auto bad = request(server, http::verb::post, "/estop", "{not json");
    CHECK(bad.status == 400);
    CHECK(bad.body["accepted"] == false);
    const auto bad_token = request(server, http::verb::post, "/checkout",
                                   json{{"driver", "D1"}, {"token", "wrong"}, {"vehicle", "V1"}}.dump());
    CHECK(bad_token.status == 422);
    CHECK(bad_token.body["reason"] == "invalid driver credentials");
    CHECK(request(server, http::verb::post, "/checkin", json{{"driver", "D1"}, {"token", "tok-d1"}}.dump()).status ==
          422);
    const auto stop = request(server, http::verb::post, "/estop", json{{"target", "V2"}}.dump());
    CHECK(stop.status == 200);
    CHECK(stop.body["accepted"] == true);
    CHECK_FALSE(stop.body.contains("log"));
    CHECK(request(server, http::verb::post, "/release", json{{"target", "V2"}}.dump()).status == 200);
  }

  SUBCASE("snapshots, global e-stop and replay") {
    WsClient ws(server);
    // Rate over ten consecutive snapshots.
    ws.next_of("snapshot");
    const auto t0 = Clock::now();
    json last;
    for (int i = 0; i < 10; ++i) last = ws.next_of("snapshot");
    const double hz = 10.0 / std::chrono::duration<double>(Clock::now() - t0).count();
    CHECK(hz == doctest::Approx(10.0).epsilon(0.2));
    for (const char* key : {"tick", "vehicles", "pedestrians", "alerts", "sensor_health"}) {
      CHECK(last["snapshot"].contains(key));
    }

    ws.send("{oops");
    ws.send({{"kind", "estop"}});
    // Within two snapshots of the ack every vehicle shows EstopStop.
    int acks = 0;
    int after_ack = 0;
    bool all_stopped = false;
    while (!all_stopped && after_ack < 2) {
      const json f = ws.next();
      if (f["type"] == "ack") {
        CHECK(f["accepted"] == (acks == 1));
        ++acks;
        continue;
      }
      if (acks < 2) continue;
      ++after_ack;
      all_stopped = true;
      for (const auto& v : f["snapshot"]["vehicles"]) all_stopped &= v["mode"] == "EstopStop";
    }
    CHECK(all_stopped);
    ws.send({{"kind", "release"}, {"target", "*"}});
    CHECK(ws.next_of("ack")["accepted"] == true);
    ws.close();

    // Let the run finish, then replay the command log headlessly.
    json status;
    const auto give_up = Clock::now() + std::chrono::seconds(static_cast<int>(kServeSeconds) + 10);
    do {
      std::this_thread::sleep_for(std::chrono::milliseconds(200));
      status = request(server, http::verb::get, "/health").body;
    } while (status["finished"] != true && Clock::now() < give_up);
    REQUIRE(status["finished"] == true);
    CHECK(server.stop() == 0);

    const auto stem = out / "ns_controlled_serve_s1";
    auto doc = test::scenario_json("ns_controlled.json");
    doc["duration_s"] = kServeSeconds;
    std::ifstream log(stem.string() + ".commands.ndjson");
    std::string line;
    int logged = 0;
    while (std::getline(log, line)) {
      doc["events"].push_back(json::parse(line));
      ++logged;
    }
    CHECK(logged == 2);
    const auto replay = run_scenario(load_scenario(doc.dump()));
    CHECK(replay.trace_hash == status["trace_hash"]);
    std::ifstream trace(stem.string() + ".trace.ndjson", std::ios::binary);
    CHECK(TraceLog::read(trace).hash_hex() == replay.trace_hash);
  }
}
